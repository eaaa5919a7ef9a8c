"""Bounded-memory ingestion of a nested JSON lexicon.

The input is one top-level JSON array of entry objects, potentially far larger
than memory. :class:`EntryStream` scans the file in fixed-size byte chunks,
tracking string/escape state and brace depth, and hands each complete entry
object to ``json.loads`` on its own. Only the current read chunk and the
current entry's bytes are ever buffered.

Scanning happens on raw bytes: every JSON structural character is ASCII and
UTF-8 continuation bytes never collide with ASCII, so offsets reported in
errors are true byte offsets.
"""

from __future__ import annotations

import json
import os
import random
import re
import time
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO

from minireduce.engine import JobContext
from minireduce.ngram import Backend
from minireduce.sink import DocumentSink
from minireduce.typed_table import INT64, TEXT, Array, TypedTable, encoder_for

__all__ = [
    "DOCUMENT_FIELDS",
    "EntryShapeError",
    "EntryStream",
    "IngestReport",
    "JsonParseError",
    "LexicalEntry",
    "Sense",
    "flatten_entry",
    "generate_lexicon",
    "ingest",
    "stream_entries",
]

DEFAULT_CHUNK_SIZE = 64 * 1024
DEFAULT_BATCH_SIZE = 2048

DOCUMENT_FIELDS = ("lemma", "pos", "sense_index", "gloss", "example_count", "form_count")


class JsonParseError(ValueError):
    def __init__(self, message: str, offset: int, path: str):
        self.offset = offset
        self.path = path
        super().__init__(f"{message} at byte offset {offset} ({path})")


class EntryShapeError(ValueError):
    def __init__(self, ordinal: int, message: str):
        self.ordinal = ordinal
        super().__init__(f"entry {ordinal}: {message}")


@dataclass(frozen=True)
class Sense:
    gloss: str
    examples: tuple[str, ...] = ()


@dataclass(frozen=True)
class LexicalEntry:
    lemma: str
    pos: str
    senses: tuple[Sense, ...] = ()
    forms: tuple[str, ...] = ()

    @classmethod
    def from_json(cls, obj: Any, ordinal: int) -> LexicalEntry:
        def fail(msg: str) -> EntryShapeError:
            return EntryShapeError(ordinal, msg)

        if not isinstance(obj, dict):
            raise fail(f"expected an object, got {type(obj).__name__}")
        lemma = obj.get("lemma")
        if not isinstance(lemma, str) or not lemma:
            raise fail("'lemma' must be a non-empty string")
        pos = obj.get("pos")
        if not isinstance(pos, str):
            raise fail("'pos' must be a string")
        senses_raw = obj.get("senses", [])
        forms = obj.get("forms", [])
        if not isinstance(senses_raw, list):
            raise fail("'senses' must be an array")
        if not isinstance(forms, list) or not all(isinstance(f, str) for f in forms):
            raise fail("'forms' must be an array of strings")
        senses = []
        for i, s in enumerate(senses_raw):
            if not isinstance(s, dict) or not isinstance(s.get("gloss"), str):
                raise fail(f"senses[{i}] must be an object with a string 'gloss'")
            examples = s.get("examples", [])
            if not isinstance(examples, list) or not all(isinstance(e, str) for e in examples):
                raise fail(f"senses[{i}].examples must be an array of strings")
            senses.append(Sense(s["gloss"], tuple(examples)))
        return cls(lemma, pos, tuple(senses), tuple(forms))

    def to_json(self) -> dict[str, Any]:
        return {
            "lemma": self.lemma,
            "pos": self.pos,
            "senses": [{"gloss": s.gloss, "examples": list(s.examples)} for s in self.senses],
            "forms": list(self.forms),
        }


_WS = b" \t\r\n"
_STRUCT_RE = re.compile(rb'[{}\[\]"]')
_STRING_END_RE = re.compile(rb'["\\]')


class EntryStream:
    """Pull-based iterator over the entry objects of a top-level JSON array.

    ``peak_buffer_bytes`` records the largest combined size of the read chunk
    and the partially assembled entry seen so far.
    """

    def __init__(self, fh: BinaryIO, *, chunk_size: int = DEFAULT_CHUNK_SIZE, skip_malformed: bool = False):
        self._fh = fh
        self._chunk_size = chunk_size
        self.skip_malformed = skip_malformed
        self.entries_read = 0
        self.skipped = 0
        self.peak_buffer_bytes = 0

    def _note(self, size: int) -> None:
        if size > self.peak_buffer_bytes:
            self.peak_buffer_bytes = size

    def __iter__(self) -> Iterator[LexicalEntry]:
        for ordinal, raw, start in self._raw_entries():
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise JsonParseError(exc.msg, start + exc.pos, f"$[{ordinal}]") from None
            except UnicodeDecodeError as exc:
                raise JsonParseError(f"invalid UTF-8 ({exc.reason})", start + exc.start, f"$[{ordinal}]") from None
            try:
                entry = LexicalEntry.from_json(obj, ordinal)
            except EntryShapeError:
                if not self.skip_malformed:
                    raise
                self.skipped += 1
                continue
            self.entries_read += 1
            yield entry

    def _raw_entries(self) -> Iterator[tuple[int, bytes, int]]:
        # States: 0 before '[', 1 expecting element or ']', 2 inside an element,
        # 3 expecting ',' or ']', 4 after ']' (only whitespace allowed),
        # 5 expecting an element after ','.
        state = 0
        depth = 0
        in_string = False
        escaped = False
        entry = bytearray()
        entry_start = 0
        ordinal = 0
        offset = 0  # absolute offset of chunk[0]
        while True:
            chunk = self._fh.read(self._chunk_size)
            if not chunk:
                break
            n = len(chunk)
            i = 0
            while i < n:
                if state == 2:
                    seg_start = i
                    done = False
                    while i < n:
                        if escaped:
                            escaped = False
                            i += 1
                            continue
                        if in_string:
                            m = _STRING_END_RE.search(chunk, i)
                            if m is None:
                                i = n
                                break
                            i = m.end()
                            if m.group() == b"\\":
                                escaped = True
                            else:
                                in_string = False
                            continue
                        m = _STRUCT_RE.search(chunk, i)
                        if m is None:
                            i = n
                            break
                        c = m.group()
                        i = m.end()
                        if c == b'"':
                            in_string = True
                        elif c in b"{[":
                            depth += 1
                        else:
                            depth -= 1
                            if depth == 0:
                                done = True
                                break
                    entry += chunk[seg_start:i]
                    self._note(len(entry) + n)
                    if done:
                        yield ordinal, bytes(entry), entry_start
                        ordinal += 1
                        entry = bytearray()
                        state = 3
                    continue
                b = chunk[i]
                if b in _WS:
                    i += 1
                    continue
                pos = offset + i
                if state == 0:
                    if b != 0x5B:  # '['
                        raise JsonParseError("expected '[' opening the lexicon array", pos, "$")
                    state = 1
                elif state in (1, 5):
                    if b == 0x5D and state == 1:  # ']'
                        state = 4
                    elif b == 0x7B:  # '{'
                        state = 2
                        depth = 0
                        entry_start = pos
                        self._note(n)
                        continue  # re-scan the '{' in element mode
                    else:
                        raise JsonParseError("expected an entry object", pos, f"$[{ordinal}]")
                elif state == 3:
                    if b == 0x2C:  # ','
                        state = 5
                    elif b == 0x5D:
                        state = 4
                    else:
                        raise JsonParseError("expected ',' or ']' after entry", pos, f"$[{ordinal - 1}]")
                else:
                    raise JsonParseError("trailing data after the lexicon array", pos, "$")
                i += 1
            offset += n
        if state != 4:
            where = f"$[{ordinal}]" if state in (2, 5) else "$"
            raise JsonParseError("unexpected end of input", offset, where)


def stream_entries(
    path: str | os.PathLike[str],
    *,
    skip_malformed: bool = False,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> Iterator[LexicalEntry]:
    """Yield entries one at a time. See :class:`EntryStream` for counters."""
    with open(path, "rb") as fh:
        yield from EntryStream(fh, chunk_size=chunk_size, skip_malformed=skip_malformed)


def flatten_entry(e: LexicalEntry) -> list[dict[str, Any]]:
    """One flat document per sense; a senseless entry yields one stub (sense_index -1)."""
    forms = len(e.forms)
    if not e.senses:
        return [{"lemma": e.lemma, "pos": e.pos, "sense_index": -1, "gloss": "", "example_count": 0, "form_count": forms}]
    return [
        {
            "lemma": e.lemma,
            "pos": e.pos,
            "sense_index": i,
            "gloss": s.gloss,
            "example_count": len(s.examples),
            "form_count": forms,
        }
        for i, s in enumerate(e.senses)
    ]


# Senses travel as [gloss, *examples]: an Array(Array(Text)) column.
LEXICON_ENCODER = encoder_for([
    ("lemma", TEXT),
    ("pos", TEXT),
    ("senses", Array(Array(TEXT))),
    ("forms", Array(TEXT)),
])


def _entry_row(e: LexicalEntry) -> tuple[Any, ...]:
    return (e.lemma, e.pos, [[s.gloss, *s.examples] for s in e.senses], list(e.forms))


def _table_documents(ctx: JobContext, batch: list[LexicalEntry], partitions: int | None):
    table = TypedTable.from_objects(ctx, [_entry_row(e) for e in batch], LEXICON_ENCODER, partitions)
    return (
        table.explode("senses", index_column="sense_index", outer=True)
        .with_column("gloss", TEXT, lambda r: r["senses"][0] if r["senses"] else "")
        .with_column("example_count", INT64, lambda r: max(0, len(r["senses"]) - 1))
        .with_column("form_count", INT64, lambda r: len(r["forms"]))
        .select(list(DOCUMENT_FIELDS))
        .to_documents()
    )


@dataclass
class IngestReport:
    documents_written: int = 0
    entries_read: int = 0
    peak_buffer_bytes: int = 0
    skipped: int = 0
    compute_duration: float = 0.0
    write_duration: float = 0.0
    part_files: list[str] = field(default_factory=list)

    @property
    def document_count(self) -> int:
        return self.documents_written


def ingest(
    path: str | os.PathLike[str],
    backend: Backend,
    sink: DocumentSink,
    ctx: JobContext,
    *,
    skip_malformed: bool = False,
    batch_size: int = DEFAULT_BATCH_SIZE,
    partitions: int | None = None,
) -> IngestReport:
    """Stream the lexicon in batches, flatten each batch on the engine, write to ``sink``.

    Parsing time counts toward ``compute_duration``; only part-file and
    manifest I/O counts toward ``write_duration``.
    """
    report = IngestReport()
    part = 0
    with open(path, "rb") as fh:
        stream = EntryStream(fh, skip_malformed=skip_malformed)
        entries = iter(stream)
        while True:
            started = time.perf_counter()
            batch = []
            for entry in entries:
                batch.append(entry)
                if len(batch) >= batch_size:
                    break
            if not batch:
                report.compute_duration += time.perf_counter() - started
                break
            if backend is Backend.RECORDS:
                docs = ctx.parallelize(batch, partitions).flat_map(flatten_entry)
            else:
                docs = _table_documents(ctx, batch, partitions)
            parse_time = time.perf_counter() - started
            written = docs.write_to_sink(sink, finalize=False, part_offset=part)
            part += docs.partition_count
            report.documents_written += written.document_count
            report.compute_duration += parse_time + written.compute_duration
            report.write_duration += written.write_duration
            report.part_files.extend(written.part_files)
        report.entries_read = stream.entries_read
        report.skipped = stream.skipped
        report.peak_buffer_bytes = stream.peak_buffer_bytes
    started = time.perf_counter()
    sink.finalize()
    report.write_duration += time.perf_counter() - started
    return report


# Fixture generator

_SYLLABLES = [
    "ca", "sa", "ne", "to", "ri", "la", "mo", "ve", "di", "pa", "co", "re", "te", "lu", "ma",
    "no", "se", "gi", "chia", "glio", "sce", "zo", "ba", "fe", "rò", "tà", "è", "qua", "ghi", "stra",
]
_POS = ["s.m.", "s.f.", "agg.", "v.tr.", "v.intr.", "avv.", "prep.", "cong."]
_WORDS = [
    "il", "la", "di", "che", "un", "una", "per", "con", "non", "più", "come", "dove", "quando",
    "l'uso", "dell'acqua", "città", "perché", "così", "tempo", "casa", "modo", "parte", "luogo",
    "persona", "cosa", "senso", "figurato", "detto", "anche", "spec.", "ant.", "lett.", "fam.",
]


def _word(rng: random.Random) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))


def _phrase(rng: random.Random, lo: int, hi: int) -> str:
    return " ".join(rng.choice(_WORDS) if rng.random() < 0.6 else _word(rng) for _ in range(rng.randint(lo, hi)))


def generate_entry(rng: random.Random, max_senses: int = 4, max_examples: int = 3) -> dict[str, Any]:
    lemma = _word(rng)
    return {
        "lemma": lemma,
        "pos": rng.choice(_POS),
        "senses": [
            {"gloss": _phrase(rng, 3, 12), "examples": [_phrase(rng, 4, 14) for _ in range(rng.randint(0, max_examples))]}
            for _ in range(rng.randint(0, max_senses))
        ],
        "forms": [lemma + suffix for suffix in rng.sample(["i", "e", "a", "o", "he", "hi"], rng.randint(0, 4))],
    }


def generate_lexicon(
    path: str | os.PathLike[str],
    entries: int,
    seed: int,
    *,
    max_senses: int = 4,
    max_examples: int = 3,
    indent: int | None = None,
) -> int:
    """Write a deterministic lexicon of ``entries`` entries. Returns bytes written.

    Output is streamed entry by entry, so arbitrarily large fixtures can be
    produced in constant memory.
    """
    rng = random.Random(seed)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("[")
        for i in range(entries):
            fh.write("\n" if i == 0 else ",\n")
            fh.write(json.dumps(generate_entry(rng, max_senses, max_examples), ensure_ascii=False, indent=indent))
        fh.write("\n]\n")
    return path.stat().st_size
