"""Dictionary, TwoGrams and ThreeGrams collections over a line corpus.

Each builder runs on either backend: ``Backend.RECORDS`` chains
flat_map → map_to_pairs → reduce_by_key on raw records, ``Backend.TABLE``
encodes lines as typed rows and uses explode / group_by_count. Both return a
record collection of entry dataclasses with identical contents.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from operator import add

from minireduce.engine import RecordCollection
from minireduce.typed_table import TEXT, Array, TypedTable, encoder_for

__all__ = [
    "Backend",
    "COLLECTIONS",
    "DictionaryEntry",
    "ThreeGramEntry",
    "TwoGramEntry",
    "build_collection",
    "build_dictionary",
    "build_three_grams",
    "build_two_grams",
    "ngrams",
    "tokenize",
]


class Backend(Enum):
    RECORDS = "records"
    TABLE = "table"


# Letters, digits and apostrophes (ASCII and typographic) form tokens.
_TOKEN_RE = re.compile(r"(?:[^\W_]|['’])+")


def tokenize(line: str) -> list[str]:
    """Lowercased tokens; anything but a letter, digit or apostrophe separates."""
    return _TOKEN_RE.findall(line.lower())


def ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


@dataclass(frozen=True)
class DictionaryEntry:
    term: str
    freq: int
    chars: int


@dataclass(frozen=True)
class TwoGramEntry:
    w1: str
    w2: str
    freq: int


@dataclass(frozen=True)
class ThreeGramEntry:
    w1: str
    w2: str
    w3: str
    freq: int


_LINES = encoder_for([("line", TEXT)])


def _line_table(corpus: RecordCollection) -> TypedTable:
    return TypedTable.from_collection(corpus.map(lambda line: (line,)), _LINES)


def build_dictionary(corpus: RecordCollection, backend: Backend) -> RecordCollection:
    if backend is Backend.RECORDS:
        return (
            corpus.flat_map(tokenize)
            .map_to_pairs(lambda tok: (tok, 1))
            .reduce_by_key(add)
            .map(lambda kv: DictionaryEntry(kv[0], kv[1], len(kv[0])))
        )
    table = (
        _line_table(corpus)
        .with_column("term", Array(TEXT), lambda row: tokenize(row["line"]))
        .select(["term"])
        .explode("term")
        .group_by_count(["term"])
        .with_length_column("term", "chars")
    )
    return table.to_objects(DictionaryEntry)


def _build_grams(corpus: RecordCollection, backend: Backend, n: int, cls: type) -> RecordCollection:
    names = [f"w{i + 1}" for i in range(n)]
    if backend is Backend.RECORDS:
        return (
            corpus.flat_map(lambda line: ngrams(tokenize(line), n))
            .map_to_pairs(lambda gram: (gram, 1))
            .reduce_by_key(add)
            .map(lambda kv: cls(*kv[0], kv[1]))
        )
    table = (
        _line_table(corpus)
        .with_column("gram", Array(Array(TEXT)), lambda row: [list(g) for g in ngrams(tokenize(row["line"]), n)])
        .select(["gram"])
        .explode("gram")
        .split_array("gram", names)
    )
    return table.group_by_count(names).to_objects(cls)


def build_two_grams(corpus: RecordCollection, backend: Backend) -> RecordCollection:
    return _build_grams(corpus, backend, 2, TwoGramEntry)


def build_three_grams(corpus: RecordCollection, backend: Backend) -> RecordCollection:
    return _build_grams(corpus, backend, 3, ThreeGramEntry)


COLLECTIONS = {
    "Dictionary": build_dictionary,
    "TwoGrams": build_two_grams,
    "ThreeGrams": build_three_grams,
}


def build_collection(name: str, corpus: RecordCollection, backend: Backend) -> RecordCollection:
    try:
        builder = COLLECTIONS[name]
    except KeyError:
        raise ValueError(f"unknown collection {name!r}; expected one of {sorted(COLLECTIONS)}") from None
    return builder(corpus, backend)
