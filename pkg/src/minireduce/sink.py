"""JSON Lines document collections on the local filesystem.

Layout::

    <root>/<db>/<collection>/part-00000.jsonl
    <root>/<db>/<collection>/manifest.json
    <root>/<db>/<collection>/_INCOMPLETE      (present until finalize)
"""

from __future__ import annotations

import json
import os
import re
import shutil
import threading
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

__all__ = [
    "CollectionConflictError",
    "CollectionManifest",
    "DocumentSink",
    "FinalizeError",
    "SerializationError",
    "SinkNameError",
    "dumps_document",
    "open_collection",
    "read_collection",
]

_NAME_RE = re.compile(r"[A-Za-z0-9_]+")
MANIFEST_NAME = "manifest.json"
INCOMPLETE_MARKER = "_INCOMPLETE"
# json.dumps with non-default options builds a fresh encoder per call.
_JSON = json.JSONEncoder(ensure_ascii=False, separators=(",", ":"), allow_nan=False)


class SinkNameError(ValueError):
    pass


class CollectionConflictError(FileExistsError):
    pass


class SerializationError(TypeError):
    pass


class FinalizeError(RuntimeError):
    pass


def part_file_name(index: int) -> str:
    return f"part-{index:05d}.jsonl"


def dumps_document(doc: Mapping[str, Any]) -> str:
    """Canonical single-line JSON: insertion-order keys, no spaces, raw UTF-8."""
    if not isinstance(doc, Mapping):
        raise SerializationError(f"document must be a mapping, got {type(doc).__name__}")
    for key, value in doc.items():
        if not isinstance(key, str):
            raise SerializationError(f"document keys must be strings, got {key!r}")
        if value is not None and not isinstance(value, (str, int, float, bool)):
            raise SerializationError(
                f"document is not flat: field {key!r} holds {type(value).__name__}"
            )
    return _JSON.encode(doc)


@dataclass
class CollectionManifest:
    collection_name: str
    document_count: int
    part_files: list[str] = field(default_factory=list)
    completed: bool = False

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> CollectionManifest:
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


class DocumentSink:
    """A named collection inside a named database directory."""

    def __init__(self, db_name: str, collection_name: str, output_root: str | os.PathLike[str]):
        for label, name in (("database", db_name), ("collection", collection_name)):
            if not isinstance(name, str) or not _NAME_RE.fullmatch(name):
                raise SinkNameError(f"invalid {label} name {name!r}: must match [A-Za-z0-9_]+")
        self.db_name = db_name
        self.collection_name = collection_name
        self.output_root = Path(output_root)
        self._parts: set[str] = set()
        self._lock = threading.Lock()

    @property
    def path(self) -> Path:
        return self.output_root / self.db_name / self.collection_name

    def write_partition(self, partition_index: int, docs: Iterable[Mapping[str, Any]]) -> str:
        name = part_file_name(partition_index)
        lines = [dumps_document(doc) + "\n" for doc in docs]
        with open(self.path / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(lines)
        with self._lock:
            self._parts.add(name)
        return name

    def finalize(self) -> CollectionManifest:
        parts = sorted(self._parts)
        total = 0
        for name in parts:
            part = self.path / name
            if not part.is_file():
                raise FinalizeError(f"part file missing: {part}")
            with open(part, "rb") as fh:
                total += sum(1 for _ in fh)
        manifest = CollectionManifest(self.collection_name, total, parts, completed=True)
        with open(self.path / MANIFEST_NAME, "w", encoding="utf-8") as fh:
            json.dump(asdict(manifest), fh, indent=2)
            fh.write("\n")
        (self.path / INCOMPLETE_MARKER).unlink(missing_ok=True)
        return manifest


def open_collection(db: str, name: str, root: str | os.PathLike[str], *, overwrite: bool = False) -> DocumentSink:
    """Create the collection directory and mark it incomplete until finalized.

    Reopening a completed collection raises :class:`CollectionConflictError`
    unless ``overwrite`` is set, in which case the old contents are removed.
    """
    sink = DocumentSink(db, name, root)
    target = sink.path
    if target.exists():
        if not overwrite and (target / MANIFEST_NAME).exists():
            raise CollectionConflictError(f"collection already completed: {target}")
        shutil.rmtree(target)
    target.mkdir(parents=True)
    (target / INCOMPLETE_MARKER).touch()
    return sink


def read_collection(path: str | os.PathLike[str]) -> list[dict[str, Any]]:
    """Re-parse every part file of a collection directory, in part order."""
    path = Path(path)
    docs: list[dict[str, Any]] = []
    for part in sorted(path.glob("part-*.jsonl")):
        with open(part, encoding="utf-8") as fh:
            docs.extend(json.loads(line) for line in fh)
    return docs
