"""Lazy, immutable, partitioned record collections executed on a worker pool.

Transformations (``map``, ``flat_map``, ``filter``, ``map_to_pairs``,
``reduce_by_key``) only extend a lineage plan. Actions (``count``,
``collect``, ``write_to_sink``) walk the plan, fuse narrow operators into
per-partition tasks and run them on the context's thread pool. Key-based
aggregation goes through an in-memory hash shuffle.
"""

from __future__ import annotations

import os
import struct
import time
from collections.abc import Callable, Hashable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from minireduce.sink import DocumentSink

__all__ = [
    "JobContext",
    "JobError",
    "NodeKind",
    "Partition",
    "PlanNode",
    "RecordCollection",
    "TextDecodeError",
    "WriteReport",
    "canonical_key_bytes",
    "fnv1a_64",
    "partition_for_key",
    "split_evenly",
]

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class JobError(RuntimeError):
    """An operator failed while an action was executing the plan."""

    def __init__(self, kind: str, partition: int, ordinal: int | None, cause: BaseException):
        self.kind = kind
        self.partition = partition
        self.ordinal = ordinal
        self.cause = cause
        where = f"partition {partition}"
        if ordinal is not None:
            where += f", record {ordinal}"
        super().__init__(f"{kind} operator failed at {where}: {cause!r}")


class TextDecodeError(ValueError):
    """Input text is not valid UTF-8."""

    def __init__(self, path: Path, offset: int, reason: str):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: invalid UTF-8 at byte offset {offset} ({reason})")


class NodeKind(Enum):
    SOURCE = "Source"
    MAP = "Map"
    FLAT_MAP = "FlatMap"
    MAP_TO_PAIRS = "MapToPairs"
    FILTER = "Filter"
    REDUCE_BY_KEY = "ReduceByKey"


_NARROW = {NodeKind.MAP, NodeKind.FLAT_MAP, NodeKind.MAP_TO_PAIRS, NodeKind.FILTER}


@dataclass(frozen=True, eq=False)
class PlanNode:
    """One vertex of the lineage DAG. Immutable once built."""

    kind: NodeKind
    parents: tuple[PlanNode, ...] = ()
    operator: Callable[..., Any] | None = None
    partition_count: int = 1
    # Source nodes only: the materialized input partitions.
    source: tuple[tuple[Any, ...], ...] | None = None

    def lineage(self) -> list[str]:
        """Kinds from this node back to its source, newest first."""
        out = []
        node: PlanNode | None = self
        while node is not None:
            out.append(node.kind.value)
            node = node.parents[0] if node.parents else None
        return out


@dataclass(frozen=True)
class Partition:
    index: int
    records: list[Any]


@dataclass(frozen=True)
class WriteReport:
    """Outcome of persisting a collection: counts plus the compute/write split."""

    document_count: int
    write_duration: float
    compute_duration: float = 0.0
    part_files: tuple[str, ...] = ()


def split_evenly(items: Sequence[Any], partitions: int) -> list[list[Any]]:
    """Contiguous split; the first ``len % partitions`` slices get one extra item."""
    if partitions < 1:
        raise ValueError(f"partitions must be >= 1, got {partitions}")
    base, extra = divmod(len(items), partitions)
    out = []
    start = 0
    for i in range(partitions):
        size = base + (1 if i < extra else 0)
        out.append(list(items[start:start + size]))
        start += size
    return out


def canonical_key_bytes(key: Any) -> bytes:
    """Type-tagged byte form of a shuffle key, stable across runs and platforms."""
    if isinstance(key, str):
        raw = key.encode("utf-8")
        return b"s" + struct.pack("<I", len(raw)) + raw
    if isinstance(key, bool):
        return b"?" + (b"\x01" if key else b"\x00")
    if isinstance(key, int):
        raw = str(key).encode("ascii")
        return b"i" + struct.pack("<I", len(raw)) + raw
    if isinstance(key, float):
        return b"f" + struct.pack("<d", key)
    if isinstance(key, (bytes, bytearray)):
        return b"b" + struct.pack("<I", len(key)) + bytes(key)
    if isinstance(key, tuple):
        return b"t" + struct.pack("<I", len(key)) + b"".join(canonical_key_bytes(k) for k in key)
    if key is None:
        return b"n"
    raise TypeError(f"unsupported shuffle key type: {type(key).__name__}")


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def partition_for_key(key: Any, partitions: int) -> int:
    return fnv1a_64(canonical_key_bytes(key)) % partitions


def _default_workers() -> int:
    env = os.environ.get("MINIREDUCE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class JobContext:
    """Owns the worker pool. ``startup_duration`` stands in for container start time.

    Use as a context manager, or call :meth:`close` when done.
    """

    def __init__(self, worker_count: int | None = None, default_partition_count: int | None = None):
        worker_count = _default_workers() if worker_count is None else worker_count
        if worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {worker_count}")
        if default_partition_count is None:
            default_partition_count = worker_count
        if default_partition_count < 1:
            raise ValueError(f"default_partition_count must be >= 1, got {default_partition_count}")
        self.worker_count = worker_count
        self.default_partition_count = default_partition_count
        started = time.perf_counter()
        self._pool = ThreadPoolExecutor(max_workers=worker_count, thread_name_prefix="minireduce")
        # Spin every worker up so the startup cost is paid here, not in the first job.
        list(self._pool.map(lambda _: None, range(worker_count)))
        self._startup_duration = time.perf_counter() - started

    @property
    def startup_duration(self) -> float:
        return self._startup_duration

    def close(self) -> None:
        self._pool.shutdown(wait=True)

    def __enter__(self) -> JobContext:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def run_tasks(self, fn: Callable[[int, Any], Any], inputs: Sequence[Any]) -> list[Any]:
        """Run ``fn(index, item)`` for every input on the pool; results in input order."""
        if len(inputs) <= 1 or self.worker_count == 1:
            return [fn(i, item) for i, item in enumerate(inputs)]
        futures = [self._pool.submit(fn, i, item) for i, item in enumerate(inputs)]
        return [f.result() for f in futures]

    # Sources

    def parallelize(self, items: Iterable[Any], partitions: int | None = None) -> RecordCollection:
        partitions = self.default_partition_count if partitions is None else partitions
        if partitions < 1:
            raise ValueError(f"partitions must be >= 1, got {partitions}")
        parts = split_evenly(list(items), partitions)
        node = PlanNode(
            NodeKind.SOURCE,
            partition_count=partitions,
            source=tuple(tuple(p) for p in parts),
        )
        return RecordCollection(self, node)

    def read_text_lines(self, path: str | os.PathLike[str], partitions: int | None = None) -> RecordCollection:
        path = Path(path)
        raw = path.read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TextDecodeError(path, exc.start, exc.reason) from None
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        lines = [line[:-1] if line.endswith("\r") else line for line in lines]
        return self.parallelize(lines, partitions)


def _apply_narrow(kind: NodeKind, op: Callable[..., Any], partition: int, records: list[Any]) -> list[Any]:
    out: list[Any] = []
    i = -1
    try:
        if kind is NodeKind.MAP or kind is NodeKind.MAP_TO_PAIRS:
            for i, rec in enumerate(records):
                out.append(op(rec))
            if kind is NodeKind.MAP_TO_PAIRS:
                for j, pair in enumerate(out):
                    if not (isinstance(pair, tuple) and len(pair) == 2):
                        i = j
                        raise TypeError(f"map_to_pairs operator must return a 2-tuple, got {pair!r}")
        elif kind is NodeKind.FLAT_MAP:
            for i, rec in enumerate(records):
                out.extend(op(rec))
        elif kind is NodeKind.FILTER:
            for i, rec in enumerate(records):
                if op(rec):
                    out.append(rec)
        else:  # pragma: no cover - guarded by caller
            raise AssertionError(kind)
    except JobError:
        raise
    except Exception as exc:
        raise JobError(kind.value, partition, i, exc) from exc
    return out


def _fused_stage(node: PlanNode, ctx: JobContext) -> tuple[list[list[Any]], Callable[[int, list[Any]], list[Any]]]:
    """Return (input partitions, per-partition function) for the narrow chain ending at ``node``."""
    chain: list[PlanNode] = []
    base = node
    while base.kind in _NARROW:
        chain.append(base)
        base = base.parents[0]
    chain.reverse()

    if base.kind is NodeKind.SOURCE:
        assert base.source is not None
        inputs = [list(p) for p in base.source]
    else:
        inputs = _shuffle_reduce(base, ctx)

    def run(index: int, records: list[Any]) -> list[Any]:
        for step in chain:
            assert step.operator is not None
            records = _apply_narrow(step.kind, step.operator, index, records)
        return records

    return inputs, run


def _shuffle_reduce(node: PlanNode, ctx: JobContext) -> list[list[Any]]:
    combine = node.operator
    assert combine is not None
    out_parts = node.partition_count
    inputs, upstream = _fused_stage(node.parents[0], ctx)

    def map_side(index: int, records: list[Any]) -> list[dict[Any, Any]]:
        records = upstream(index, records)
        local: dict[Any, Any] = {}
        i = -1
        try:
            for i, (key, value) in enumerate(records):
                if key in local:
                    local[key] = combine(local[key], value)
                else:
                    local[key] = value
        except Exception as exc:
            raise JobError(NodeKind.REDUCE_BY_KEY.value, index, i, exc) from exc
        buckets: list[dict[Any, Any]] = [{} for _ in range(out_parts)]
        for key, value in local.items():
            buckets[partition_for_key(key, out_parts)][key] = value
        return buckets

    map_outputs = ctx.run_tasks(map_side, inputs)

    def reduce_side(index: int, _: object) -> list[Any]:
        merged: dict[Any, Any] = {}
        try:
            for buckets in map_outputs:
                for key, value in buckets[index].items():
                    if key in merged:
                        merged[key] = combine(merged[key], value)
                    else:
                        merged[key] = value
        except Exception as exc:
            raise JobError(NodeKind.REDUCE_BY_KEY.value, index, None, exc) from exc
        return list(merged.items())

    return ctx.run_tasks(reduce_side, [None] * out_parts)


@dataclass(frozen=True)
class RecordCollection:
    """Immutable handle on a lineage plan. Transformations return new handles."""

    ctx: JobContext = field(repr=False)
    plan: PlanNode

    @property
    def partition_count(self) -> int:
        return self.plan.partition_count

    def _derive(self, kind: NodeKind, op: Callable[..., Any], partitions: int | None = None) -> RecordCollection:
        node = PlanNode(
            kind,
            parents=(self.plan,),
            operator=op,
            partition_count=self.plan.partition_count if partitions is None else partitions,
        )
        return RecordCollection(self.ctx, node)

    # Transformations

    def map(self, f: Callable[[Any], Any]) -> RecordCollection:
        return self._derive(NodeKind.MAP, f)

    def flat_map(self, f: Callable[[Any], Iterable[Any]]) -> RecordCollection:
        return self._derive(NodeKind.FLAT_MAP, f)

    def filter(self, predicate: Callable[[Any], bool]) -> RecordCollection:
        return self._derive(NodeKind.FILTER, predicate)

    def map_to_pairs(self, f: Callable[[Any], tuple[Hashable, Any]]) -> RecordCollection:
        return self._derive(NodeKind.MAP_TO_PAIRS, f)

    def reduce_by_key(self, combine: Callable[[Any, Any], Any], partitions: int | None = None) -> RecordCollection:
        """Fold values per key. ``combine`` must be associative and commutative.

        Key ``k`` lands in output partition ``fnv1a_64(canonical_key_bytes(k)) % partitions``.
        """
        partitions = self.ctx.default_partition_count if partitions is None else partitions
        if partitions < 1:
            raise ValueError(f"partitions must be >= 1, got {partitions}")
        return self._derive(NodeKind.REDUCE_BY_KEY, combine, partitions)

    # Actions

    def partitions(self) -> list[Partition]:
        """Execute the plan and return materialized partitions in index order."""
        inputs, run = _fused_stage(self.plan, self.ctx)
        results = self.ctx.run_tasks(run, inputs)
        return [Partition(i, recs) for i, recs in enumerate(results)]

    def collect(self) -> list[Any]:
        """All records in partition-index order. The result must fit in memory."""
        out: list[Any] = []
        for part in self.partitions():
            out.extend(part.records)
        return out

    def count(self) -> int:
        return sum(len(p.records) for p in self.partitions())

    def write_to_sink(self, sink: DocumentSink, *, finalize: bool = True, part_offset: int = 0) -> WriteReport:
        """Execute the plan, then write each partition to its own part file.

        ``compute_duration`` covers plan execution, ``write_duration`` only the
        sink I/O (part files plus manifest).
        """
        started = time.perf_counter()
        parts = self.partitions()
        computed = time.perf_counter()

        def write(_: int, part: Partition) -> str:
            return sink.write_partition(part_offset + part.index, part.records)

        names = self.ctx.run_tasks(write, parts)
        if finalize:
            sink.finalize()
        finished = time.perf_counter()
        return WriteReport(
            document_count=sum(len(p.records) for p in parts),
            write_duration=finished - computed,
            compute_duration=computed - started,
            part_files=tuple(names),
        )
