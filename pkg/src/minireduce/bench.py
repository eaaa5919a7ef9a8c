"""Timing harness: container / compute / write decomposition and savings reports."""

from __future__ import annotations

import csv
import gc
import io
import logging
import os
import statistics
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from minireduce.engine import JobContext
from minireduce.ngram import Backend
from minireduce.sink import CollectionManifest, DocumentSink, open_collection

__all__ = [
    "BenchReport",
    "BenchRow",
    "CSV_COLUMNS",
    "Job",
    "ReportError",
    "TimingBreakdown",
    "emit_report",
    "format_count",
    "format_mss",
    "parse_csv_report",
    "parse_mss",
    "run_bench_row",
    "savings",
    "time_job",
]

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["job", "backend", "t_container_s", "t_elaborazione_s", "t_scrittura_s", "t_totale_s", "documents"]


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class TimingBreakdown:
    """Total job time split into startup, processing and write components.

    ``t_totale`` is always computed as the sum of the three parts.
    """

    t_container: float
    t_elaborazione: float
    t_scrittura: float

    def __post_init__(self) -> None:
        for name in ("t_container", "t_elaborazione", "t_scrittura"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def t_totale(self) -> float:
        return self.t_container + self.t_elaborazione + self.t_scrittura


class JobRun(Protocol):
    document_count: int
    compute_duration: float
    write_duration: float


@dataclass(frozen=True)
class Job:
    """A named pipeline that writes its documents into the sink it is given."""

    name: str
    run: Callable[[Backend, JobContext, DocumentSink], JobRun]


@dataclass(frozen=True)
class BenchRow:
    job_name: str
    backend: Backend
    timing: TimingBreakdown
    documents: int


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def pairs(self) -> list[tuple[str, BenchRow, BenchRow]]:
        """(job, records row, table row) in first-appearance order."""
        by_job: dict[str, dict[Backend, BenchRow]] = {}
        for row in self.rows:
            slot = by_job.setdefault(row.job_name, {})
            if row.backend in slot:
                raise ReportError(f"duplicate {row.backend.value} row for job {row.job_name!r}")
            slot[row.backend] = row
        out = []
        for job, slot in by_job.items():
            if set(slot) != {Backend.RECORDS, Backend.TABLE}:
                raise ReportError(f"job {job!r} needs exactly one records and one table row")
            rec, tab = slot[Backend.RECORDS], slot[Backend.TABLE]
            if rec.documents != tab.documents:
                raise ReportError(f"job {job!r}: document counts differ ({rec.documents} vs {tab.documents})")
            out.append((job, rec, tab))
        return out

    @property
    def savings(self) -> list[tuple[str, float]]:
        return [(job, savings(rec.timing.t_totale, tab.timing.t_totale)) for job, rec, tab in self.pairs()]


def savings(t_records: float, t_table: float) -> float:
    """Percent of the records-backend time saved by the table backend."""
    if t_records <= 0:
        raise ValueError(f"t_records must be > 0, got {t_records}")
    return 100.0 * (t_records - t_table) / t_records


def parse_mss(text: str) -> int:
    """'3:45' -> 225. A '.' separator is accepted as a typo for ':'."""
    minutes, _, seconds = text.replace(".", ":").partition(":")
    return int(minutes) * 60 + int(seconds)


def format_mss(seconds: float) -> str:
    whole = int(seconds)
    return f"{whole // 60}:{whole % 60:02d}"


def format_count(n: int) -> str:
    """Thousands grouped with '.', e.g. 1762651 -> '1.762.651'."""
    return f"{n:,}".replace(",", ".")


def format_percent(p: float, decimals: int = 1) -> str:
    text = f"{p:.{decimals}f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text + "%"


def _timed_runs(
    job: Job,
    backends: Sequence[Backend],
    ctx: JobContext,
    repetitions: int,
    out_root: str | os.PathLike[str],
    db: str,
) -> dict[Backend, tuple[TimingBreakdown, int]]:
    """Run ``job`` ``repetitions`` times per backend, alternating backends each round.

    Interleaving keeps slow drifts of the machine from landing on one
    backend only. Every run rewrites ``out_root/db/job.name``.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    computes: dict[Backend, list[float]] = {b: [] for b in backends}
    writes: dict[Backend, list[float]] = {b: [] for b in backends}
    documents: dict[Backend, int] = {}
    manifest_path = Path(out_root) / db / job.name / "manifest.json"
    for rep in range(repetitions):
        for backend in backends:
            sink = open_collection(db, job.name, out_root, overwrite=True)
            # Start every run from the same heap state.
            gc.collect()
            result = job.run(backend, ctx, sink)
            computes[backend].append(result.compute_duration)
            writes[backend].append(result.write_duration)
            count = CollectionManifest.load(manifest_path).document_count
            if count != result.document_count:
                raise RuntimeError(f"{job.name}: manifest count {count} != reported {result.document_count}")
            if documents.setdefault(backend, count) != count:
                raise RuntimeError(f"{job.name}: document count changed between repetitions")
            logger.debug("%s/%s rep %d: compute %.4fs write %.4fs", job.name, backend.value, rep,
                         result.compute_duration, result.write_duration)
    return {
        b: (
            TimingBreakdown(
                t_container=ctx.startup_duration,
                t_elaborazione=statistics.median(computes[b]),
                t_scrittura=statistics.median(writes[b]),
            ),
            documents[b],
        )
        for b in backends
    }


def time_job(
    job: Job,
    backend: Backend,
    ctx: JobContext,
    repetitions: int = 5,
    *,
    out_root: str | os.PathLike[str],
    db: str,
) -> TimingBreakdown:
    """Median compute and write spans over ``repetitions`` runs of ``job``.

    Each repetition rewrites ``out_root/db/job.name`` from scratch.
    """
    return _timed_runs(job, [backend], ctx, repetitions, out_root, db)[backend][0]


def run_bench_row(
    job: Job,
    backend: Backend,
    ctx: JobContext,
    repetitions: int = 5,
    *,
    out_root: str | os.PathLike[str],
    db: str,
) -> BenchRow:
    timing, documents = _timed_runs(job, [backend], ctx, repetitions, out_root, db)[backend]
    return BenchRow(job.name, backend, timing, documents)


def run_bench(
    jobs: Iterable[Job],
    ctx: JobContext,
    repetitions: int = 5,
    *,
    out_root: str | os.PathLike[str],
    db: str,
) -> BenchReport:
    """Both backends for every job, interleaved, one row per (job, backend)."""
    report = BenchReport()
    for job in jobs:
        started = time.perf_counter()
        timed = _timed_runs(job, [Backend.RECORDS, Backend.TABLE], ctx, repetitions, out_root, db)
        for backend, (timing, documents) in timed.items():
            logger.info("%s [%s]: %d documents, elaborazione %.3fs", job.name, backend.value,
                        documents, timing.t_elaborazione)
            report.rows.append(BenchRow(job.name, backend, timing, documents))
        logger.info("%s: %.1fs wall", job.name, time.perf_counter() - started)
    return report


def emit_report(report: BenchReport, format: str = "markdown", *, savings_decimals: int = 1) -> str:
    """Render as ``csv`` (one line per run, raw seconds) or ``markdown`` (one line per job)."""
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        report.pairs()  # validates pairing
        for row in report.rows:
            t = row.timing
            writer.writerow([
                row.job_name, row.backend.value,
                repr(t.t_container), repr(t.t_elaborazione), repr(t.t_scrittura), repr(t.t_totale),
                row.documents,
            ])
        return buf.getvalue()
    if format == "markdown":
        lines = [
            "| Job | Records | Table | Documents | Savings |",
            "|---|---|---|---|---|",
        ]
        for job, rec, tab in report.pairs():
            pct = savings(rec.timing.t_totale, tab.timing.t_totale) if rec.timing.t_totale > 0 else 0.0
            lines.append(
                f"| {job} | {format_mss(rec.timing.t_totale)} | {format_mss(tab.timing.t_totale)} "
                f"| {format_count(rec.documents)} | {format_percent(pct, savings_decimals)} |"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}; expected 'csv' or 'markdown'")


def parse_csv_report(text: str) -> BenchReport:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise ReportError(f"unexpected CSV header {reader.fieldnames}; expected {CSV_COLUMNS}")
    report = BenchReport()
    for rec in reader:
        timing = TimingBreakdown(
            float(rec["t_container_s"]), float(rec["t_elaborazione_s"]), float(rec["t_scrittura_s"])
        )
        report.rows.append(BenchRow(rec["job"], Backend(rec["backend"]), timing, int(rec["documents"])))
    return report
