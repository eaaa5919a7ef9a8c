"""Command-line entry point: ``minireduce <subcommand> ...``.

Exit codes: 0 success, 1 invalid usage or arguments, 2 job failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from minireduce import bench
from minireduce.engine import JobContext
from minireduce.json_dictionary import generate_lexicon
from minireduce.jobs import COLLECTION_ALIASES, lexicon_job, ngram_job
from minireduce.ngram import Backend
from minireduce.sink import DocumentSink, open_collection

logger = logging.getLogger("minireduce")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_JOB = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class CliConfig:
    subcommand: str
    input: Path | None = None
    db: str | None = None
    out: Path = Path("out")
    backend: Backend | None = None
    partitions: int | None = None
    collections: tuple[str, ...] = ()
    repetitions: int = 5
    seed: int = 0
    entries: int = 0
    max_senses: int = 4
    skip_malformed: bool = False
    lexicon: Path | None = None
    report_from: Path | None = None
    format: str = "markdown"
    csv_out: Path | None = None


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _collections(text: str) -> tuple[str, ...]:
    names = []
    for part in text.split(","):
        key = part.strip().lower()
        if key not in COLLECTION_ALIASES:
            raise argparse.ArgumentTypeError(
                f"unknown collection {part!r}; choose from {','.join(COLLECTION_ALIASES)}"
            )
        names.append(COLLECTION_ALIASES[key])
    return tuple(dict.fromkeys(names))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="minireduce", description="Partitioned record/table engine and case-study jobs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    backends = [b.value for b in Backend]

    p = sub.add_parser("reduce", help="build n-gram collections from a text corpus")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--backend", choices=backends, required=True)
    p.add_argument("--collections", type=_collections, default=tuple(COLLECTION_ALIASES.values()),
                   help="comma-separated subset of dictionary,twograms,threegrams")
    p.add_argument("--partitions", type=_positive)
    p.add_argument("--out", type=Path, default=Path("out"))

    p = sub.add_parser("ingest-json", help="flatten a nested JSON lexicon into a document collection")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--backend", choices=backends, required=True)
    p.add_argument("--skip-malformed", action="store_true")
    p.add_argument("--partitions", type=_positive)
    p.add_argument("--out", type=Path, default=Path("out"))

    p = sub.add_parser("gen-lexicon", help="write a deterministic synthetic lexicon")
    p.add_argument("--entries", type=_non_negative, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-senses", type=_non_negative, default=4)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("bench", help="time every job under both backends and print a report")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--repetitions", type=_positive, default=5)
    p.add_argument("--lexicon", type=Path, help="also bench JSON ingestion of this lexicon")
    p.add_argument("--partitions", type=_positive)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--csv", dest="csv_out", type=Path, help="also write the raw CSV report here")

    p = sub.add_parser("report", help="re-render a CSV bench report")
    p.add_argument("--from", dest="report_from", type=Path, required=True)
    p.add_argument("--format", choices=["csv", "markdown"], default="markdown")
    return parser


def parse_config(argv: Sequence[str]) -> tuple[CliConfig, bool]:
    args = build_parser().parse_args(argv)
    cfg = CliConfig(subcommand=args.subcommand)
    for name in ("input", "db", "out", "partitions", "collections", "repetitions", "seed", "entries",
                 "max_senses", "skip_malformed", "lexicon", "report_from", "format", "csv_out"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if getattr(args, "backend", None):
        cfg.backend = Backend(args.backend)
    for path in (cfg.input, cfg.lexicon, cfg.report_from):
        if path is not None and not path.is_file():
            raise UsageError(f"minireduce {cfg.subcommand}: no such file: {path}")
    if cfg.db is not None:
        # Validates the name before any job starts.
        DocumentSink(cfg.db, "check", cfg.out)
    return cfg, args.verbose


def _context(cfg: CliConfig) -> JobContext:
    # Worker count comes from MINIREDUCE_WORKERS or the CPU count.
    return JobContext(default_partition_count=cfg.partitions)


def _run(cfg: CliConfig) -> None:
    out = sys.stdout
    if cfg.subcommand == "gen-lexicon":
        size = generate_lexicon(cfg.out, cfg.entries, cfg.seed, max_senses=cfg.max_senses)
        print(f"wrote {cfg.entries} entries ({size} bytes) to {cfg.out}", file=out)
        return
    if cfg.subcommand == "report":
        report = bench.parse_csv_report(cfg.report_from.read_text(encoding="utf-8"))
        out.write(bench.emit_report(report, cfg.format))
        return
    with _context(cfg) as ctx:
        if cfg.subcommand == "reduce":
            for name in cfg.collections:
                sink = open_collection(cfg.db, name, cfg.out)
                result = ngram_job(name, cfg.input, cfg.partitions).run(cfg.backend, ctx, sink)
                print(f"{name}: {result.document_count} documents -> {sink.path}", file=out)
        elif cfg.subcommand == "ingest-json":
            job = lexicon_job(cfg.input, skip_malformed=cfg.skip_malformed, partitions=cfg.partitions)
            sink = open_collection(cfg.db, job.name, cfg.out)
            result = job.run(cfg.backend, ctx, sink)
            print(
                f"{job.name}: {result.entries_read} entries, {result.documents_written} documents"
                f" ({result.skipped} skipped) -> {sink.path}",
                file=out,
            )
        elif cfg.subcommand == "bench":
            jobs = [ngram_job(name, cfg.input, cfg.partitions) for name in COLLECTION_ALIASES.values()]
            if cfg.lexicon is not None:
                jobs.append(lexicon_job(cfg.lexicon, partitions=cfg.partitions))
            report = bench.run_bench(jobs, ctx, cfg.repetitions, out_root=cfg.out, db=cfg.db)
            if cfg.csv_out is not None:
                cfg.csv_out.write_text(bench.emit_report(report, "csv"), encoding="utf-8")
            out.write(bench.emit_report(report, "markdown"))
        else:  # pragma: no cover - argparse restricts choices
            raise UsageError(f"unknown subcommand {cfg.subcommand!r}")


def run(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg, verbose = parse_config(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"minireduce: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(cfg)
    except Exception as exc:
        logger.debug("job failed", exc_info=True)
        print(f"minireduce {cfg.subcommand}: job failed: {exc}", file=sys.stderr)
        return EXIT_JOB
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
