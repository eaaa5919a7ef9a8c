"""Ready-made bench jobs for the two case studies."""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path

from minireduce.bench import Job
from minireduce.engine import JobContext, WriteReport
from minireduce.json_dictionary import IngestReport, ingest
from minireduce.ngram import COLLECTIONS, Backend, build_collection
from minireduce.sink import DocumentSink

# CLI spelling -> collection name
COLLECTION_ALIASES = {name.lower(): name for name in COLLECTIONS}
LEXICON_JOB = "DictionaryJson"


def ngram_job(collection: str, corpus_path: str | os.PathLike[str], partitions: int | None = None) -> Job:
    corpus_path = Path(corpus_path)

    def run(backend: Backend, ctx: JobContext, sink: DocumentSink) -> WriteReport:
        corpus = ctx.read_text_lines(corpus_path, partitions)
        docs = build_collection(collection, corpus, backend).map(dataclasses.asdict)
        return docs.write_to_sink(sink)

    return Job(collection, run)


def lexicon_job(lexicon_path: str | os.PathLike[str], *, skip_malformed: bool = False,
                partitions: int | None = None) -> Job:
    def run(backend: Backend, ctx: JobContext, sink: DocumentSink) -> IngestReport:
        return ingest(lexicon_path, backend, sink, ctx, skip_malformed=skip_malformed, partitions=partitions)

    return Job(LEXICON_JOB, run)
