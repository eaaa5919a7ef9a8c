"""A small partitioned data-processing engine with record and typed-table APIs."""

from minireduce.engine import JobContext, JobError, RecordCollection
from minireduce.ngram import Backend
from minireduce.typed_table import TypedTable, encoder_for

__all__ = ["Backend", "JobContext", "JobError", "RecordCollection", "TypedTable", "encoder_for"]

__version__ = "0.1.0"
