"""Schema-typed tables stored as compact binary rows.

Row layout (all integers little-endian)::

    row   := u32 cell_count, cell*
    cell  := tag:u8, payload
    Text    (0x01): u32 byte_length, UTF-8 bytes
    Int64   (0x02): i64
    Float64 (0x03): f64
    Array   (0x04): u32 byte_length, u32 element_count, cell*

Array cells carry their payload length so any cell can be skipped without
decoding it. ``select``, ``group_by_count`` and ``explode`` work directly on
these bytes; only ``with_column`` and the decoding actions materialize
Python values.
"""

from __future__ import annotations

import dataclasses
import struct
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from operator import add
from typing import Any

from minireduce.engine import JobContext, RecordCollection

__all__ = [
    "Array",
    "ColumnDef",
    "ColumnNameError",
    "ColumnTypeError",
    "EncodeError",
    "Encoder",
    "FLOAT64",
    "INT64",
    "Schema",
    "SchemaError",
    "TEXT",
    "TypedTable",
    "encoder_for",
]

TAG_TEXT = 0x01
TAG_INT64 = 0x02
TAG_FLOAT64 = 0x03
TAG_ARRAY = 0x04

MAX_ARRAY_DEPTH = 2

_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")
_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1


class SchemaError(ValueError):
    pass


class ColumnNameError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


class ColumnTypeError(TypeError):
    pass


class EncodeError(ValueError):
    pass


@dataclass(frozen=True)
class ScalarType:
    name: str
    tag: int

    def __repr__(self) -> str:
        return self.name


TEXT = ScalarType("Text", TAG_TEXT)
INT64 = ScalarType("Int64", TAG_INT64)
FLOAT64 = ScalarType("Float64", TAG_FLOAT64)


@dataclass(frozen=True)
class Array:
    element: ColumnType

    tag = TAG_ARRAY

    @property
    def depth(self) -> int:
        return 1 + (self.element.depth if isinstance(self.element, Array) else 0)

    def __repr__(self) -> str:
        return f"Array({self.element!r})"


ColumnType = ScalarType | Array


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: ColumnType


@dataclass(frozen=True)
class Schema:
    columns: tuple[ColumnDef, ...]

    def __init__(self, columns: Iterable[ColumnDef | tuple[str, ColumnType]]):
        cols = tuple(c if isinstance(c, ColumnDef) else ColumnDef(*c) for c in columns)
        seen = set()
        for col in cols:
            if not col.name:
                raise SchemaError("column names must be non-empty")
            if col.name in seen:
                raise SchemaError(f"duplicate column {col.name!r}")
            seen.add(col.name)
            _check_type(col.name, col.type)
        object.__setattr__(self, "columns", cols)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise ColumnNameError(f"unknown column {name!r}; available: {', '.join(self.names)}")

    def column(self, name: str) -> ColumnDef:
        return self.columns[self.index(name)]

    def __len__(self) -> int:
        return len(self.columns)


def _check_type(name: str, ctype: Any) -> None:
    if isinstance(ctype, ScalarType):
        return
    if isinstance(ctype, Array):
        if ctype.depth > MAX_ARRAY_DEPTH:
            raise SchemaError(f"column {name!r}: array nesting depth {ctype.depth} exceeds {MAX_ARRAY_DEPTH}")
        _check_type(name, ctype.element)
        return
    raise SchemaError(f"column {name!r}: unsupported type {ctype!r}")


# Cell encoding


def _encode_cell(ctype: ColumnType, value: Any, out: bytearray) -> None:
    if ctype is TEXT:
        if not isinstance(value, str):
            raise EncodeError(f"expected Text, got {type(value).__name__}")
        raw = value.encode("utf-8")
        out.append(TAG_TEXT)
        out += _U32.pack(len(raw))
        out += raw
    elif ctype is INT64:
        if isinstance(value, bool) or not isinstance(value, int):
            raise EncodeError(f"expected Int64, got {type(value).__name__}")
        if not _INT64_MIN <= value <= _INT64_MAX:
            raise EncodeError(f"Int64 out of range: {value}")
        out.append(TAG_INT64)
        out += _I64.pack(value)
    elif ctype is FLOAT64:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise EncodeError(f"expected Float64, got {type(value).__name__}")
        out.append(TAG_FLOAT64)
        out += _F64.pack(float(value))
    elif isinstance(ctype, Array):
        if isinstance(value, (str, bytes)) or not isinstance(value, (list, tuple)):
            raise EncodeError(f"expected {ctype!r}, got {type(value).__name__}")
        body = bytearray(_U32.pack(len(value)))
        for item in value:
            _encode_cell(ctype.element, item, body)
        out.append(TAG_ARRAY)
        out += _U32.pack(len(body))
        out += body
    else:  # pragma: no cover - schema validation prevents this
        raise EncodeError(f"unsupported type {ctype!r}")


def _decode_cell(buf: bytes, pos: int) -> tuple[Any, int]:
    tag = buf[pos]
    pos += 1
    if tag == TAG_TEXT:
        (n,) = _U32.unpack_from(buf, pos)
        pos += 4
        return buf[pos:pos + n].decode("utf-8"), pos + n
    if tag == TAG_INT64:
        return _I64.unpack_from(buf, pos)[0], pos + 8
    if tag == TAG_FLOAT64:
        return _F64.unpack_from(buf, pos)[0], pos + 8
    if tag == TAG_ARRAY:
        (n,) = _U32.unpack_from(buf, pos)
        end = pos + 4 + n
        (count,) = _U32.unpack_from(buf, pos + 4)
        pos += 8
        items = []
        for _ in range(count):
            item, pos = _decode_cell(buf, pos)
            items.append(item)
        if pos != end:
            raise ValueError("corrupt array cell: length prefix disagrees with contents")
        return items, end
    raise ValueError(f"unknown cell tag 0x{tag:02x} at offset {pos - 1}")


def _skip_cell(buf: bytes, pos: int) -> int:
    tag = buf[pos]
    if tag == TAG_TEXT or tag == TAG_ARRAY:
        return pos + 5 + _U32.unpack_from(buf, pos + 1)[0]
    if tag == TAG_INT64 or tag == TAG_FLOAT64:
        return pos + 9
    raise ValueError(f"unknown cell tag 0x{tag:02x} at offset {pos}")


def cell_spans(row: bytes) -> list[tuple[int, int]]:
    """(start, end) byte offsets of each top-level cell of an encoded row."""
    (count,) = _U32.unpack_from(row, 0)
    spans = []
    pos = 4
    for _ in range(count):
        end = _skip_cell(row, pos)
        spans.append((pos, end))
        pos = end
    return spans


def _array_element_spans(cell: bytes) -> list[tuple[int, int]]:
    (count,) = _U32.unpack_from(cell, 5)
    spans = []
    pos = 9
    for _ in range(count):
        end = _skip_cell(cell, pos)
        spans.append((pos, end))
        pos = end
    return spans


def _join_cells(cells: Sequence[bytes]) -> bytes:
    return _U32.pack(len(cells)) + b"".join(cells)


def _empty_value(ctype: ColumnType) -> Any:
    if ctype is TEXT:
        return ""
    if ctype is INT64:
        return 0
    if ctype is FLOAT64:
        return 0.0
    return []


def encode_value(ctype: ColumnType, value: Any) -> bytes:
    out = bytearray()
    _encode_cell(ctype, value, out)
    return bytes(out)


class Encoder:
    """Converts domain objects to binary rows and back.

    ``encode`` accepts a dataclass instance, a mapping keyed by column name,
    or a positional tuple/list. ``decode`` returns ``cls(**fields)`` when a
    class was given, else a tuple of cell values.
    """

    def __init__(self, schema: Schema, cls: type | None = None):
        self.schema = schema
        self.cls = cls

    def _values(self, obj: Any) -> Sequence[Any]:
        names = self.schema.names
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            try:
                return [getattr(obj, n) for n in names]
            except AttributeError as exc:
                raise EncodeError(f"object lacks a schema field: {exc}") from None
        if isinstance(obj, Mapping):
            missing = [n for n in names if n not in obj]
            if missing:
                raise EncodeError(f"mapping missing fields {missing}")
            return [obj[n] for n in names]
        if isinstance(obj, (tuple, list)):
            if len(obj) != len(names):
                raise EncodeError(f"row has {len(obj)} cells, schema has {len(names)} columns")
            return obj
        raise EncodeError(f"cannot encode {type(obj).__name__} under schema {names}")

    def encode(self, obj: Any) -> bytes:
        values = self._values(obj)
        out = bytearray(_U32.pack(len(values)))
        for col, value in zip(self.schema.columns, values):
            try:
                _encode_cell(col.type, value, out)
            except EncodeError as exc:
                raise EncodeError(f"column {col.name!r}: {exc}") from None
        return bytes(out)

    def decode_values(self, row: bytes) -> tuple[Any, ...]:
        (count,) = _U32.unpack_from(row, 0)
        if count != len(self.schema):
            raise ValueError(f"row has {count} cells, schema has {len(self.schema)} columns")
        pos = 4
        values = []
        for _ in range(count):
            value, pos = _decode_cell(row, pos)
            values.append(value)
        return tuple(values)

    def decode(self, row: bytes) -> Any:
        values = self.decode_values(row)
        if self.cls is None:
            return values
        return self.cls(**dict(zip(self.schema.names, values)))

    def decode_dict(self, row: bytes) -> dict[str, Any]:
        return dict(zip(self.schema.names, self.decode_values(row)))


def encoder_for(schema: Schema | Iterable[ColumnDef | tuple[str, ColumnType]], cls: type | None = None) -> Encoder:
    if not isinstance(schema, Schema):
        schema = Schema(schema)
    return Encoder(schema, cls)


@dataclass(frozen=True)
class TypedTable:
    """A schema plus a lazy collection of encoded rows."""

    schema: Schema
    rows: RecordCollection

    @property
    def ctx(self) -> JobContext:
        return self.rows.ctx

    # Construction

    @classmethod
    def from_objects(
        cls,
        ctx: JobContext,
        objects: Iterable[Any],
        enc: Encoder,
        partitions: int | None = None,
    ) -> TypedTable:
        encoded = []
        for i, obj in enumerate(objects):
            try:
                encoded.append(enc.encode(obj))
            except EncodeError as exc:
                raise EncodeError(f"object {i}: {exc}") from None
        return cls(enc.schema, ctx.parallelize(encoded, partitions))

    @classmethod
    def from_collection(cls, records: RecordCollection, enc: Encoder) -> TypedTable:
        """Lazily encode an existing record collection."""
        return cls(enc.schema, records.map(enc.encode))

    # Transformations

    def select(self, column_names: Sequence[str]) -> TypedTable:
        indices = [self.schema.index(n) for n in column_names]
        schema = Schema(self.schema.columns[i] for i in indices)

        def project(row: bytes) -> bytes:
            spans = cell_spans(row)
            return _join_cells([row[spans[i][0]:spans[i][1]] for i in indices])

        return TypedTable(schema, self.rows.map(project))

    def group_by_count(self, key_columns: Sequence[str], partitions: int | None = None) -> TypedTable:
        """One row per distinct key tuple, with an appended ``freq:Int64`` count."""
        indices = [self.schema.index(n) for n in key_columns]
        for i in indices:
            col = self.schema.columns[i]
            if isinstance(col.type, Array):
                raise ColumnTypeError(f"cannot group by array column {col.name!r}")
        schema = Schema([*(self.schema.columns[i] for i in indices), ColumnDef("freq", INT64)])
        nkeys = len(indices)

        def key_of(row: bytes) -> tuple[bytes, int]:
            spans = cell_spans(row)
            return b"".join(row[spans[i][0]:spans[i][1]] for i in indices), 1

        def to_row(pair: tuple[bytes, int]) -> bytes:
            key, n = pair
            return _U32.pack(nkeys + 1) + key + bytes([TAG_INT64]) + _I64.pack(n)

        counted = self.rows.map_to_pairs(key_of).reduce_by_key(add, partitions).map(to_row)
        return TypedTable(schema, counted)

    def explode(self, array_column: str, *, index_column: str | None = None, outer: bool = False) -> TypedTable:
        """One output row per element of ``array_column``.

        ``index_column`` inserts the element position just before the
        exploded column. With ``outer`` an empty array yields a single row
        holding the element type's empty value and position -1.
        """
        pos = self.schema.index(array_column)
        col = self.schema.columns[pos]
        if not isinstance(col.type, Array):
            raise ColumnTypeError(f"column {array_column!r} is {col.type!r}, not an array")
        new_cols = list(self.schema.columns)
        new_cols[pos] = ColumnDef(col.name, col.type.element)
        if index_column is not None:
            new_cols.insert(pos, ColumnDef(index_column, INT64))
        schema = Schema(new_cols)
        empty_cell = encode_value(col.type.element, _empty_value(col.type.element))
        with_index = index_column is not None

        def explode_row(row: bytes) -> list[bytes]:
            spans = cell_spans(row)
            cells = [row[s:e] for s, e in spans]
            array_cell = cells[pos]
            elems = [array_cell[s:e] for s, e in _array_element_spans(array_cell)]
            indexed: list[tuple[int, bytes]] = list(enumerate(elems))
            if not indexed and outer:
                indexed = [(-1, empty_cell)]
            out = []
            for i, elem in indexed:
                replaced = [elem]
                if with_index:
                    replaced = [bytes([TAG_INT64]) + _I64.pack(i), elem]
                out.append(_join_cells(cells[:pos] + replaced + cells[pos + 1:]))
            return out

        return TypedTable(schema, self.rows.flat_map(explode_row))

    def split_array(self, array_column: str, new_columns: Sequence[str]) -> TypedTable:
        """Replace an array column by one column per element position.

        Every array must hold exactly ``len(new_columns)`` elements.
        """
        pos = self.schema.index(array_column)
        col = self.schema.columns[pos]
        if not isinstance(col.type, Array):
            raise ColumnTypeError(f"column {array_column!r} is {col.type!r}, not an array")
        width = len(new_columns)
        new_cols = list(self.schema.columns)
        new_cols[pos:pos + 1] = [ColumnDef(n, col.type.element) for n in new_columns]
        schema = Schema(new_cols)

        def split(row: bytes) -> bytes:
            cells = [row[s:e] for s, e in cell_spans(row)]
            array_cell = cells[pos]
            elems = [array_cell[s:e] for s, e in _array_element_spans(array_cell)]
            if len(elems) != width:
                raise ValueError(f"column {array_column!r}: expected {width} elements, got {len(elems)}")
            return _join_cells(cells[:pos] + elems + cells[pos + 1:])

        return TypedTable(schema, self.rows.map(split))

    def with_column(self, name: str, ctype: ColumnType, fn: Callable[[dict[str, Any]], Any]) -> TypedTable:
        """Append a column computed from the decoded row (a name → value dict)."""
        schema = Schema([*self.schema.columns, ColumnDef(name, ctype)])
        dec = Encoder(self.schema)

        def extend(row: bytes) -> bytes:
            cell = encode_value(ctype, fn(dec.decode_dict(row)))
            (count,) = _U32.unpack_from(row, 0)
            return _U32.pack(count + 1) + row[4:] + cell

        return TypedTable(schema, self.rows.map(extend))

    def with_length_column(self, text_column: str, new_column: str) -> TypedTable:
        """Append the Unicode scalar-value count of a Text column."""
        pos = self.schema.index(text_column)
        col = self.schema.columns[pos]
        if col.type is not TEXT:
            raise ColumnTypeError(f"column {text_column!r} is {col.type!r}, not Text")
        schema = Schema([*self.schema.columns, ColumnDef(new_column, INT64)])

        def extend(row: bytes) -> bytes:
            start, end = cell_spans(row)[pos]
            n = len(row[start + 5:end].decode("utf-8"))
            (count,) = _U32.unpack_from(row, 0)
            return _U32.pack(count + 1) + row[4:] + bytes([TAG_INT64]) + _I64.pack(n)

        return TypedTable(schema, self.rows.map(extend))

    # Outputs

    def to_documents(self) -> RecordCollection:
        """Flat key-value documents, keys in schema order."""
        arrays = [c.name for c in self.schema.columns if isinstance(c.type, Array)]
        if arrays:
            raise ColumnTypeError(f"array columns {arrays} cannot become flat documents; explode them first")
        return self.rows.map(Encoder(self.schema).decode_dict)

    def to_objects(self, cls: type) -> RecordCollection:
        return self.rows.map(Encoder(self.schema, cls).decode)

    def collect(self) -> list[tuple[Any, ...]]:
        dec = Encoder(self.schema)
        return [dec.decode_values(r) for r in self.rows.collect()]

    def count(self) -> int:
        return self.rows.count()
