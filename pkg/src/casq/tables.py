"""Column schemas, value conversion, and the byte-accounting rule.

Tables throughout the system are plain row tuples described by a
:class:`Schema`. Cell types are limited to integer, float, string, and
date; sizes are charged deterministically so quota arithmetic is exact:
8 bytes per integer/float/date cell, UTF-8 byte length per string cell,
plus 16 bytes of per-row overhead.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import TypeMismatch

ROW_OVERHEAD_BYTES = 16
FIXED_CELL_BYTES = 8


class ColumnType(str, Enum):
    INTEGER = "integer"
    FLOAT = "float"
    STRING = "string"
    DATE = "date"


@dataclass(frozen=True)
class Column:
    name: str
    type: ColumnType


class Schema:
    """Ordered list of named, typed columns."""

    def __init__(self, columns: Sequence[Column]):
        self.columns = list(columns)

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self):
        return iter(self.columns)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Schema) and self.columns == other.columns

    def __repr__(self) -> str:
        cols = ", ".join(f"{c.name}:{c.type.value}" for c in self.columns)
        return f"Schema({cols})"

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_pairs(self) -> list[tuple[str, str]]:
        return [(c.name, c.type.value) for c in self.columns]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "Schema":
        return cls([Column(name, ColumnType(t)) for name, t in pairs])


def convert_cell(raw: Any, ctype: ColumnType) -> Any:
    """Coerce one cell to its column type; raises TypeMismatch on failure.

    Strings are parsed for integer/float/date columns (dates ISO-8601
    only). Existing typed values pass through unchanged.
    """
    try:
        if ctype is ColumnType.INTEGER:
            if isinstance(raw, bool):
                raise ValueError("bool is not an integer cell")
            if isinstance(raw, int):
                return raw
            if isinstance(raw, str):
                return int(raw.strip())
        elif ctype is ColumnType.FLOAT:
            if isinstance(raw, bool):
                raise ValueError("bool is not a float cell")
            if isinstance(raw, (int, float)):
                return float(raw)
            if isinstance(raw, str):
                return float(raw.strip())
        elif ctype is ColumnType.STRING:
            if isinstance(raw, str):
                return raw
        elif ctype is ColumnType.DATE:
            if isinstance(raw, date):
                return raw
            if isinstance(raw, str):
                return date.fromisoformat(raw.strip())
    except (ValueError, TypeError) as exc:
        raise TypeMismatch(f"cannot convert {raw!r} to {ctype.value}") from exc
    raise TypeMismatch(f"cannot convert {type(raw).__name__} value {raw!r} to {ctype.value}")


def convert_row(raw_row: Sequence[Any], schema: Schema) -> tuple:
    return tuple(convert_cell(v, c.type) for v, c in zip(raw_row, schema.columns))


def cell_bytes(value: Any, ctype: ColumnType) -> int:
    if ctype is ColumnType.STRING:
        return len(str(value).encode("utf-8"))
    return FIXED_CELL_BYTES


def row_bytes(row: Sequence[Any], schema: Schema) -> int:
    """Deterministic size charge for one row under the accounting rule."""
    total = ROW_OVERHEAD_BYTES
    for value, col in zip(row, schema.columns):
        total += cell_bytes(value, col.type)
    return total


def render_cell(value: Any) -> str:
    """Canonical text form used by CSV output and content digests."""
    if value is None:
        return ""
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def content_hash(schema: Schema, rows: Iterable[Sequence[Any]]) -> str:
    """Order-independent digest of a table's schema and row contents."""
    h = hashlib.sha256()
    for name, t in schema.to_pairs():
        h.update(name.encode("utf-8"))
        h.update(b"\x00")
        h.update(t.encode("utf-8"))
        h.update(b"\x01")
    rendered = sorted("\x1f".join(render_cell(v) for v in row) for row in rows)
    for line in rendered:
        h.update(line.encode("utf-8"))
        h.update(b"\x02")
    return h.hexdigest()
