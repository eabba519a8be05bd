"""Schemas and in-memory relations.

Relations are columnar: one numpy array per column. ``int64`` and ``bool``
columns are non-nullable; ``float64`` uses NaN for null and ``text`` columns
are object arrays where null is ``None``. Row order is preserved by every
operator so that executions are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from ..errors import SchemaMismatch, TypeMismatch

INT64 = "int64"
FLOAT64 = "float64"
TEXT = "text"
BOOL = "bool"

KINDS = (INT64, FLOAT64, TEXT, BOOL)

_DTYPES = {INT64: np.int64, FLOAT64: np.float64, BOOL: np.bool_, TEXT: object}


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TypeMismatch(f"unknown column kind {self.kind!r}")


class Schema:
    """Ordered column list with unique, case-insensitively distinct names."""

    def __init__(self, columns: Iterable[tuple[str, str] | Column]):
        cols = []
        for c in columns:
            cols.append(c if isinstance(c, Column) else Column(*c))
        if not cols:
            raise SchemaMismatch("schema must have at least one column")
        seen = set()
        for c in cols:
            key = c.name.lower()
            if key in seen:
                raise SchemaMismatch(f"duplicate column name {c.name!r}")
            seen.add(key)
        self.columns: tuple[Column, ...] = tuple(cols)
        self._index = {c.name.lower(): i for i, c in enumerate(cols)}

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def kinds(self) -> list[str]:
        return [c.kind for c in self.columns]

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self):
        return iter(self.columns)

    def __eq__(self, other) -> bool:
        return isinstance(other, Schema) and self.columns == other.columns

    def __repr__(self) -> str:
        inner = ", ".join(f"{c.name}:{c.kind}" for c in self.columns)
        return f"Schema({inner})"

    def has(self, name: str) -> bool:
        return name.lower() in self._index

    def index_of(self, name: str) -> int:
        try:
            return self._index[name.lower()]
        except KeyError:
            raise SchemaMismatch(f"no column named {name!r}") from None

    def kind_of(self, name: str) -> str:
        return self.columns[self.index_of(name)].kind

    def renamed(self, mapping: dict[str, str]) -> "Schema":
        return Schema(
            (mapping.get(c.name, c.name), c.kind) for c in self.columns
        )


def _coerce(values, kind: str) -> np.ndarray:
    dtype = _DTYPES[kind]
    if kind == TEXT:
        arr = np.empty(len(values), dtype=object)
        arr[:] = list(values)
        return arr
    arr = np.asarray(values, dtype=dtype)
    return arr


class Relation:
    """A schema plus a multiset of rows, stored column-wise.

    Relations are treated as immutable once constructed; operators build new
    relations that may share column arrays with their inputs.
    """

    def __init__(self, schema: Schema, columns: Sequence[np.ndarray]):
        if len(columns) != len(schema):
            raise SchemaMismatch(
                f"{len(columns)} columns for {len(schema)}-column schema"
            )
        n = len(columns[0]) if columns else 0
        for arr in columns:
            if len(arr) != n:
                raise SchemaMismatch("column arrays differ in length")
        self.schema = schema
        self._cols = list(columns)
        self.row_count = n

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[Sequence]) -> "Relation":
        rows = list(rows)
        cols = []
        for i, c in enumerate(schema.columns):
            cols.append(_coerce([r[i] for r in rows], c.kind))
        if not rows:
            cols = [np.empty(0, dtype=_DTYPES[c.kind]) for c in schema.columns]
        return cls(schema, cols)

    @classmethod
    def from_columns(cls, schema: Schema, columns: Sequence) -> "Relation":
        return cls(
            schema,
            [_coerce(col, c.kind) for col, c in zip(columns, schema.columns)],
        )

    @classmethod
    def empty(cls, schema: Schema) -> "Relation":
        return cls(schema, [np.empty(0, dtype=_DTYPES[c.kind]) for c in schema.columns])

    # -- access ------------------------------------------------------------

    def column(self, name: str) -> np.ndarray:
        return self._cols[self.schema.index_of(name)]

    def column_at(self, i: int) -> np.ndarray:
        return self._cols[i]

    def rows(self) -> Iterator[tuple]:
        arrays = [c.tolist() for c in self._cols]
        return iter(list(zip(*arrays))) if self.row_count else iter(())

    def row_multiset(self) -> dict:
        """Rows with multiplicities, for multiset comparisons in tests."""
        counts: dict = {}
        for r in self.rows():
            counts[r] = counts.get(r, 0) + 1
        return counts

    # -- derivation ---------------------------------------------------------

    def take(self, selector) -> "Relation":
        """New relation keeping rows selected by a boolean mask or index array."""
        return Relation(self.schema, [c[selector] for c in self._cols])

    def with_column(self, name: str, kind: str, values: np.ndarray) -> "Relation":
        schema = Schema(list(self.schema.columns) + [Column(name, kind)])
        return Relation(schema, self._cols + [_coerce(values, kind)])

    def renamed(self, mapping: dict[str, str]) -> "Relation":
        return Relation(self.schema.renamed(mapping), self._cols)

    def select(self, names: Sequence[str]) -> "Relation":
        idx = [self.schema.index_of(n) for n in names]
        schema = Schema([self.schema.columns[i] for i in idx])
        return Relation(schema, [self._cols[i] for i in idx])

    def concat(self, other: "Relation") -> "Relation":
        if self.schema.kinds != other.schema.kinds:
            raise SchemaMismatch("union of relations with different column kinds")
        cols = []
        for a, b, c in zip(self._cols, other._cols, self.schema.columns):
            if c.kind == TEXT:
                merged = np.empty(len(a) + len(b), dtype=object)
                merged[: len(a)] = a
                merged[len(a):] = b
                cols.append(merged)
            else:
                cols.append(np.concatenate([a, b]))
        return Relation(self.schema, cols)

    def __repr__(self) -> str:
        return f"Relation({self.schema!r}, rows={self.row_count})"
