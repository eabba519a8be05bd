"""CSV ingestion and on-disk catalog persistence.

Catalog layout (version 1)::

    <dir>/manifest.json            versioned header + table schemas
    <dir>/tables/<table>/<col>.npy numeric and bool columns
    <dir>/tables/<table>/<col>.jsonl
                                   text columns, one JSON string (or null)
                                   per line

The manifest's ``format``/``version`` fields gate loading, so the layout
can evolve without silently misreading older directories.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from ..errors import ArityError, ParseError, SchemaMismatch
from .executor import Database
from .schema import BOOL, FLOAT64, INT64, TEXT, Relation, Schema

FORMAT_NAME = "aqp-catalog"
FORMAT_VERSION = 1

_BOOL_WORDS = {"true": True, "t": True, "1": True, "false": False, "f": False, "0": False}


def _parse_cell(cell: str, kind: str, line: int, col: int):
    if kind == TEXT:
        return None if cell == "" else cell
    if kind == INT64:
        try:
            return int(cell)
        except ValueError:
            raise ParseError(line, col, f"{cell!r} is not an int64") from None
    if kind == FLOAT64:
        if cell == "":
            return float("nan")
        try:
            return float(cell)
        except ValueError:
            raise ParseError(line, col, f"{cell!r} is not a float64") from None
    try:
        return _BOOL_WORDS[cell.strip().lower()]
    except KeyError:
        raise ParseError(line, col, f"{cell!r} is not a bool") from None


def load_csv(
    path: str | Path,
    schema: Schema,
    delimiter: str = ",",
    header: bool = True,
) -> Relation:
    """Parse an RFC-4180-style CSV file into a relation.

    Row order is preserved. Empty cells read as null for float64 and text
    columns and are a ParseError for int64 and bool.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter=delimiter)
        for line_no, record in enumerate(reader, start=1):
            if header and line_no == 1:
                continue
            if not record:
                continue
            if len(record) != len(schema):
                raise ArityError(line_no, len(schema), len(record))
            rows.append(
                tuple(
                    _parse_cell(cell, c.kind, line_no, i + 1)
                    for i, (cell, c) in enumerate(zip(record, schema.columns))
                )
            )
    return Relation.from_rows(schema, rows)


def parse_schema_spec(spec: str) -> Schema:
    """Schema from a compact "name:kind,name:kind" string."""
    cols = []
    for part in spec.split(","):
        name, _, kind = part.strip().partition(":")
        cols.append((name.strip(), kind.strip() or TEXT))
    return Schema(cols)


# --- persistence --------------------------------------------------------


def save_catalog(db: Database, directory: str | Path):
    directory = Path(directory)
    tables_dir = directory / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "tables": {}}
    for name in db.table_names():
        rel = db.get(name)
        manifest["tables"][name] = [[c.name, c.kind] for c in rel.schema.columns]
        tdir = tables_dir / name
        tdir.mkdir(parents=True, exist_ok=True)
        for i, col in enumerate(rel.schema.columns):
            arr = rel.column_at(i)
            if col.kind == TEXT:
                with open(tdir / f"{i:03d}_{col.name}.jsonl", "w", encoding="utf-8") as f:
                    for v in arr.tolist():
                        f.write(json.dumps(v) + "\n")
            else:
                np.save(tdir / f"{i:03d}_{col.name}.npy", arr, allow_pickle=False)
    with open(directory / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def load_catalog(directory: str | Path) -> Database:
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise SchemaMismatch(
            f"unsupported catalog format {manifest.get('format')!r} "
            f"v{manifest.get('version')!r}"
        )
    db = Database()
    for name, cols in manifest["tables"].items():
        schema = Schema([(c[0], c[1]) for c in cols])
        tdir = directory / "tables" / name
        arrays = []
        for i, col in enumerate(schema.columns):
            if col.kind == TEXT:
                with open(tdir / f"{i:03d}_{col.name}.jsonl", encoding="utf-8") as f:
                    values = [json.loads(line) for line in f]
                arr = np.empty(len(values), dtype=object)
                arr[:] = values
                arrays.append(arr)
            else:
                arrays.append(np.load(tdir / f"{i:03d}_{col.name}.npy"))
        db.register(name, Relation(schema, arrays))
    return db
