"""Row encoding helpers: factorization and stable value hashing.

Grouping, joins and hashed sampling all need a way to treat a tuple of
column values as a single key. ``factorize`` maps rows to dense integer
codes (nulls get their own code, so a null key forms its own group and
joins against itself). ``hash`` maps values to stable 64-bit integers that
do not depend on the process or session, which makes hash-based samples
reproducible across runs.
"""

from __future__ import annotations

import numpy as np

from .schema import BOOL, FLOAT64, INT64, TEXT, Relation

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)
_NULL_HASH = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x += np.uint64(0x9E3779B97F4A7C15)
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def _fnv1a(text: str) -> int:
    h = int(_FNV_OFFSET)
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * int(_FNV_PRIME)) & 0xFFFFFFFFFFFFFFFF
    return h


def hash_column(values: np.ndarray, kind: str) -> np.ndarray:
    """Stable uint64 hash of one column."""
    if kind == INT64 or kind == BOOL:
        return _splitmix64(values.astype(np.int64).view(np.uint64))
    if kind == FLOAT64:
        canon = values.astype(np.float64, copy=True)
        canon[canon == 0.0] = 0.0  # -0.0 folds into +0.0
        bits = canon.view(np.uint64).copy()
        nan = np.isnan(canon)
        if nan.any():
            bits[nan] = _NULL_HASH
        return _splitmix64(bits)
    # text: hash each distinct value once, then scatter
    mapping: dict = {}
    inverse = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values.tolist()):
        inverse[i] = mapping.setdefault(v, len(mapping))
    hashed = np.array(
        [int(_NULL_HASH) if v is None else _fnv1a(v) for v in mapping],
        dtype=np.uint64,
    )
    if not len(hashed):
        return np.empty(0, dtype=np.uint64)
    return _splitmix64(hashed)[inverse]


def hash_rows(rel: Relation, names: list[str]) -> np.ndarray:
    """Combine per-column hashes into one stable uint64 per row."""
    mixed = np.full(rel.row_count, _FNV_OFFSET, dtype=np.uint64)
    for name in names:
        col = rel.column(name)
        kind = rel.schema.kind_of(name)
        with np.errstate(over="ignore"):
            mixed = _splitmix64(mixed ^ hash_column(col, kind))
    return mixed


def hash01_rows(rel: Relation, names: list[str]) -> np.ndarray:
    """Deterministic uniform hash of a column tuple into [0, 1)."""
    h = hash_rows(rel, names)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def factorize_column(values: np.ndarray, kind: str) -> tuple[np.ndarray, int]:
    """Dense int64 codes for one column; nulls share a single code."""
    if kind == TEXT:
        mapping: dict = {}
        codes = np.empty(len(values), dtype=np.int64)
        for i, v in enumerate(values.tolist()):
            codes[i] = mapping.setdefault(v, len(mapping))
        return codes, len(mapping)
    if kind == FLOAT64:
        vals = values.astype(np.float64, copy=True)
        nan = np.isnan(vals)
        if nan.any():
            vals[nan] = np.inf  # fold all NaN into one sentinel group
            uniq, codes = np.unique(vals, return_inverse=True)
            return codes.astype(np.int64), len(uniq)
    uniq, codes = np.unique(values, return_inverse=True)
    return codes.astype(np.int64), len(uniq)


def _column_codes(values: np.ndarray, kind: str, n: int) -> tuple[np.ndarray, int]:
    """Per-column codes in [0, card); integer columns with a modest value
    range skip the sort-based factorization."""
    if kind in (INT64, BOOL) and len(values):
        vals = values.astype(np.int64, copy=False)
        lo = int(vals.min())
        hi = int(vals.max())
        span = hi - lo + 1
        if span <= 16 * n + 1024:
            return vals - np.int64(lo), span
    return factorize_column(values, kind)


def factorize_rows(rel: Relation, names: list[str]) -> tuple[np.ndarray, int]:
    """Dense int64 codes for row tuples over the given columns.

    Equal tuples (nulls included) get equal codes. An empty column list
    yields a single group.
    """
    n = rel.row_count
    if not names:
        return np.zeros(n, dtype=np.int64), 1 if n else 0
    combined = np.zeros(n, dtype=np.int64)
    span = 1
    for name in names:
        codes, card = _column_codes(rel.column(name), rel.schema.kind_of(name), n)
        card = max(card, 1)
        if span * card > 2**62 or (combined.size and combined.max() > 2**62 // card):
            combined = np.unique(combined, return_inverse=True)[1].astype(np.int64)
            span = int(combined.max()) + 1 if combined.size else 1
        combined = combined * np.int64(card) + codes
        span *= card
    if not combined.size:
        return combined, 0
    if span <= 16 * n + 1024:
        # presence-based densification: O(n + span), no sort
        counts = np.bincount(combined, minlength=span)
        mapping = np.cumsum(counts > 0) - 1
        return mapping[combined].astype(np.int64), int((counts > 0).sum())
    uniq, dense = np.unique(combined, return_inverse=True)
    return dense.astype(np.int64), len(uniq)


def group_codes(rel: Relation, names: list[str]) -> tuple[np.ndarray, int, np.ndarray, np.ndarray]:
    """Group assignment for aggregation in one pass over the codes.

    Returns (dense codes in first-appearance order, group count, per-group
    counts, representative row index per group).
    """
    codes, k = factorize_rows(rel, names)
    n = rel.row_count
    if n == 0:
        return codes, k, np.zeros(k, dtype=np.int64), np.empty(0, dtype=np.int64)
    counts = np.bincount(codes, minlength=k)
    # reversed scatter leaves the first occurrence as the surviving write
    first = np.empty(k, dtype=np.int64)
    first[codes[::-1]] = np.arange(n - 1, -1, -1)
    order = np.argsort(first, kind="stable")
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    return remap[codes], k, counts[order], first[order]
