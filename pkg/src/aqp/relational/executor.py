"""Plan evaluation and the base-table registry.

The executor is columnar and single-threaded per query. ``execute`` is a
pure function of (plan, registered data, seed): all ``rand()`` call sites
consume a PCG64 generator seeded by the query seed, and every operator
preserves row order, so repeated executions are bit-identical.
"""

from __future__ import annotations

import threading
from typing import Optional, Sequence

import numpy as np

from ..errors import DuplicateTable, EvaluationError, SchemaMismatch, UnknownTable
from . import codes
from .expr import EvalContext, evaluate, infer_kind
from .plan import Aggregate, AggSpec, EquiJoin, Filter, Limit, PlanNode, Project, Scan, Union
from .schema import BOOL, FLOAT64, INT64, TEXT, Column, Relation, Schema


# --- relation-level kernels -------------------------------------------------


def join_relations(
    left: Relation,
    right: Relation,
    left_keys: Sequence[str],
    right_keys: Sequence[str],
    suffix: str = "_r",
) -> Relation:
    """Inner equi-join of two relations (cross product on empty keys)."""
    if len(left_keys) != len(right_keys):
        raise SchemaMismatch("join key lists differ in length")
    if not left_keys:
        li = np.repeat(np.arange(left.row_count), right.row_count)
        ri = np.tile(np.arange(right.row_count), left.row_count)
    else:
        li, ri = _match_keys(left, right, list(left_keys), list(right_keys))
    out_cols = [c[li] for c in (left.column_at(i) for i in range(len(left.schema)))]
    names = list(left.schema.names)
    kinds = list(left.schema.kinds)
    taken = {n.lower() for n in names}
    for col, spec in zip(
        (right.column_at(i) for i in range(len(right.schema))), right.schema.columns
    ):
        name = spec.name
        while name.lower() in taken:
            name = name + suffix
        taken.add(name.lower())
        names.append(name)
        kinds.append(spec.kind)
        out_cols.append(col[ri])
    return Relation(Schema(zip(names, kinds)), out_cols)


def _match_keys(left, right, left_keys, right_keys):
    """Row index pairs (left, right) of matching key tuples."""
    stacked = _stack_keys(left, left_keys, right, right_keys)
    all_codes, _ = stacked
    lcodes = all_codes[: left.row_count]
    rcodes = all_codes[left.row_count:]
    order = np.argsort(rcodes, kind="stable")
    sorted_r = rcodes[order]
    lo = np.searchsorted(sorted_r, lcodes, side="left")
    hi = np.searchsorted(sorted_r, lcodes, side="right")
    counts = hi - lo
    li = np.repeat(np.arange(left.row_count), counts)
    if li.size == 0:
        return li, li.copy()
    # offsets into sorted right rows for each emitted pair
    starts = np.repeat(lo, counts)
    within = np.arange(li.size) - np.repeat(
        np.concatenate(([0], np.cumsum(counts)[:-1])), counts
    )
    ri = order[starts + within]
    return li, ri


def _stack_keys(left, left_keys, right, right_keys):
    """Factorize key tuples over the concatenation of both sides."""
    combined = np.zeros(left.row_count + right.row_count, dtype=np.int64)
    for lk, rk in zip(left_keys, right_keys):
        lkind = left.schema.kind_of(lk)
        rkind = right.schema.kind_of(rk)
        if (lkind == TEXT) != (rkind == TEXT):
            raise SchemaMismatch(f"join keys {lk}/{rk} have incompatible kinds")
        lcol = left.column(lk)
        rcol = right.column(rk)
        if lkind == TEXT:
            merged = np.empty(len(lcol) + len(rcol), dtype=object)
            merged[: len(lcol)] = lcol
            merged[len(lcol):] = rcol
            ccodes, card = codes.factorize_column(merged, TEXT)
        else:
            merged = np.concatenate(
                [lcol.astype(np.float64), rcol.astype(np.float64)]
            )
            ccodes, card = codes.factorize_column(merged, FLOAT64)
        combined = combined * np.int64(max(card, 1)) + ccodes
        if combined.size and combined.max() > 2**62:
            combined = np.unique(combined, return_inverse=True)[1].astype(np.int64)
    return combined, None


_AGG_KIND = {
    "count_star": INT64,
    "count": INT64,
    "count_distinct": INT64,
    "sum": None,  # follows input, int stays int
    "min": None,
    "max": None,
    "avg": FLOAT64,
    "var": FLOAT64,
    "stddev": FLOAT64,
    "quantile": None,
    "wsum": FLOAT64,
    "wavg": FLOAT64,
    "wvar": FLOAT64,
    "wstddev": FLOAT64,
    "wquantile": FLOAT64,
}


def aggregate_relation(
    rel: Relation, group: Sequence[str], aggs: Sequence[AggSpec]
) -> Relation:
    """Group-by aggregation under multiset semantics.

    A global aggregate (empty group) over an empty input yields one row:
    counts are 0 and value aggregates are NaN.
    """
    group = list(group)
    gcodes, k, counts, first = codes.group_codes(rel, group)
    empty_global = not group and rel.row_count == 0
    if empty_global:
        k = 1
        counts = np.zeros(1, dtype=np.int64)

    out_names: list[str] = []
    out_kinds: list[str] = []
    out_cols: list[np.ndarray] = []
    for name in group:
        col = rel.column(name)
        out_names.append(name)
        out_kinds.append(rel.schema.kind_of(name))
        out_cols.append(col[first] if rel.row_count else col[:0])
    for spec in aggs:
        values = _agg_values(rel, spec, gcodes, k, counts)
        kind = _AGG_KIND[spec.func]
        if kind is None:
            src = INT64 if spec.arg is None else rel.schema.kind_of(spec.arg)
            kind = FLOAT64 if spec.func == "quantile" else src
            if spec.func in ("sum", "min", "max") and src == INT64:
                # empty-global NaN forces float
                kind = INT64 if not empty_global else FLOAT64
        if kind == INT64 and values.dtype != np.int64:
            values = values.astype(np.int64)
        out_names.append(spec.name)
        out_kinds.append(kind)
        out_cols.append(values)
    return Relation(Schema(zip(out_names, out_kinds)), out_cols)


def _agg_values(rel, spec, gcodes, k, counts) -> np.ndarray:
    func = spec.func
    if func == "count_star":
        return counts.astype(np.int64)
    arg = rel.column(spec.arg) if spec.arg is not None else None
    if func == "count":
        mask = _notnull(arg)
        return np.bincount(gcodes[mask], minlength=k).astype(np.int64)
    if func in ("sum", "avg", "var", "stddev"):
        x = arg.astype(np.float64, copy=False)
        sums = np.bincount(gcodes, weights=x, minlength=k)
        if func == "sum":
            out = sums
            out = out.astype(np.float64)
            out[counts == 0] = np.nan
            if rel.schema.kind_of(spec.arg) == INT64 and not np.isnan(out).any():
                return np.rint(out).astype(np.int64)
            return out
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / counts
        if func == "avg":
            return means
        dev = x - means[gcodes]
        ss = np.bincount(gcodes, weights=dev * dev, minlength=k)
        with np.errstate(invalid="ignore", divide="ignore"):
            var = ss / np.maximum(counts - 1, 1)
        var[counts < 2] = np.nan if k else 0.0
        return var if func == "var" else np.sqrt(var)
    if func in ("min", "max"):
        x = arg.astype(np.float64, copy=False) if arg.dtype != object else arg
        if arg.dtype == object:
            out = np.empty(k, dtype=object)
            best: dict[int, object] = {}
            for code, v in zip(gcodes.tolist(), arg.tolist()):
                if v is None:
                    continue
                cur = best.get(code)
                if cur is None or (v < cur if func == "min" else v > cur):
                    best[code] = v
            for i in range(k):
                out[i] = best.get(i)
            return out
        fill = np.inf if func == "min" else -np.inf
        out = np.full(k, fill, dtype=np.float64)
        op = np.minimum if func == "min" else np.maximum
        op.at(out, gcodes, x)
        out[counts == 0] = np.nan
        if rel.schema.kind_of(spec.arg) == INT64 and not np.isnan(out).any():
            return np.rint(out).astype(np.int64)
        return out
    if func == "count_distinct":
        vc, _ = codes.factorize_column(arg, rel.schema.kind_of(spec.arg))
        mask = _notnull(arg)
        pairs = np.unique(np.stack([gcodes[mask], vc[mask]]), axis=1)
        return np.bincount(pairs[0], minlength=k).astype(np.int64)
    if func in ("quantile", "wquantile", "wsum", "wavg", "wvar", "wstddev"):
        w = rel.column(spec.weight).astype(np.float64, copy=False) if spec.weight else None
        if func == "wsum":
            return np.bincount(gcodes, weights=arg.astype(np.float64, copy=False) * w, minlength=k)
        if func == "wavg":
            num = np.bincount(gcodes, weights=arg.astype(np.float64, copy=False) * w, minlength=k)
            den = np.bincount(gcodes, weights=w, minlength=k)
            with np.errstate(invalid="ignore", divide="ignore"):
                return num / den
        if func in ("wvar", "wstddev"):
            x = arg.astype(np.float64, copy=False)
            sw = np.bincount(gcodes, weights=w, minlength=k)
            swx = np.bincount(gcodes, weights=w * x, minlength=k)
            swxx = np.bincount(gcodes, weights=w * x * x, minlength=k)
            with np.errstate(invalid="ignore", divide="ignore"):
                var = (swxx - swx * swx / sw) / np.maximum(sw - 1.0, 1e-300)
            var = np.maximum(var, 0.0)
            var[counts < 2] = np.nan
            return var if func == "wvar" else np.sqrt(var)
        # exact / weighted percentile, per group
        out = np.full(k, np.nan, dtype=np.float64)
        order = np.argsort(gcodes, kind="stable")
        bounds = np.concatenate(([0], np.cumsum(np.bincount(gcodes, minlength=k))))
        x = arg.astype(np.float64, copy=False)[order]
        wv = w[order] if w is not None else None
        for g in range(k):
            seg = slice(bounds[g], bounds[g + 1])
            if bounds[g + 1] == bounds[g]:
                continue
            if func == "quantile":
                out[g] = exact_percentile(x[seg], spec.param)
            else:
                out[g] = weighted_percentile(x[seg], wv[seg], spec.param)
        return out
    raise EvaluationError(f"unknown aggregate {func!r}")


def _notnull(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == object:
        return np.array([v is not None for v in arr.tolist()], dtype=np.bool_)
    if arr.dtype == np.float64:
        return ~np.isnan(arr)
    return np.ones(len(arr), dtype=np.bool_)


def exact_percentile(values: np.ndarray, p: float) -> float:
    """Sorted percentile; ties broken toward the lower value at exact boundaries."""
    xs = np.sort(values)
    pos = p * len(xs)
    idx = int(np.ceil(pos)) - 1 if pos > 0 else 0
    idx = min(max(idx, 0), len(xs) - 1)
    return float(xs[idx])


def weighted_percentile(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """Smallest value whose cumulative weight share reaches p."""
    order = np.argsort(values, kind="stable")
    xs = values[order]
    cw = np.cumsum(weights[order])
    total = cw[-1]
    idx = int(np.searchsorted(cw, p * total, side="left"))
    idx = min(idx, len(xs) - 1)
    return float(xs[idx])


# --- plan evaluation ---------------------------------------------------------


class Database:
    """Registry of named base tables; many readers, single writer."""

    def __init__(self):
        self._tables: dict[str, Relation] = {}
        self._lock = threading.RLock()

    def register(self, name: str, rel: Relation, replace: bool = False):
        with self._lock:
            if not replace and name in self._tables:
                raise DuplicateTable(f"table {name!r} already exists")
            self._tables[name] = rel

    def drop(self, name: str):
        with self._lock:
            self._tables.pop(name, None)

    def get(self, name: str) -> Relation:
        with self._lock:
            try:
                return self._tables[name]
            except KeyError:
                raise UnknownTable(f"no table named {name!r}") from None

    def has(self, name: str) -> bool:
        with self._lock:
            return name in self._tables

    def append(self, name: str, rows: Relation):
        with self._lock:
            cur = self.get(name)
            if cur.schema.kinds != rows.schema.kinds:
                raise SchemaMismatch(f"appended rows do not match {name!r} schema")
            self._tables[name] = cur.concat(rows)

    def table_names(self) -> list[str]:
        with self._lock:
            return sorted(self._tables)

    def execute(self, plan: PlanNode, seed: int) -> Relation:
        """Evaluate a plan; pure in (plan, registered data, seed)."""
        ctx = EvalContext(np.random.default_rng(np.random.PCG64(seed)))
        memo: dict[int, Relation] = {}
        return self._eval(plan, ctx, memo)

    def create_table_as(self, name: str, plan: PlanNode, seed: int) -> str:
        with self._lock:
            if name in self._tables:
                raise DuplicateTable(f"table {name!r} already exists")
            rel = self.execute(plan, seed)
            self._tables[name] = rel
            return name

    def _eval(self, node: PlanNode, ctx: EvalContext, memo: dict) -> Relation:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        rel = self._eval_inner(node, ctx, memo)
        memo[id(node)] = rel
        return rel

    def _eval_inner(self, node: PlanNode, ctx: EvalContext, memo: dict) -> Relation:
        if isinstance(node, Scan):
            return self.get(node.table)
        if isinstance(node, Project):
            child = self._eval(node.child, ctx, memo)
            names, kinds, cols = [], [], []
            dtypes = {INT64: np.int64, FLOAT64: np.float64, BOOL: np.bool_}
            for name, expr in node.outputs:
                kind = infer_kind(expr, child.schema)
                values = np.asarray(evaluate(expr, child, ctx))
                if values.ndim == 0:
                    values = np.full(
                        child.row_count, values[()], dtype=dtypes.get(kind, object)
                    )
                elif kind in dtypes and values.dtype != dtypes[kind]:
                    values = values.astype(dtypes[kind], copy=False)
                names.append(name)
                kinds.append(kind)
                cols.append(values)
            return Relation(Schema(zip(names, kinds)), cols)
        if isinstance(node, Filter):
            child = self._eval(node.child, ctx, memo)
            mask = np.asarray(evaluate(node.predicate, child, ctx))
            if mask.ndim == 0:
                mask = np.broadcast_to(mask, child.row_count)
            if mask.dtype != np.bool_:
                raise EvaluationError("filter predicate is not boolean")
            return child.take(mask)
        if isinstance(node, EquiJoin):
            left = self._eval(node.left, ctx, memo)
            right = self._eval(node.right, ctx, memo)
            return join_relations(
                left, right, node.left_keys, node.right_keys, node.suffix
            )
        if isinstance(node, Aggregate):
            child = self._eval(node.child, ctx, memo)
            return aggregate_relation(child, node.group, node.aggs)
        if isinstance(node, Union):
            rels = [self._eval(c, ctx, memo) for c in node.children]
            out = rels[0]
            for r in rels[1:]:
                out = out.concat(r)
            return out
        if isinstance(node, Limit):
            child = self._eval(node.child, ctx, memo)
            return child.take(np.arange(min(node.n, child.row_count)))
        raise EvaluationError(f"unknown plan node {node!r}")
