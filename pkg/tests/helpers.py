"""Test-only oracles.

``brute_force`` interprets a query AST row by row (correlated subqueries
re-evaluated per outer row), independent of the plan-based execution path.
Only the constructs the tests need are implemented.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from aqp.frontend.ast import (
    AggCall,
    BinOp,
    ColRef,
    InList,
    LikeOp,
    Literal,
    Negate,
    NotOp,
    QueryAst,
    ScalarSubquery,
)
from aqp.relational import Database
from aqp.relational.executor import exact_percentile


def brute_force(db: Database, ast: QueryAst) -> Counter:
    """Result multiset of a query, computed by naive iteration."""
    rows = list(_rows(db, ast))
    if not ast.is_aggregate:
        out = Counter()
        for env in rows:
            out[tuple(_eval(item.expr, env, db) for item in ast.select)] += 1
        return out
    groups: dict[tuple, list[dict]] = {}
    for env in rows:
        key = tuple(_eval(g, env, db) for g in ast.group_by)
        groups.setdefault(key, []).append(env)
    out = Counter()
    for key, envs in groups.items():
        row = tuple(_eval(item.expr, envs[0], db, envs) for item in ast.select)
        out[row] += 1
    if not ast.group_by and not groups:
        row = tuple(_eval(item.expr, {}, db, []) for item in ast.select)
        out[row] += 1
    return out


def _rows(db: Database, ast: QueryAst):
    tables = []
    for ref in ast.tables:
        if ref.is_derived:
            raise NotImplementedError("oracle supports base tables only")
        rel = db.get(ref.name)
        names = rel.schema.names
        tables.append((ref.alias, [dict(zip(names, r)) for r in rel.rows()]))

    def product(i, env):
        if i == len(tables):
            yield dict(env)
            return
        alias, rows = tables[i]
        conds = ast.join_conds[i - 1] if i >= 1 else ()
        for row in rows:
            candidate = dict(env)
            for name, value in row.items():
                candidate[f"{alias}.{name}"] = value
            ok = True
            for c in conds:
                if _lookup(c.left, candidate) != _lookup(c.right, candidate):
                    ok = False
                    break
            if ok:
                yield from product(i + 1, candidate)

    for env in product(0, {}):
        if ast.where is None or _eval(ast.where, env, db):
            yield env


def _lookup(ref: ColRef, env: dict):
    if ref.table is not None:
        return env[f"{ref.table}.{ref.name}"]
    matches = [k for k in env if k.split(".", 1)[-1] == ref.name]
    if len({env[m] for m in matches}) > 1 and len(matches) > 1:
        pass
    if not matches:
        raise KeyError(ref.name)
    return env[matches[0]]


def _eval(expr, env, db, group_envs=None):
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, ColRef):
        return _lookup(expr, env)
    if isinstance(expr, Negate):
        return -_eval(expr.child, env, db, group_envs)
    if isinstance(expr, NotOp):
        return not _eval(expr.child, env, db, group_envs)
    if isinstance(expr, InList):
        return _eval(expr.child, env, db, group_envs) in expr.options
    if isinstance(expr, LikeOp):
        import re

        pat = "^" + "".join(
            ".*" if c == "%" else "." if c == "_" else re.escape(c)
            for c in expr.pattern
        ) + "$"
        value = _eval(expr.child, env, db, group_envs)
        return value is not None and re.match(pat, value) is not None
    if isinstance(expr, ScalarSubquery):
        sub = brute_force(db, _bind_outer(expr.query, env))
        (row,) = list(sub.elements())
        return row[0]
    if isinstance(expr, AggCall):
        values = None
        if expr.arg is not None:
            values = [_eval(expr.arg, e, db) for e in group_envs]
        if expr.kind == "count" and expr.arg is None:
            return len(group_envs)
        if expr.kind == "count":
            return sum(v is not None for v in values)
        if expr.kind == "count_distinct":
            return len({v for v in values if v is not None})
        clean = [v for v in values if v is not None]
        if expr.kind == "sum":
            return sum(clean) if clean else float("nan")
        if expr.kind == "avg":
            return sum(clean) / len(clean) if clean else float("nan")
        if expr.kind == "min":
            return min(clean) if clean else None
        if expr.kind == "max":
            return max(clean) if clean else None
        if expr.kind == "var":
            return float(np.var(clean, ddof=1)) if len(clean) > 1 else float("nan")
        if expr.kind == "stddev":
            return float(np.std(clean, ddof=1)) if len(clean) > 1 else float("nan")
        if expr.kind == "quantile":
            return exact_percentile(np.asarray(clean, dtype=float), expr.param)
        raise NotImplementedError(expr.kind)
    if isinstance(expr, BinOp):
        if expr.op == "and":
            return bool(_eval(expr.left, env, db, group_envs)) and bool(
                _eval(expr.right, env, db, group_envs)
            )
        if expr.op == "or":
            return bool(_eval(expr.left, env, db, group_envs)) or bool(
                _eval(expr.right, env, db, group_envs)
            )
        left = _eval(expr.left, env, db, group_envs)
        right = _eval(expr.right, env, db, group_envs)
        table = {
            "+": lambda a, b: a + b,
            "-": lambda a, b: a - b,
            "*": lambda a, b: a * b,
            "/": lambda a, b: a / b,
            "<": lambda a, b: a < b,
            "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b,
            ">=": lambda a, b: a >= b,
            "=": lambda a, b: a == b,
            "!=": lambda a, b: a != b,
        }
        return table[expr.op](left, right)
    raise NotImplementedError(type(expr))


def _bind_outer(query: QueryAst, env: dict) -> QueryAst:
    """Substitute outer-column references in a subquery with literals."""

    def subst(e):
        if isinstance(e, ColRef) and e.table is not None:
            qualified = f"{e.table}.{e.name}"
            if qualified in env:
                return Literal(env[qualified])
            return e
        if isinstance(e, BinOp):
            return BinOp(e.op, subst(e.left), subst(e.right))
        if isinstance(e, NotOp):
            return NotOp(subst(e.child))
        return e

    where = subst(query.where) if query.where is not None else None
    return query.with_(where=where)


def normalize(counter, ndigits=9):
    """Round floats so plan-based and naive arithmetic compare equal."""
    out = Counter()
    for row, count in counter.items():
        key = tuple(
            round(v, ndigits) if isinstance(v, float) and not math.isnan(v)
            else ("nan" if isinstance(v, float) and math.isnan(v) else v)
            for v in row
        )
        out[key] += count
    return out
