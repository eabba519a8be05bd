"""Scalar expression trees and their vectorized evaluation.

Expressions are evaluated column-at-a-time against a relation. ``Rand``
draws come from the executor session's generator (one fresh vector per
call site per evaluation), while ``Hash01`` is a pure function of its
input values and stable across sessions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import DivideByZero, EvaluationError, TypeMismatch
from . import codes
from .schema import BOOL, FLOAT64, INT64, TEXT, Relation, Schema


class Expr:
    """Base class for scalar expressions."""


@dataclass(frozen=True)
class Col(Expr):
    name: str


@dataclass(frozen=True)
class Lit(Expr):
    value: object


@dataclass(frozen=True)
class Arith(Expr):
    op: str  # + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Cmp(Expr):
    op: str  # < <= > >= = !=
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Or(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Not(Expr):
    child: Expr


@dataclass(frozen=True)
class CaseWhen(Expr):
    """First branch whose condition holds wins; otherwise the default."""

    branches: tuple[tuple[Expr, Expr], ...]
    default: Expr


@dataclass(frozen=True)
class Rand(Expr):
    """Uniform draw on [0, 1), one independent value per tuple per call site."""


@dataclass(frozen=True)
class RandInt(Expr):
    """Uniform integer draw on {1..k}; the fused form of 1+floor(rand()*k)."""

    k: int


@dataclass(frozen=True)
class Hash01(Expr):
    """Deterministic uniform hash of a column tuple into [0, 1)."""

    columns: tuple[str, ...]


@dataclass(frozen=True)
class Floor(Expr):
    child: Expr


@dataclass(frozen=True)
class Sqrt(Expr):
    child: Expr


@dataclass(frozen=True)
class In(Expr):
    child: Expr
    options: tuple


@dataclass(frozen=True)
class Like(Expr):
    child: Expr
    pattern: str  # SQL pattern with % and _


@dataclass(frozen=True)
class WindowSum(Expr):
    """sum(child) over (partition by columns)."""

    child: Expr
    partition: tuple[str, ...]


def window_count(partition: Sequence[str]) -> WindowSum:
    """count(*) over (partition by columns), as a windowed sum of ones."""
    return WindowSum(Lit(1), tuple(partition))


# --- kind inference -------------------------------------------------------


def _lit_kind(value) -> str:
    if isinstance(value, bool):
        return BOOL
    if isinstance(value, (int, np.integer)):
        return INT64
    if isinstance(value, (float, np.floating)):
        return FLOAT64
    if isinstance(value, str) or value is None:
        return TEXT
    raise TypeMismatch(f"unsupported literal {value!r}")


def infer_kind(expr: Expr, schema: Schema) -> str:
    if isinstance(expr, Col):
        return schema.kind_of(expr.name)
    if isinstance(expr, Lit):
        return _lit_kind(expr.value)
    if isinstance(expr, Arith):
        lk = infer_kind(expr.left, schema)
        rk = infer_kind(expr.right, schema)
        if lk == TEXT or rk == TEXT:
            raise TypeMismatch("arithmetic on text column")
        if expr.op == "/" or FLOAT64 in (lk, rk):
            return FLOAT64
        return INT64
    if isinstance(expr, (Cmp, And, Or, Not, In, Like)):
        return BOOL
    if isinstance(expr, RandInt):
        return INT64
    if isinstance(expr, CaseWhen):
        kinds = {infer_kind(v, schema) for _, v in expr.branches}
        kinds.add(infer_kind(expr.default, schema))
        if kinds == {INT64, FLOAT64}:
            return FLOAT64
        if len(kinds) > 1:
            raise TypeMismatch(f"case branches disagree on kind: {kinds}")
        return kinds.pop()
    if isinstance(expr, (Rand, Hash01, Sqrt)):
        return FLOAT64
    if isinstance(expr, Floor):
        return INT64
    if isinstance(expr, WindowSum):
        inner = infer_kind(expr.child, schema)
        return FLOAT64 if inner == FLOAT64 else INT64
    raise TypeMismatch(f"cannot infer kind of {expr!r}")


# --- evaluation -------------------------------------------------------------


class EvalContext:
    """Carries the session RNG used by Rand call sites."""

    def __init__(self, rng: Optional[np.random.Generator] = None):
        self.rng = rng

    def draw(self, n: int) -> np.ndarray:
        if self.rng is None:
            raise EvaluationError("rand() used outside an executor session")
        return self.rng.random(n)

    def draw_int(self, n: int, k: int) -> np.ndarray:
        if self.rng is None:
            raise EvaluationError("rand() used outside an executor session")
        return self.rng.integers(1, k + 1, n)


def _like_regex(pattern: str) -> re.Pattern:
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("^" + "".join(out) + "$", re.DOTALL)


def evaluate(expr: Expr, rel: Relation, ctx: EvalContext) -> np.ndarray:
    n = rel.row_count
    if isinstance(expr, Col):
        return rel.column(expr.name)
    if isinstance(expr, Lit):
        kind = _lit_kind(expr.value)
        if kind == TEXT:
            arr = np.empty(n, dtype=object)
            arr[:] = expr.value
            return arr
        # numpy scalar: broadcasting avoids materializing constant columns
        dtype = {INT64: np.int64, FLOAT64: np.float64, BOOL: np.bool_}[kind]
        return dtype(expr.value)
    if isinstance(expr, Arith):
        left = evaluate(expr.left, rel, ctx)
        right = evaluate(expr.right, rel, ctx)
        if left.dtype == object or right.dtype == object:
            raise TypeMismatch("arithmetic on text column")
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if expr.op == "/":
            if np.any(right == 0):
                raise DivideByZero("division by zero")
            return left.astype(np.float64, copy=False) / right
        raise EvaluationError(f"unknown arithmetic op {expr.op!r}")
    if isinstance(expr, Cmp):
        left = evaluate(expr.left, rel, ctx)
        right = evaluate(expr.right, rel, ctx)
        if (left.dtype == object) != (right.dtype == object):
            raise TypeMismatch("comparison between text and non-text")
        if left.dtype == object and expr.op not in ("=", "!="):
            # ordered text comparison: fall back to python semantics
            lv, rv = left.tolist(), right.tolist()
            op = expr.op
            table = {
                "<": lambda a, b: a < b,
                "<=": lambda a, b: a <= b,
                ">": lambda a, b: a > b,
                ">=": lambda a, b: a >= b,
            }[op]
            return np.array(
                [False if a is None or b is None else table(a, b) for a, b in zip(lv, rv)],
                dtype=np.bool_,
            )
        ops = {
            "<": np.less,
            "<=": np.less_equal,
            ">": np.greater,
            ">=": np.greater_equal,
            "=": np.equal,
            "!=": np.not_equal,
        }
        with np.errstate(invalid="ignore"):
            return ops[expr.op](left, right).astype(np.bool_)
    if isinstance(expr, And):
        return evaluate(expr.left, rel, ctx) & evaluate(expr.right, rel, ctx)
    if isinstance(expr, Or):
        return evaluate(expr.left, rel, ctx) | evaluate(expr.right, rel, ctx)
    if isinstance(expr, Not):
        return ~evaluate(expr.child, rel, ctx)
    if isinstance(expr, CaseWhen):
        default = np.asarray(evaluate(expr.default, rel, ctx))
        if default.ndim == 0:
            result = np.full(n, default[()], dtype=default.dtype if default.dtype != np.int64 else np.float64)
        elif default.dtype == object:
            result = default.copy()
        else:
            result = default.astype(
                np.float64 if default.dtype != np.bool_ else np.bool_, copy=True
            )
        decided = np.zeros(n, dtype=np.bool_)
        for cond, value in expr.branches:
            cond_vals = np.asarray(evaluate(cond, rel, ctx))
            if cond_vals.ndim == 0:
                cond_vals = np.broadcast_to(cond_vals, n)
            hit = cond_vals & ~decided
            if hit.any():
                vals = np.asarray(evaluate(value, rel, ctx))
                result[hit] = vals[hit] if vals.ndim else vals[()]
            decided |= hit
        return result
    if isinstance(expr, Rand):
        return ctx.draw(n)
    if isinstance(expr, RandInt):
        return ctx.draw_int(n, expr.k)
    if isinstance(expr, Hash01):
        return codes.hash01_rows(rel, list(expr.columns))
    if isinstance(expr, Floor):
        child = evaluate(expr.child, rel, ctx)
        return np.floor(child).astype(np.int64)
    if isinstance(expr, Sqrt):
        child = evaluate(expr.child, rel, ctx)
        return np.sqrt(child.astype(np.float64, copy=False))
    if isinstance(expr, In):
        child = evaluate(expr.child, rel, ctx)
        mask = np.zeros(n, dtype=np.bool_)
        for opt in expr.options:
            with np.errstate(invalid="ignore"):
                mask |= np.asarray(child == opt, dtype=np.bool_)
        return mask
    if isinstance(expr, Like):
        child = evaluate(expr.child, rel, ctx)
        if child.dtype != object:
            raise TypeMismatch("LIKE on non-text column")
        rx = _like_regex(expr.pattern)
        return np.array(
            [v is not None and rx.match(v) is not None for v in child.tolist()],
            dtype=np.bool_,
        )
    if isinstance(expr, WindowSum):
        values = np.asarray(evaluate(expr.child, rel, ctx))
        part, k = codes.factorize_rows(rel, list(expr.partition))
        if n == 0:
            return np.zeros(0, dtype=values.dtype)
        if values.ndim == 0:
            sums = np.bincount(part, minlength=max(k, 1)) * values[()]
        else:
            sums = np.bincount(
                part, weights=values.astype(np.float64, copy=False), minlength=max(k, 1)
            )
        out = sums[part]
        if values.dtype != np.float64:
            return np.rint(out).astype(np.int64)
        return out
    raise EvaluationError(f"cannot evaluate {expr!r}")


def columns_referenced(expr: Expr) -> set[str]:
    out: set[str] = set()

    def walk(e: Expr):
        if isinstance(e, Col):
            out.add(e.name)
        elif isinstance(e, Hash01):
            out.update(e.columns)
        elif isinstance(e, WindowSum):
            out.update(e.partition)
            walk(e.child)
        elif isinstance(e, (Arith, Cmp, And, Or)):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, (Not, Floor, Sqrt, In, Like)):
            walk(e.child)
        elif isinstance(e, CaseWhen):
            for c, v in e.branches:
                walk(c)
                walk(v)
            walk(e.default)

    walk(expr)
    return out
