"""SQL-level abstract syntax.

The AST is lossless with respect to the supported grammar: unparsing and
re-parsing yields a structurally equal tree. Queries using recognized but
unapproximable constructs carry a ``passthrough`` reason and are executed
exactly, never approximated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

# aggregate kinds
COUNT = "count"
SUM = "sum"
AVG = "avg"
VAR = "var"
STDDEV = "stddev"
QUANTILE = "quantile"
COUNT_DISTINCT = "count_distinct"
MIN = "min"
MAX = "max"
USER_DEFINED = "user_defined"

EXTREME_KINDS = (MIN, MAX)
MEAN_LIKE_KINDS = (COUNT, SUM, AVG, VAR, STDDEV, QUANTILE, COUNT_DISTINCT, USER_DEFINED)


class SqlExpr:
    pass


@dataclass(frozen=True)
class ColRef(SqlExpr):
    name: str
    table: Optional[str] = None

    def __str__(self):
        return f"{self.table}.{self.name}" if self.table else self.name


@dataclass(frozen=True)
class Literal(SqlExpr):
    value: Union[int, float, str, bool, None]


@dataclass(frozen=True)
class BinOp(SqlExpr):
    op: str  # + - * / < <= > >= = != and or
    left: SqlExpr
    right: SqlExpr


@dataclass(frozen=True)
class NotOp(SqlExpr):
    child: SqlExpr


@dataclass(frozen=True)
class Negate(SqlExpr):
    child: SqlExpr


@dataclass(frozen=True)
class InList(SqlExpr):
    child: SqlExpr
    options: tuple


@dataclass(frozen=True)
class LikeOp(SqlExpr):
    child: SqlExpr
    pattern: str


@dataclass(frozen=True)
class AggCall(SqlExpr):
    kind: str
    arg: Optional[SqlExpr] = None  # None only for count(*)
    param: Optional[float] = None  # quantile fraction

    @property
    def is_extreme(self) -> bool:
        return self.kind in EXTREME_KINDS


@dataclass(frozen=True)
class ScalarSubquery(SqlExpr):
    """A (select agg ...) appearing on one side of a comparison."""

    query: "QueryAst"


@dataclass(frozen=True)
class ExistsSubquery(SqlExpr):
    query: "QueryAst"
    negated: bool = False


@dataclass(frozen=True)
class InSubquery(SqlExpr):
    child: SqlExpr
    query: "QueryAst"


@dataclass(frozen=True)
class SelectItem:
    expr: SqlExpr
    alias: Optional[str] = None


@dataclass(frozen=True)
class TableRef:
    alias: str
    name: Optional[str] = None
    subquery: Optional["QueryAst"] = None

    @property
    def is_derived(self) -> bool:
        return self.subquery is not None


@dataclass(frozen=True)
class JoinCond:
    left: ColRef
    right: ColRef


@dataclass(frozen=True)
class OrderItem:
    ref: ColRef
    descending: bool = False


@dataclass(frozen=True)
class QueryAst:
    select: tuple[SelectItem, ...]
    tables: tuple[TableRef, ...]
    join_conds: tuple[tuple[JoinCond, ...], ...] = ()  # conds for table i+1
    where: Optional[SqlExpr] = None
    group_by: tuple[ColRef, ...] = ()
    order_by: tuple[OrderItem, ...] = ()
    limit: Optional[int] = None
    star: bool = False
    passthrough: Optional[str] = None

    def with_(self, **kw) -> "QueryAst":
        return replace(self, **kw)

    @property
    def is_aggregate(self) -> bool:
        return any(aggregates_in(item.expr) for item in self.select)

    def aggregate_items(self) -> list[tuple[SelectItem, list[AggCall]]]:
        return [(item, aggregates_in(item.expr)) for item in self.select]


def aggregates_in(expr: SqlExpr) -> list[AggCall]:
    found: list[AggCall] = []

    def walk(e):
        if isinstance(e, AggCall):
            found.append(e)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, (NotOp, Negate, InList, LikeOp)):
            walk(e.child)

    walk(expr)
    return found


def subqueries_in(expr: SqlExpr) -> list[SqlExpr]:
    found: list[SqlExpr] = []

    def walk(e):
        if isinstance(e, (ScalarSubquery, ExistsSubquery, InSubquery)):
            found.append(e)
            if isinstance(e, InSubquery):
                walk(e.child)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, (NotOp, Negate, InList, LikeOp)):
            walk(e.child)

    if expr is not None:
        walk(expr)
    return found


def column_refs_in(expr: SqlExpr) -> list[ColRef]:
    found: list[ColRef] = []

    def walk(e):
        if isinstance(e, ColRef):
            found.append(e)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, (NotOp, Negate, InList, LikeOp)):
            walk(e.child)
        elif isinstance(e, AggCall) and e.arg is not None:
            walk(e.arg)

    if expr is not None:
        walk(expr)
    return found
