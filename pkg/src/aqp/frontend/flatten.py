"""Comparison-subquery flattening.

A comparison against a scalar subquery becomes an inner join with a
grouped derived table: the subquery's correlation equalities turn into
join keys and its aggregate into a plain column the comparison can
reference. Uncorrelated subqueries become a cross-joined one-row derived
table. The result multiset is unchanged.
"""

from __future__ import annotations

from typing import Optional

from ..errors import UnsupportedSubquery
from .ast import (
    AggCall,
    BinOp,
    ColRef,
    ExistsSubquery,
    InSubquery,
    JoinCond,
    Literal,
    QueryAst,
    ScalarSubquery,
    SelectItem,
    SqlExpr,
    TableRef,
    column_refs_in,
    subqueries_in,
)


def flatten_comparison_subquery(ast: QueryAst) -> QueryAst:
    """Rewrite every comparison subquery in the WHERE clause into a join."""
    if ast.where is None:
        return ast
    for sub in subqueries_in(ast.where):
        if isinstance(sub, (ExistsSubquery, InSubquery)):
            raise UnsupportedSubquery(
                "only comparison subqueries can be flattened (IN/EXISTS are run exactly)"
            )
    state = _FlattenState(ast)
    new_where = _rewrite(ast.where, state)
    if not state.derived:
        return ast
    return ast.with_(
        where=new_where,
        tables=ast.tables + tuple(t for t, _ in state.derived),
        join_conds=ast.join_conds + tuple(c for _, c in state.derived),
    )


class _FlattenState:
    def __init__(self, ast: QueryAst):
        self.outer_aliases = {t.alias for t in ast.tables}
        self.derived: list[tuple[TableRef, tuple[JoinCond, ...]]] = []
        self.counter = 0

    def fresh_alias(self) -> str:
        # a single underscore: double-underscore names are reserved for
        # rewriter-internal columns
        self.counter += 1
        return f"_sq{self.counter}"


def _rewrite(expr: SqlExpr, state: _FlattenState) -> SqlExpr:
    if isinstance(expr, BinOp):
        if isinstance(expr.right, ScalarSubquery):
            replacement = _flatten_one(expr.right.query, state)
            return BinOp(expr.op, _rewrite(expr.left, state), replacement)
        if isinstance(expr.left, ScalarSubquery):
            replacement = _flatten_one(expr.left.query, state)
            return BinOp(expr.op, replacement, _rewrite(expr.right, state))
        return BinOp(expr.op, _rewrite(expr.left, state), _rewrite(expr.right, state))
    return expr


def _flatten_one(sub: QueryAst, state: _FlattenState) -> ColRef:
    if len(sub.tables) != 1 or sub.tables[0].is_derived:
        raise UnsupportedSubquery("comparison subquery must select from one base table")
    if len(sub.select) != 1 or sub.star:
        raise UnsupportedSubquery("comparison subquery must select a single aggregate")
    item = sub.select[0]
    if not isinstance(item.expr, AggCall) or item.expr.arg is None and item.expr.kind != "count":
        if not isinstance(item.expr, AggCall):
            raise UnsupportedSubquery("comparison subquery must select a single aggregate")
    if sub.group_by:
        raise UnsupportedSubquery("comparison subquery must not have its own group by")
    inner_alias = sub.tables[0].alias

    corr_pairs, residual = _split_correlation(sub.where, inner_alias, state.outer_aliases)
    alias = state.fresh_alias()
    agg_name = "agg"
    group_cols = tuple(ColRef(c.name) for c, _ in corr_pairs)
    derived_query = QueryAst(
        select=tuple(SelectItem(ColRef(c.name), c.name) for c, _ in corr_pairs)
        + (SelectItem(item.expr, agg_name),),
        tables=(sub.tables[0],),
        where=residual,
        group_by=group_cols,
    )
    table = TableRef(alias=alias, subquery=derived_query)
    conds = tuple(
        JoinCond(outer, ColRef(inner.name, table=alias)) for inner, outer in corr_pairs
    )
    state.derived.append((table, conds))
    return ColRef(agg_name, table=alias)


def _split_correlation(
    where: Optional[SqlExpr], inner_alias: str, outer_aliases: set[str]
) -> tuple[list[tuple[ColRef, ColRef]], Optional[SqlExpr]]:
    """Partition a subquery's WHERE into correlation equalities and the rest.

    A correlation equality compares an inner column with a column qualified
    by an outer table alias.
    """
    pairs: list[tuple[ColRef, ColRef]] = []
    residual: list[SqlExpr] = []

    def is_outer(ref: SqlExpr) -> bool:
        return isinstance(ref, ColRef) and ref.table in outer_aliases

    def is_inner(ref: SqlExpr) -> bool:
        return isinstance(ref, ColRef) and (ref.table is None or ref.table == inner_alias)

    def visit(e: SqlExpr):
        if isinstance(e, BinOp) and e.op == "and":
            visit(e.left)
            visit(e.right)
            return
        if isinstance(e, BinOp) and e.op == "=":
            if is_inner(e.left) and is_outer(e.right):
                pairs.append((e.left, e.right))
                return
            if is_outer(e.left) and is_inner(e.right):
                pairs.append((e.right, e.left))
                return
        for ref in column_refs_in(e):
            if ref.table in outer_aliases:
                raise UnsupportedSubquery(
                    "correlation must be simple equality on columns"
                )
        residual.append(e)

    if where is not None:
        visit(where)
    residual_expr: Optional[SqlExpr] = None
    for e in residual:
        residual_expr = e if residual_expr is None else BinOp("and", residual_expr, e)
    return pairs, residual_expr
