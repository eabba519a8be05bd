"""Lowering the AST to a logical plan for exact execution.

Every table reference is projected onto qualified column names
("alias.column"), which makes join outputs collision-free and lets
predicates resolve either qualified or unqualified references.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import SqlSyntaxError, UnsupportedShape
from ..relational import AggSpec, Aggregate, Database, EquiJoin, Filter, PlanNode, Project, Scan
from ..relational.expr import (
    And,
    Arith,
    CaseWhen,
    Cmp,
    Col,
    Expr,
    In,
    Like,
    Lit,
    Not,
    Or,
)
from .ast import (
    AggCall,
    AVG,
    BinOp,
    COUNT,
    COUNT_DISTINCT,
    ColRef,
    ExistsSubquery,
    InList,
    InSubquery,
    LikeOp,
    Literal,
    MAX,
    MIN,
    Negate,
    NotOp,
    QUANTILE,
    QueryAst,
    STDDEV,
    SUM,
    ScalarSubquery,
    SqlExpr,
    VAR,
    aggregates_in,
)

AGG_FUNC = {
    COUNT: "count",
    SUM: "sum",
    AVG: "avg",
    VAR: "var",
    STDDEV: "stddev",
    MIN: "min",
    MAX: "max",
    QUANTILE: "quantile",
    COUNT_DISTINCT: "count_distinct",
}


@dataclass
class Scope:
    """Qualified column names visible at some point in the plan."""

    columns: list[str]

    def resolve(self, ref: ColRef) -> str:
        if ref.table is not None:
            name = f"{ref.table}.{ref.name}"
            if name in self.columns:
                return name
            raise SqlSyntaxError(0, f"unknown column {ref}")
        matches = [c for c in self.columns if c.split(".", 1)[-1] == ref.name or c == ref.name]
        if not matches:
            raise SqlSyntaxError(0, f"unknown column {ref.name!r}")
        if len(set(matches)) > 1:
            raise SqlSyntaxError(0, f"ambiguous column {ref.name!r}: {sorted(matches)}")
        return matches[0]


@dataclass
class LoweredQuery:
    plan: PlanNode
    output_names: list[str]
    order_by: list[tuple[str, bool]]  # (output name, descending)
    limit: Optional[int]


def lower_expr(expr: SqlExpr, scope: Scope, agg_outputs: Optional[dict] = None) -> Expr:
    if isinstance(expr, ColRef):
        return Col(scope.resolve(expr))
    if isinstance(expr, Literal):
        return Lit(expr.value)
    if isinstance(expr, BinOp):
        if expr.op == "and":
            return And(lower_expr(expr.left, scope, agg_outputs), lower_expr(expr.right, scope, agg_outputs))
        if expr.op == "or":
            return Or(lower_expr(expr.left, scope, agg_outputs), lower_expr(expr.right, scope, agg_outputs))
        left = lower_expr(expr.left, scope, agg_outputs)
        right = lower_expr(expr.right, scope, agg_outputs)
        if expr.op in ("+", "-", "*", "/"):
            return Arith(expr.op, left, right)
        return Cmp(expr.op, left, right)
    if isinstance(expr, NotOp):
        return Not(lower_expr(expr.child, scope, agg_outputs))
    if isinstance(expr, Negate):
        return Arith("-", Lit(0), lower_expr(expr.child, scope, agg_outputs))
    if isinstance(expr, InList):
        return In(lower_expr(expr.child, scope, agg_outputs), expr.options)
    if isinstance(expr, LikeOp):
        return Like(lower_expr(expr.child, scope, agg_outputs), expr.pattern)
    if isinstance(expr, AggCall):
        if agg_outputs is None or expr not in agg_outputs:
            raise SqlSyntaxError(0, "aggregate used outside the select list")
        return Col(agg_outputs[expr])
    if isinstance(expr, (ScalarSubquery, ExistsSubquery, InSubquery)):
        raise UnsupportedShape("subquery must be flattened or joined before lowering")
    raise SqlSyntaxError(0, f"cannot lower expression {expr!r}")


def output_names_for(ast: QueryAst) -> list[str]:
    """Display names for select items, deduplicated in select order."""
    names: list[str] = []
    for i, item in enumerate(ast.select):
        if item.alias:
            base = item.alias
        elif isinstance(item.expr, ColRef):
            base = item.expr.name
        elif isinstance(item.expr, AggCall):
            kind = item.expr.kind
            if item.expr.arg is not None and isinstance(item.expr.arg, ColRef):
                base = f"{kind}_{item.expr.arg.name}"
            else:
                base = kind if kind != COUNT else "count"
        else:
            base = f"expr_{i}"
        name = base
        suffix = 2
        while name in names:
            name = f"{base}_{suffix}"
            suffix += 1
        names.append(name)
    return names


def build_from_plan(ast: QueryAst, db: Database) -> tuple[PlanNode, Scope]:
    """FROM clause plus WHERE as a plan over qualified column names."""
    plan, scope = _table_plan(ast.tables[0], db)
    for i, table in enumerate(ast.tables[1:]):
        right_plan, right_scope = _table_plan(table, db)
        conds = ast.join_conds[i]
        left_keys = tuple(scope.resolve(c.left) if _resolvable(scope, c.left) else None for c in conds)
        # keys may be written in either order; resolve each side
        lk, rk = [], []
        for c in conds:
            if _resolvable(scope, c.left) and _resolvable(right_scope, c.right):
                lk.append(scope.resolve(c.left))
                rk.append(right_scope.resolve(c.right))
            elif _resolvable(scope, c.right) and _resolvable(right_scope, c.left):
                lk.append(scope.resolve(c.right))
                rk.append(right_scope.resolve(c.left))
            else:
                raise SqlSyntaxError(0, f"join condition {c.left} = {c.right} does not bridge the join")
        plan = EquiJoin(plan, right_plan, tuple(lk), tuple(rk))
        scope = Scope(scope.columns + right_scope.columns)

    where = ast.where
    if where is not None:
        conjuncts = _conjuncts(where)
        plain = []
        for conj in conjuncts:
            if isinstance(conj, ExistsSubquery):
                plan = _exists_plan(plan, scope, conj, db)
            elif isinstance(conj, InSubquery):
                plan = _in_subquery_plan(plan, scope, conj, db)
            else:
                plain.append(conj)
        for conj in plain:
            plan = Filter(plan, lower_expr(conj, scope))
    return plan, scope


def _resolvable(scope: Scope, ref: ColRef) -> bool:
    try:
        scope.resolve(ref)
        return True
    except SqlSyntaxError:
        return False


def _conjuncts(expr: SqlExpr) -> list[SqlExpr]:
    if isinstance(expr, BinOp) and expr.op == "and":
        return _conjuncts(expr.left) + _conjuncts(expr.right)
    return [expr]


def _table_plan(table, db: Database) -> tuple[PlanNode, Scope]:
    if table.is_derived:
        lowered = lower(table.subquery, db)
        qualified = [f"{table.alias}.{n}" for n in lowered.output_names]
        plan = Project(
            lowered.plan,
            tuple((q, Col(n)) for q, n in zip(qualified, lowered.output_names)),
        )
        return plan, Scope(qualified)
    rel = db.get(table.name)
    qualified = [f"{table.alias}.{n}" for n in rel.schema.names]
    plan = Project(
        Scan(table.name),
        tuple((q, Col(n)) for q, n in zip(qualified, rel.schema.names)),
    )
    return plan, Scope(qualified)


def _exists_plan(plan, scope, sub: ExistsSubquery, db: Database):
    if sub.negated:
        raise UnsupportedShape("NOT EXISTS is outside the supported subset")
    inner_ast = sub.query
    inner_plan, inner_scope = build_from_plan(
        inner_ast.with_(where=None), db
    )
    corr: list[tuple[str, str]] = []
    residual = []
    for conj in _conjuncts(inner_ast.where) if inner_ast.where else []:
        if (
            isinstance(conj, BinOp)
            and conj.op == "="
            and isinstance(conj.left, ColRef)
            and isinstance(conj.right, ColRef)
        ):
            if _resolvable(inner_scope, conj.left) and _resolvable(scope, conj.right) and not _resolvable(inner_scope, conj.right):
                corr.append((scope.resolve(conj.right), inner_scope.resolve(conj.left)))
                continue
            if _resolvable(inner_scope, conj.right) and _resolvable(scope, conj.left) and not _resolvable(inner_scope, conj.left):
                corr.append((scope.resolve(conj.left), inner_scope.resolve(conj.right)))
                continue
        residual.append(conj)
    for conj in residual:
        inner_plan = Filter(inner_plan, lower_expr(conj, inner_scope))
    if not corr:
        # uncorrelated: keep all rows iff the subquery returns anything
        marker = Filter(
            Aggregate(inner_plan, (), (AggSpec("__n", "count_star"),)),
            Cmp(">", Col("__n"), Lit(0)),
        )
        return EquiJoin(plan, Project(marker, (("__exists", Lit(1)),)), (), ())
    keys = Aggregate(
        inner_plan, tuple(k for _, k in corr), (AggSpec("__n", "count_star"),)
    )
    dedup = Project(keys, tuple((f"__k{i}", Col(k)) for i, (_, k) in enumerate(corr)))
    joined = EquiJoin(
        plan, dedup, tuple(o for o, _ in corr), tuple(f"__k{i}" for i in range(len(corr)))
    )
    return Project(joined, tuple((c, Col(c)) for c in scope.columns))


def _in_subquery_plan(plan, scope, sub: InSubquery, db: Database):
    if not isinstance(sub.child, ColRef):
        raise UnsupportedShape("IN subquery requires a plain column on the left")
    inner = lower(sub.query, db)
    if len(inner.output_names) != 1:
        raise UnsupportedShape("IN subquery must select a single column")
    col = scope.resolve(sub.child)
    dedup = Aggregate(inner.plan, (inner.output_names[0],), (AggSpec("__n", "count_star"),))
    keyed = Project(dedup, (("__k0", Col(inner.output_names[0])),))
    joined = EquiJoin(plan, keyed, (col,), ("__k0",))
    return Project(joined, tuple((c, Col(c)) for c in scope.columns))


def lower(ast: QueryAst, db: Database) -> LoweredQuery:
    """Lower a (subquery-free or passthrough) AST for exact execution."""
    base, scope = build_from_plan(ast, db)
    names = output_names_for(ast) if not ast.star else None
    order = [(_order_name(ast, o), o.descending) for o in ast.order_by]

    if ast.star:
        bare = [c.split(".", 1)[-1] for c in scope.columns]
        if len(set(bare)) == len(bare) and len(ast.tables) == 1:
            plan = Project(base, tuple((b, Col(c)) for b, c in zip(bare, scope.columns)))
            return LoweredQuery(plan, bare, order, ast.limit)
        plan = Project(base, tuple((c, Col(c)) for c in scope.columns))
        return LoweredQuery(plan, list(scope.columns), order, ast.limit)

    if not ast.is_aggregate:
        plan = Project(
            base,
            tuple((n, lower_expr(item.expr, scope)) for n, item in zip(names, ast.select)),
        )
        return LoweredQuery(plan, names, order, ast.limit)

    group_cols = [scope.resolve(c) for c in ast.group_by]
    agg_calls: dict[AggCall, str] = {}
    for item in ast.select:
        for agg in aggregates_in(item.expr):
            agg_calls.setdefault(agg, f"__agg{len(agg_calls)}")
    pre_outputs = [(c, Col(c)) for c in group_cols]
    specs = []
    for agg, out in agg_calls.items():
        if agg.arg is None:
            specs.append(AggSpec(out, "count_star"))
        else:
            arg_col = f"{out}_arg"
            pre_outputs.append((arg_col, lower_expr(agg.arg, scope)))
            specs.append(AggSpec(out, AGG_FUNC[agg.kind], arg_col, param=agg.param))
    pre = Project(base, tuple(pre_outputs)) if pre_outputs else base
    agged = Aggregate(pre, tuple(group_cols), tuple(specs))
    agg_scope = Scope(group_cols + [s.name for s in specs])
    post_outputs = []
    for n, item in zip(names, ast.select):
        post_outputs.append((n, lower_expr(item.expr, agg_scope, agg_calls)))
    plan = Project(agged, tuple(post_outputs))
    return LoweredQuery(plan, names, order, ast.limit)


def _order_name(ast: QueryAst, item) -> str:
    names = output_names_for(ast) if not ast.star else []
    if item.ref.table is None and item.ref.name in names:
        return item.ref.name
    return str(item.ref)
