"""Query rewriting: embed variational subsampling into one executable plan.

The rewritten plan replaces each base table with its chosen sample, tags
every tuple with a subsample id, routes joins through the sid block map,
and aggregates twice: an inner pass grouped by (user groups, sid) and an
outer recombination grouped by the user groups alone. Per-tuple weights
are inverse inclusion probabilities, so the estimates are unbiased for
any sample kind whose probability column is honest.

Point and error estimates deliberately use differently scaled per-cell
values. The point path scales each cell by its group's realized share
(a window sum over the grouped cells), which makes the recombined
estimate algebraically equal to the full-sample weighted estimate: with
all probabilities 1 the answers are exact. The error path scales cells
by the fixed subsample count b, preserving the across-subsample spread
that the size-ratio form would cancel out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .errors import UnsupportedShape, ZeroProbability
from .frontend.ast import (
    AggCall,
    AVG,
    COUNT,
    COUNT_DISTINCT,
    ColRef,
    QUANTILE,
    QueryAst,
    STDDEV,
    SUM,
    VAR,
    aggregates_in,
)
from .frontend.lower import Scope, lower_expr, output_names_for
from .planner import derive_sample_type
from .relational import AggSpec, Aggregate, Database, EquiJoin, Filter, PlanNode, Project, Scan
from .relational.expr import (
    Arith,
    CaseWhen,
    Cmp,
    Col,
    Expr,
    Floor,
    Lit,
    RandInt,
    Sqrt,
    WindowSum,
)
from .samples.descriptors import HASHED, SampleDescriptor
from .varsub.estimate import ErrorEstimate, subsample_stderr
from .varsub.variational import SID_COLUMN

MIN_CELLS_FOR_ERROR = 10  # groups seen in fewer subsamples get no error estimate
NORMAL_PATH_MIN_B = 30


@dataclass(frozen=True)
class AnswerColumn:
    alias: str
    est_col: str
    err_col: str
    qlo_col: Optional[str] = None  # deviation quantiles, when the plan carries them
    qhi_col: Optional[str] = None


@dataclass
class RewrittenQuery:
    plan: PlanNode
    group_cols: list[str]  # output names of grouping columns
    answers: list[AnswerColumn]
    b: int
    ncells_col: str
    neff_col: str
    quantile_path: bool
    alpha: float


@dataclass
class AccuracyContract:
    alpha: float
    max_relative_error: Optional[float] = None


def _sid_expr(b: int) -> Expr:
    # fused form of 1 + floor(rand() * b): one uniform integer draw per tuple
    return RandInt(b)


def _h_expr(left: Expr, right: Expr, b: int) -> Expr:
    r = math.isqrt(b)
    if r * r != b:
        raise UnsupportedShape(f"join rewriting needs a perfect-square b, got {b}")
    block_i = Floor(Arith("/", Arith("-", left, Lit(1)), Lit(r)))
    block_j = Floor(Arith("/", Arith("-", right, Lit(1)), Lit(r)))
    return Arith("+", Arith("+", Arith("*", block_i, Lit(r)), block_j), Lit(1))


class _Fragment:
    """A plan producing qualified user columns plus __prob and __sid.

    ``sid_replicates`` marks derived-aggregate fragments, whose rows are
    per-subsample estimates rather than partitioned tuples: joins against
    them must align on sid so each subsample sees its own estimate.
    """

    def __init__(self, plan: PlanNode, columns: list[str], sid_replicates: bool = False):
        self.plan = plan
        self.columns = columns  # user-visible qualified names
        self.sid_replicates = sid_replicates

    @property
    def scope(self) -> Scope:
        return Scope(self.columns)


def _source_fragment(
    table_alias: str,
    desc: SampleDescriptor,
    db: Database,
    b: int,
) -> _Fragment:
    """Scan one chosen sample, qualify its columns, draw sids."""
    sample_rel = db.get(desc.sample_table)
    source_rel = db.get(desc.source_table) if db.has(desc.source_table) else sample_rel
    user_cols = [c for c in source_rel.schema.names if c != desc.prob_column]
    outputs = [(f"{table_alias}.{c}", Col(c)) for c in user_cols]
    if sample_rel.schema.has(desc.prob_column):
        prob: Expr = Col(desc.prob_column)
    else:
        prob = Lit(1.0)  # base-table stand-in
    outputs.append(("__prob", prob))
    outputs.append(("__sid", _sid_expr(b)))
    plan = Project(Scan(desc.sample_table), tuple(outputs))
    return _Fragment(plan, [f"{table_alias}.{c}" for c in user_cols])


def _derived_fragment(
    table, assignment: dict, db: Database, b: int
) -> _Fragment:
    """Variational table of a one-level nested aggregate derived table."""
    inner = table.subquery
    if len(inner.tables) != 1 or inner.tables[0].is_derived:
        raise UnsupportedShape("nested derived tables must aggregate one base table")
    if not inner.is_aggregate:
        raise UnsupportedShape("derived tables must be grouped aggregates")
    inner_alias = inner.tables[0].alias
    desc = assignment.get(inner_alias)
    if desc is None:
        from .planner import base_table_standin

        source = inner.tables[0].name
        rows = db.get(source).row_count if db.has(source) else 0
        desc = base_table_standin(source, rows)
    src = _source_fragment(inner_alias, desc, db, b)
    plan = src.plan
    scope = src.scope
    if inner.where is not None:
        plan = Filter(plan, lower_expr(inner.where, scope))
    group_cols = [scope.resolve(c) for c in inner.group_by]
    names = output_names_for(inner)
    pre_outputs = [(c, Col(c)) for c in group_cols]
    pre_outputs.append(("__w", Arith("/", Lit(1.0), Col("__prob"))))
    pre_outputs.append(("__sid", Col("__sid")))
    specs = []
    post: list[tuple[str, Expr]] = []
    for name, item in zip(names, inner.select):
        aggs = aggregates_in(item.expr)
        if not aggs:
            continue  # grouping column, already present
        if len(aggs) != 1 or item.expr is not aggs[0]:
            raise UnsupportedShape("nested aggregates must be bare aggregate calls")
        agg = aggs[0]
        cell = _cell_estimate(agg, name, pre_outputs, specs, scope, scale_by=b)
        post.append((name, cell))
    inner_plan = Aggregate(
        Project(plan, tuple(pre_outputs)),
        tuple(group_cols) + ("__sid",),
        tuple(specs),
    )
    # derived relation columns, qualified by the derived alias
    outputs = []
    for name, item in zip(names, inner.select):
        if aggregates_in(item.expr):
            continue
        src_col = scope.resolve(item.expr) if isinstance(item.expr, ColRef) else None
        outputs.append((f"{table.alias}.{name}", Col(src_col)))
    outputs.extend((f"{table.alias}.{n}", e) for n, e in post)
    kind, tau = derive_sample_type(
        desc.kind, desc.columns, desc.effective_ratio, [c.name for c in inner.group_by]
    )
    outputs.append(("__prob", Lit(tau)))
    outputs.append(("__sid", Col("__sid")))
    frag_plan = Project(inner_plan, tuple(outputs))
    return _Fragment(
        frag_plan, [n for n, _ in outputs if not n.startswith("__")], sid_replicates=True
    )


def _cell_estimate(agg, name, pre_outputs, specs, scope, scale_by) -> Expr:
    """Population-scale per-cell estimate; appends needed pre/agg columns."""

    def ensure_pre(col_name, expr):
        if all(n != col_name for n, _ in pre_outputs):
            pre_outputs.append((col_name, expr))

    if agg.kind == COUNT:
        specs.append(AggSpec(f"__s_{name}", "sum", "__w"))
        return Arith("*", Col(f"__s_{name}"), Lit(float(scale_by)))
    arg = lower_expr(agg.arg, scope)
    arg_col = f"__arg_{name}"
    ensure_pre(arg_col, arg)
    if agg.kind == SUM:
        specs.append(AggSpec(f"__s_{name}", "wsum", arg_col, weight="__w"))
        return Arith("*", Col(f"__s_{name}"), Lit(float(scale_by)))
    if agg.kind == AVG:
        specs.append(AggSpec(f"__s_{name}", "wavg", arg_col, weight="__w"))
        return Col(f"__s_{name}")
    if agg.kind == VAR:
        specs.append(AggSpec(f"__s_{name}", "wvar", arg_col, weight="__w"))
        return Col(f"__s_{name}")
    if agg.kind == STDDEV:
        specs.append(AggSpec(f"__s_{name}", "wstddev", arg_col, weight="__w"))
        return Col(f"__s_{name}")
    if agg.kind == QUANTILE:
        specs.append(
            AggSpec(f"__s_{name}", "wquantile", arg_col, weight="__w", param=agg.param)
        )
        return Col(f"__s_{name}")
    raise UnsupportedShape(f"aggregate {agg.kind} has no per-subsample estimator")


def rewrite_query(
    ast: QueryAst,
    assignment: dict[str, SampleDescriptor],
    db: Database,
    b: int,
    alpha: float = 0.05,
) -> RewrittenQuery:
    """Build the variational rewriting of an aggregate query.

    ``assignment`` maps each base-table alias to its chosen sample (base
    stand-ins included). ``b`` must be a perfect square when the query
    joins tables.
    """
    names = output_names_for(ast)
    tasks = [
        (name, item)
        for name, item in zip(names, ast.select)
        if aggregates_in(item.expr)
    ]
    if not tasks:
        raise UnsupportedShape("nothing to approximate: no aggregates in select")

    # 1. source fragments, joined through the sid block map
    frags: list[_Fragment] = []
    for t in ast.tables:
        if t.is_derived:
            frags.append(_derived_fragment(t, assignment, db, b))
        else:
            frags.append(_source_fragment(t.alias, assignment[t.alias], db, b))
    frag = frags[0]
    for i, right in enumerate(frags[1:]):
        conds = ast.join_conds[i]
        lk, rk = [], []
        left_scope, right_scope = frag.scope, right.scope
        for c in conds:
            if _try(left_scope, c.left) and _try(right_scope, c.right):
                lk.append(left_scope.resolve(c.left))
                rk.append(right_scope.resolve(c.right))
            else:
                lk.append(left_scope.resolve(c.right))
                rk.append(right_scope.resolve(c.left))
        replicate = frag.sid_replicates or right.sid_replicates
        if replicate:
            # per-subsample estimates pair with their own subsample
            lk.append("__sid")
            rk.append("__sid")
        joined = EquiJoin(frag.plan, right.plan, tuple(lk), tuple(rk))
        outputs = [(c, Col(c)) for c in frag.columns + right.columns]
        outputs.append(("__prob", Arith("*", Col("__prob"), Col("__prob_r"))))
        if replicate:
            outputs.append(("__sid", Col("__sid")))
        else:
            outputs.append(("__sid", _h_expr(Col("__sid"), Col("__sid_r"), b)))
        frag = _Fragment(
            Project(joined, tuple(outputs)),
            frag.columns + right.columns,
            sid_replicates=replicate,
        )

    plan = frag.plan
    scope = frag.scope
    if ast.where is not None:
        plan = Filter(plan, lower_expr(ast.where, scope))

    # 2. inner aggregate: per (user groups, sid) cells
    group_cols = [scope.resolve(c) for c in ast.group_by]
    pre_outputs: list[tuple[str, Expr]] = [(c, Col(c)) for c in group_cols]
    pre_outputs.append(("__w", Arith("/", Lit(1.0), Col("__prob"))))
    pre_outputs.append(("__sid", Col("__sid")))
    specs: list[AggSpec] = [AggSpec("__cell_n", "count_star")]
    cell_exprs: dict[str, Expr] = {}
    full_specs: list[AggSpec] = []
    full_post: dict[str, Expr] = {}
    needs_full = False
    for name, item in tasks:
        aggs = aggregates_in(item.expr)
        bare = len(aggs) == 1 and item.expr is aggs[0]
        for j, agg in enumerate(aggs):
            sub = name if len(aggs) == 1 else f"{name}_{j}"
            if agg.kind == COUNT_DISTINCT:
                needs_full = True
                _full_estimate(agg, sub, full_specs, full_post, scope, assignment, ast)
                continue
            cell_exprs[sub] = _cell_estimate(agg, sub, pre_outputs, specs, scope, b)
            if not bare or agg.kind in (VAR, STDDEV, QUANTILE):
                needs_full = True
                _full_estimate(agg, sub, full_specs, full_post, scope, assignment, ast)
    inner = Aggregate(
        Project(plan, tuple(pre_outputs)), tuple(group_cols) + ("__sid",), tuple(specs)
    )

    # 3. per-cell point and error columns (the window makes point
    # recombination equal the full-sample weighted estimate)
    window = WindowSum(Col("__cell_n"), tuple(group_cols))
    cell_outputs: list[tuple[str, Expr]] = [(c, Col(c)) for c in group_cols]
    cell_outputs.append(("__cell_n", Col("__cell_n")))
    point_kinds: dict[str, str] = {}
    for name, item in tasks:
        aggs = aggregates_in(item.expr)
        bare = len(aggs) == 1 and item.expr is aggs[0]
        if bare and aggs[0].kind in (COUNT, SUM):
            raw = Col(f"__s_{name}")
            point = Arith("*", Arith("/", raw, Col("__cell_n")), window)
            cell_outputs.append((f"__pt_{name}", point))
            cell_outputs.append((f"__err_{name}", cell_exprs[name]))
            point_kinds[name] = "window"
        elif bare and aggs[0].kind == AVG:
            cell_outputs.append((f"__pt_{name}", cell_exprs[name]))
            cell_outputs.append((f"__err_{name}", cell_exprs[name]))
            point_kinds[name] = "weighted"
        elif bare and aggs[0].kind == COUNT_DISTINCT:
            point_kinds[name] = "full"
            continue
        else:
            # compound expressions and non-linear aggregates: spread from
            # cell-level evaluation, point from the full-sample branch
            exprs = {}
            for j, agg in enumerate(aggs):
                sub = name if len(aggs) == 1 else f"{name}_{j}"
                exprs[agg] = cell_exprs.get(sub, Lit(float("nan")))
            cell_outputs.append(
                (f"__err_{name}", _item_expr(item.expr, exprs, scope))
            )
            point_kinds[name] = "full"
            needs_full = True
            if not bare:
                for j, agg in enumerate(aggs):
                    sub = f"{name}_{j}" if len(aggs) > 1 else name
                    _full_estimate(agg, sub, full_specs, full_post, scope, assignment, ast)
    cells = Project(inner, tuple(cell_outputs))

    # 4. outer recombination per user group
    outer_specs: list[AggSpec] = [
        AggSpec("__ncells", "count_star"),
        AggSpec("__n_sum", "sum", "__cell_n"),
        AggSpec("__n_avg", "avg", "__cell_n"),
    ]
    pre_cells: list[tuple[str, Expr]] = [(c, Col(c)) for c in group_cols]
    pre_cells.append(("__cell_n", Col("__cell_n")))
    for name, item in tasks:
        if point_kinds[name] in ("window", "weighted"):
            pre_cells.append(
                (f"__ptw_{name}", Arith("*", Col(f"__pt_{name}"), Col("__cell_n")))
            )
            outer_specs.append(AggSpec(f"__pts_{name}", "sum", f"__ptw_{name}"))
        if point_kinds[name] != "full" or f"__err_{name}" in dict(cell_outputs):
            pre_cells.append((f"__err_{name}", Col(f"__err_{name}")))
            outer_specs.append(AggSpec(f"__sd_{name}", "stddev", f"__err_{name}"))
    outer = Aggregate(Project(cells, tuple(pre_cells)), tuple(group_cols), tuple(outer_specs))

    # 5. optional full-sample branch over the same scan
    if needs_full:
        full_pre = [(c, Col(c)) for c in group_cols]
        full_pre.append(("__w", Arith("/", Lit(1.0), Col("__prob"))))
        seen = {n for n, _ in full_pre}
        for spec in full_specs:
            if spec.arg and spec.arg not in seen:
                # computed argument columns come from the inner pre-projection;
                # plain fragment columns pass through unchanged
                expr = dict(pre_outputs).get(spec.arg)
                if expr is None and spec.arg in scope.columns:
                    expr = Col(spec.arg)
                if expr is None:
                    raise UnsupportedShape(f"missing argument column {spec.arg}")
                full_pre.append((spec.arg, expr))
                seen.add(spec.arg)
        full = Aggregate(Project(plan, tuple(full_pre)), tuple(group_cols), tuple(full_specs))
        full_named = Project(
            full,
            tuple((f"__f_{c}", Col(c)) for c in group_cols)
            + tuple((n, e) for n, e in full_post.items()),
        )
        outer = EquiJoin(
            outer, full_named, tuple(group_cols), tuple(f"__f_{c}" for c in group_cols)
        )

    # 6. final projection: groups, estimates, then error columns
    final: list[tuple[str, Expr]] = []
    group_out: list[str] = []
    for name, item in zip(names, ast.select):
        if aggregates_in(item.expr):
            continue
        final.append((name, Col(scope.resolve(item.expr))))
        group_out.append(name)
    answers: list[AnswerColumn] = []
    err_outputs: list[tuple[str, Expr]] = []
    for name, item in tasks:
        kind = point_kinds[name]
        if kind in ("window", "weighted"):
            est: Expr = Arith("/", Col(f"__pts_{name}"), Col("__n_sum"))
        else:
            est = _full_point_expr(name, item, full_post)
        final.append((name, est))
        err_name = f"{name}_err"
        if f"__sd_{name}" in {s.name for s in outer_specs}:
            err = Arith(
                "*",
                Col(f"__sd_{name}"),
                Arith("/", Sqrt(Col("__n_avg")), Sqrt(Col("__n_sum"))),
            )
        elif f"__cderr_{name}" in full_post:
            err = Col(f"__cderr_{name}")
        else:
            err = Lit(float("nan"))
        err_outputs.append((err_name, err))
        answers.append(AnswerColumn(name, name, err_name))
    final.extend(err_outputs)
    final.append(("__ncells", Col("__ncells")))
    final.append(("__n_sum", Col("__n_sum")))
    result_plan = Project(outer, tuple(final))

    quantile_path = b < NORMAL_PATH_MIN_B
    if quantile_path:
        result_plan, answers = _attach_deviation_quantiles(
            result_plan, cells, group_cols, group_out, tasks, point_kinds, alpha, answers
        )
    return RewrittenQuery(
        plan=result_plan,
        group_cols=group_out,
        answers=answers,
        b=b,
        ncells_col="__ncells",
        neff_col="__n_sum",
        quantile_path=quantile_path,
        alpha=alpha,
    )


def _item_expr(expr, agg_exprs, scope) -> Expr:
    """Lower a select-item expression with aggregates replaced by cell columns."""
    from .frontend.ast import BinOp, Literal, Negate

    if isinstance(expr, AggCall):
        return agg_exprs[expr]
    if isinstance(expr, Literal):
        return Lit(expr.value)
    if isinstance(expr, Negate):
        return Arith("-", Lit(0), _item_expr(expr.child, agg_exprs, scope))
    if isinstance(expr, BinOp) and expr.op in ("+", "-", "*", "/"):
        return Arith(
            expr.op,
            _item_expr(expr.left, agg_exprs, scope),
            _item_expr(expr.right, agg_exprs, scope),
        )
    raise UnsupportedShape(f"cannot rewrite select expression {expr!r}")


def _full_estimate(agg, name, full_specs, full_post, scope, assignment, ast):
    """Full-sample population-scale estimate of one aggregate per group."""
    existing = {s.name for s in full_specs}
    if agg.kind == COUNT:
        if f"__fs_{name}" not in existing:
            full_specs.append(AggSpec(f"__fs_{name}", "sum", "__w"))
        full_post[f"__full_{name}"] = Col(f"__fs_{name}")
        return
    if agg.kind == COUNT_DISTINCT:
        col = agg.arg
        if not isinstance(col, ColRef):
            raise UnsupportedShape("count(distinct ...) requires a plain column")
        qualified = scope.resolve(col)
        tau = 1.0
        for alias, desc in assignment.items():
            if qualified.startswith(f"{alias}.") and desc.kind == HASHED:
                tau = desc.tau
        if f"__fs_{name}" not in existing:
            full_specs.append(AggSpec(f"__fs_{name}", "count_distinct", qualified))
        full_post[f"__full_{name}"] = Arith("/", Col(f"__fs_{name}"), Lit(tau))
        # closed-form spread of a hash-thinned distinct count
        full_post[f"__cderr_{name}"] = Arith(
            "/", Sqrt(Arith("*", Col(f"__fs_{name}"), Lit(max(1.0 - tau, 0.0)))), Lit(tau)
        )
        return
    arg_name = f"__arg_{name}"
    func = {SUM: "wsum", AVG: "wavg", VAR: "wvar", STDDEV: "wstddev", QUANTILE: "wquantile"}[
        agg.kind
    ]
    if f"__fs_{name}" not in existing:
        full_specs.append(
            AggSpec(f"__fs_{name}", func, arg_name, weight="__w", param=agg.param)
        )
    full_post[f"__full_{name}"] = Col(f"__fs_{name}")


def _full_point_expr(name, item, full_post) -> Expr:
    # the full branch is joined in; reference its projected columns
    aggs = aggregates_in(item.expr)
    if len(aggs) == 1 and item.expr is aggs[0]:
        return Col(f"__full_{name}")
    exprs = {agg: Col(f"__full_{name}_{j}") for j, agg in enumerate(aggs)}
    return _item_expr(item.expr, exprs, None)


def _try(scope: Scope, ref) -> bool:
    try:
        scope.resolve(ref)
        return True
    except Exception:
        return False


def _attach_deviation_quantiles(
    result_plan, cells, group_cols, group_out, tasks, point_kinds, alpha, answers
):
    """Join per-group deviation quantiles for the small-b CI path."""
    est_named = Project(
        result_plan,
        tuple((f"__e_{c}", Col(c)) for c in group_out)
        + tuple((f"__e_{n}", Col(n)) for n, _ in tasks)
        + tuple((c, Col(c)) for c in _result_columns(result_plan) if not c.startswith("__e_")),
    )
    joined = EquiJoin(
        cells, est_named, tuple(group_cols), tuple(f"__e_{c}" for c in group_out)
    )
    dev_outputs = [(c, Col(c)) for c in group_cols]
    specs = []
    new_answers = []
    for name, _ in tasks:
        err_col = f"__err_{name}"
        if err_col not in _result_columns(cells):
            new_answers.append(next(a for a in answers if a.alias == name))
            continue
        dev = Arith(
            "*", Sqrt(Col("__cell_n")), Arith("-", Col(err_col), Col(f"__e_{name}"))
        )
        dev_outputs.append((f"__dev_{name}", dev))
        specs.append(AggSpec(f"__qlo_{name}", "quantile", f"__dev_{name}", param=alpha / 2))
        specs.append(
            AggSpec(f"__qhi_{name}", "quantile", f"__dev_{name}", param=1 - alpha / 2)
        )
        old = next(a for a in answers if a.alias == name)
        new_answers.append(
            AnswerColumn(name, old.est_col, old.err_col, f"__qlo_{name}", f"__qhi_{name}")
        )
    devs = Aggregate(Project(joined, tuple(dev_outputs)), tuple(group_cols), tuple(specs))
    dev_named = Project(
        devs,
        tuple((f"__d_{c}", Col(c)) for c in group_cols)
        + tuple((s.name, Col(s.name)) for s in specs),
    )
    full = EquiJoin(
        result_plan, dev_named, tuple(group_out), tuple(f"__d_{c}" for c in group_cols)
    )
    return full, new_answers


def _result_columns(plan) -> list[str]:
    if isinstance(plan, Project):
        return [n for n, _ in plan.outputs]
    if isinstance(plan, Aggregate):
        return list(plan.group) + [s.name for s in plan.aggs]
    raise UnsupportedShape("cannot inspect plan columns")


# --- turning executed rows into answers --------------------------------------


@dataclass
class AnswerRow:
    group: tuple
    estimates: dict[str, ErrorEstimate]
    exact: bool = False


def scale_answers(
    result, rewritten: RewrittenQuery, alpha: Optional[float] = None
) -> list[AnswerRow]:
    """Extract per-group point estimates and confidence intervals."""
    alpha = alpha if alpha is not None else rewritten.alpha
    z = float(norm.ppf(1.0 - alpha / 2.0))
    rows: list[AnswerRow] = []
    group_idx = [result.schema.index_of(c) for c in rewritten.group_cols]
    ncells = result.column(rewritten.ncells_col)
    neff = result.column(rewritten.neff_col)
    for i in range(result.row_count):
        group = tuple(result.column_at(j)[i] for j in group_idx)
        estimates = {}
        for ans in rewritten.answers:
            point = float(result.column(ans.est_col)[i])
            stderr = float(result.column(ans.err_col)[i])
            enough = ncells[i] >= MIN_CELLS_FOR_ERROR
            if not enough or np.isnan(stderr):
                estimates[ans.alias] = ErrorEstimate(
                    point, float("nan"), float("nan"), alpha, float("nan")
                )
                continue
            if rewritten.quantile_path and ans.qlo_col is not None:
                scale = math.sqrt(max(float(neff[i]), 1.0))
                qlo = float(result.column(ans.qlo_col)[i])
                qhi = float(result.column(ans.qhi_col)[i])
                lo, hi = point - qhi / scale, point - qlo / scale
            else:
                lo, hi = point - z * stderr, point + z * stderr
            estimates[ans.alias] = ErrorEstimate(point, lo, hi, alpha, stderr)
        rows.append(AnswerRow(group, estimates))
    return rows


def hac_check(
    answers: list[AnswerRow],
    contract: Optional[AccuracyContract],
    rerun_exact,
) -> tuple[list[AnswerRow], bool]:
    """Enforce the accuracy contract; any violation triggers an exact rerun.

    ``rerun_exact`` is a callable returning exact AnswerRows for the
    original query.
    """
    if contract is None or contract.max_relative_error is None:
        return answers, False
    for row in answers:
        for est in row.estimates.values():
            if np.isnan(est.stderr):
                continue
            denom = abs(est.point)
            half = est.half_width
            if denom == 0:
                violated = half > 0
            else:
                violated = half / denom > contract.max_relative_error
            if violated:
                return rerun_exact(), True
    return answers, False
