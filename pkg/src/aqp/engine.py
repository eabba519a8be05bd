"""The query engine: binds frontend, planner, rewriter, and executor.

Approximate answers come back in the original select order; error columns
are appended after all estimate columns only when requested. A query that
cannot be approximated (passthrough constructs, no mean-like aggregates,
no feasible sample plan, or samples too small) runs exactly with a notice.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AqpError, UnsupportedShape
from .frontend import (
    flatten_comparison_subquery,
    lower,
    output_names_for,
    parse,
    split_extreme_aggregates,
)
from .frontend.ast import QueryAst, SelectItem, aggregates_in, subqueries_in
from .planner import SamplePlanner, ScoredPlan, explain_text
from .rewriter import (
    AccuracyContract,
    AnswerRow,
    RewrittenQuery,
    hac_check,
    rewrite_query,
    scale_answers,
)
from .relational import Database
from .samples.catalog import SampleCatalog
from .samples.descriptors import PolicyConfig
from .varsub.estimate import ErrorEstimate

MIN_SAMPLE_FOR_APPROX = 100


@dataclass
class QueryResult:
    columns: list[str]
    rows: list[tuple]
    approximate: bool
    notices: list[str] = field(default_factory=list)
    error_columns: list[str] = field(default_factory=list)


class Engine:
    def __init__(
        self,
        db: Database,
        catalog: Optional[SampleCatalog] = None,
        config: PolicyConfig = PolicyConfig(),
    ):
        self.db = db
        self.catalog = catalog if catalog is not None else SampleCatalog(db)
        self.config = config
        self.planner = SamplePlanner(db, self.catalog, config)

    # -- public ---------------------------------------------------------------

    def query(
        self,
        sql: str,
        seed: int = 0,
        alpha: Optional[float] = None,
        show_errors: bool = False,
        max_rel_err: Optional[float] = None,
        exact: bool = False,
        budget: Optional[float] = None,
    ) -> QueryResult:
        alpha = alpha if alpha is not None else self.config.alpha
        ast = parse(sql)
        notices: list[str] = []
        if exact:
            return self._exact_result(ast, seed, notices)
        if ast.passthrough:
            notices.append(f"executed exactly: {ast.passthrough}")
            return self._exact_result(ast, seed, notices)
        if not ast.is_aggregate:
            notices.append("executed exactly: no aggregates to approximate")
            return self._exact_result(ast, seed, notices)

        flat = flatten_comparison_subquery(ast)
        approx_ast, exact_ast = split_extreme_aggregates(flat)
        if approx_ast is None:
            notices.append("executed exactly: only extreme aggregates")
            return self._exact_result(ast, seed, notices)

        planner_config = self.config
        if budget is not None:
            planner_config = dataclasses.replace(self.config, io_budget=budget)
        planner = SamplePlanner(self.db, self.catalog, planner_config)
        try:
            best, _ = planner.plan(approx_ast)
        except AqpError as e:
            notices.append(f"executed exactly: planning failed ({e})")
            return self._exact_result(ast, seed, notices)
        if best is None:
            notices.append("executed exactly: no feasible sample plan within the I/O budget")
            return self._exact_result(ast, seed, notices)

        try:
            merged = self._run_approx(approx_ast, best, seed, alpha)
        except UnsupportedShape as e:
            notices.append(f"executed exactly: {e}")
            return self._exact_result(ast, seed, notices)

        if exact_ast is not None:
            self._merge_exact_part(merged, exact_ast, seed, alpha)

        contract = AccuracyContract(alpha, max_rel_err)
        answers = self._collect_rows(merged)
        answers, reran = hac_check(
            answers, contract, lambda: self._exact_answer_rows(ast, seed, alpha)
        )
        if reran:
            notices.append("accuracy contract violated: reran exactly on base tables")
            return self._format(ast, answers, approximate=False, notices=notices,
                                show_errors=show_errors, seed=seed)
        return self._format(ast, answers, approximate=True, notices=notices,
                            show_errors=show_errors, seed=seed)

    def explain(self, sql: str) -> str:
        ast = parse(sql)
        if ast.passthrough:
            return f"passthrough: {ast.passthrough}"
        if not ast.is_aggregate:
            return "exact: no aggregates to approximate"
        flat = flatten_comparison_subquery(ast)
        approx_ast, _ = split_extreme_aggregates(flat)
        if approx_ast is None:
            return "exact: only extreme aggregates"
        best, candidates = self.planner.plan(approx_ast)
        tasks = self.planner.tasks_for(approx_ast)
        total = sum(
            self.db.get(t.name).row_count
            for t in approx_ast.tables
            if not t.is_derived and self.db.has(t.name)
        )
        return explain_text(tasks, best, candidates, self.config.io_budget * total)

    # -- approximate path -------------------------------------------------------

    def _run_approx(
        self, approx_ast: QueryAst, best: ScoredPlan, seed: int, alpha: float
    ) -> dict:
        names = output_names_for(approx_ast)
        agg_positions = [
            i for i, item in enumerate(approx_ast.select) if aggregates_in(item.expr)
        ]
        merged: dict[tuple, dict[str, ErrorEstimate]] = {}
        for gi, (task_indices, combo) in enumerate(best.groups):
            # pin the full query's output names so merged estimates keep
            # distinct keys even when aliases were synthesized
            select: list[SelectItem] = [
                SelectItem(item.expr, name)
                for name, item in zip(names, approx_ast.select)
                if not aggregates_in(item.expr)
            ]
            for t in task_indices:
                pos = agg_positions[t]
                select.append(SelectItem(approx_ast.select[pos].expr, names[pos]))
            sub_ast = approx_ast.with_(select=tuple(select))
            assignment = dict(combo.assignment)
            b = self._choose_b(assignment, joins=len(approx_ast.tables) > 1)
            if b is None:
                raise UnsupportedShape("samples too small for subsample estimation")
            rewritten = rewrite_query(sub_ast, assignment, self.db, b, alpha)
            result = self.db.execute(rewritten.plan, seed + gi)
            for row in scale_answers(result, rewritten, alpha):
                merged.setdefault(row.group, {}).update(row.estimates)
        return merged

    def _choose_b(self, assignment, joins: bool) -> Optional[int]:
        # full-rate base stand-ins (small dimension tables) put no noise in
        # the estimate and do not constrain the subsample count
        sampled = [
            d.built_size
            for d in assignment.values()
            if d.built_size > 0 and d.sample_table != d.source_table
        ]
        sizes = sampled or [d.built_size for d in assignment.values() if d.built_size > 0]
        if not sizes or min(sizes) < MIN_SAMPLE_FOR_APPROX:
            return None
        b = int(round(math.sqrt(min(sizes))))
        if joins:
            r = math.isqrt(b)
            b = max(r * r, 4)
        return max(b, 2)

    def _merge_exact_part(self, merged, exact_ast: QueryAst, seed: int, alpha: float):
        lowered = lower(exact_ast, self.db)
        rel = self.db.execute(lowered.plan, seed)
        names = lowered.output_names
        group_names = [
            n
            for n, item in zip(names, exact_ast.select)
            if not aggregates_in(item.expr)
        ]
        for row in rel.rows():
            by_name = dict(zip(names, row))
            key = tuple(by_name[g] for g in group_names)
            slot = merged.setdefault(key, {})
            for n, item in zip(names, exact_ast.select):
                if aggregates_in(item.expr):
                    v = by_name[n]
                    fv = float(v) if v is not None else float("nan")
                    slot[n] = ErrorEstimate(fv, fv, fv, alpha, 0.0)

    def _collect_rows(self, merged) -> list[AnswerRow]:
        keys = sorted(merged.keys(), key=lambda k: tuple(str(x) for x in k))
        return [AnswerRow(k, merged[k]) for k in keys]

    # -- exact path ----------------------------------------------------------------

    def _exact_result(self, ast: QueryAst, seed: int, notices: list[str]) -> QueryResult:
        flat = ast
        if subqueries_in(ast.where) and ast.passthrough is None:
            flat = flatten_comparison_subquery(ast)
        lowered = lower(flat, self.db)
        rel = self.db.execute(lowered.plan, seed)
        rows = list(rel.rows())
        rows = _apply_order_limit(rows, lowered.output_names, lowered.order_by, lowered.limit)
        return QueryResult(lowered.output_names, rows, approximate=False, notices=notices)

    def _exact_answer_rows(self, ast: QueryAst, seed: int, alpha: float) -> list[AnswerRow]:
        flat = flatten_comparison_subquery(ast) if subqueries_in(ast.where) else ast
        lowered = lower(flat, self.db)
        rel = self.db.execute(lowered.plan, seed)
        names = lowered.output_names
        group_names = [
            n for n, item in zip(names, flat.select) if not aggregates_in(item.expr)
        ]
        out = []
        for row in rel.rows():
            by_name = dict(zip(names, row))
            key = tuple(by_name[g] for g in group_names)
            ests = {}
            for n, item in zip(names, flat.select):
                if aggregates_in(item.expr):
                    v = by_name[n]
                    fv = float(v) if v is not None else float("nan")
                    ests[n] = ErrorEstimate(fv, fv, fv, alpha, 0.0)
            out.append(AnswerRow(key, ests, exact=True))
        return out

    # -- formatting ---------------------------------------------------------------

    def _format(
        self, ast: QueryAst, answers: list[AnswerRow], approximate: bool,
        notices: list[str], show_errors: bool, seed: int,
    ) -> QueryResult:
        names = output_names_for(ast)
        agg_names = [
            n for n, item in zip(names, ast.select) if aggregates_in(item.expr)
        ]
        group_names = [n for n in names if n not in agg_names]
        columns = list(names)
        err_cols = [f"{n}_err" for n in agg_names]
        if show_errors:
            columns += err_cols
        rows = []
        for row in answers:
            by_group = dict(zip(group_names, row.group))
            out = []
            for n, item in zip(names, ast.select):
                if n in by_group:
                    out.append(by_group[n])
                else:
                    est = row.estimates.get(n)
                    out.append(est.point if est is not None else float("nan"))
            if show_errors:
                for n in agg_names:
                    est = row.estimates.get(n)
                    out.append(est.stderr if est is not None else float("nan"))
            rows.append(tuple(out))
        order = [(names.index(n), desc) for n, desc in _order_spec(ast, names)]
        for idx, desc in reversed(order):
            rows.sort(key=lambda r: _sort_key(r[idx]), reverse=desc)
        if ast.limit is not None:
            rows = rows[: ast.limit]
        return QueryResult(
            columns, rows, approximate, notices, err_cols if show_errors else []
        )


def _order_spec(ast: QueryAst, names: list[str]):
    out = []
    for item in ast.order_by:
        name = item.ref.name if item.ref.table is None else str(item.ref)
        if name in names:
            out.append((name, item.descending))
    return out


def _sort_key(v):
    if v is None:
        return (0, "")
    if isinstance(v, str):
        return (1, v)
    try:
        if isinstance(v, float) and math.isnan(v):
            return (3, 0.0)
    except TypeError:
        pass
    return (2, float(v)) if isinstance(v, (int, float, np.integer, np.floating)) else (1, str(v))


def _apply_order_limit(rows, names, order_by, limit):
    for name, desc in reversed(order_by):
        if name in names:
            idx = names.index(name)
            rows.sort(key=lambda r: _sort_key(r[idx]), reverse=desc)
    if limit is not None:
        rows = rows[:limit]
    return rows
