"""Sample planning: choose sample tables per aggregate within an I/O budget.

Each aggregate can be answered from one sample (or the base table) per
base-table occurrence. Candidates are enumerated bottom-up over the join
tree, keeping only the k best partial combinations wherever a join occurs.
Plans whose aggregates share a sample set are consolidated so those
aggregates run in one rewritten query. The score of a consolidated plan
averages sqrt(effective sampling ratio) across its groups, boosted when a
stratified sample's column set covers the grouping attributes; cost is the
total tuple count of the samples each group touches, counting a sample
once per group that uses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .frontend.ast import (
    COUNT_DISTINCT,
    ColRef,
    QueryAst,
    aggregates_in,
)
from .frontend.lower import output_names_for
from .samples.catalog import SampleCatalog
from .samples.descriptors import (
    HASHED,
    IRREGULAR,
    STRATIFIED,
    UNIFORM,
    PolicyConfig,
    SampleDescriptor,
)


def base_table_standin(table: str, rows: int) -> SampleDescriptor:
    """The original table posing as a full-rate sample."""
    return SampleDescriptor(
        source_table=table,
        sample_table=table,
        kind=IRREGULAR,
        tau=1.0,
        built_size=rows,
        source_size=rows,
        created_at=0.0,
    )


@dataclass(frozen=True)
class JoinLeaf:
    alias: str
    table: str


@dataclass(frozen=True)
class JoinNode:
    left: "JoinLeaf | JoinNode"
    right: JoinLeaf
    left_cols: tuple[str, ...]  # bare column names on each side
    right_cols: tuple[str, ...]


def join_tree_of(ast: QueryAst) -> JoinLeaf | JoinNode:
    """Left-deep join tree with bare join-column names per side."""
    node: JoinLeaf | JoinNode = JoinLeaf(ast.tables[0].alias, ast.tables[0].name or ast.tables[0].alias)
    aliases = {ast.tables[0].alias}
    for i, table in enumerate(ast.tables[1:]):
        leaf = JoinLeaf(table.alias, table.name or table.alias)
        lcols, rcols = [], []
        for cond in ast.join_conds[i]:
            if cond.left.table == table.alias or (cond.right.table in aliases):
                inner, outer = cond.left, cond.right
            else:
                inner, outer = cond.right, cond.left
            if inner.table == table.alias:
                rcols.append(inner.name)
                lcols.append(outer.name)
            else:
                rcols.append(outer.name)
                lcols.append(inner.name)
        node = JoinNode(node, leaf, tuple(lcols), tuple(rcols))
        aliases.add(table.alias)
    return node


@dataclass(frozen=True)
class Combo:
    """Descriptors chosen for every base-table occurrence of one aggregate."""

    assignment: tuple[tuple[str, SampleDescriptor], ...]  # (alias, descriptor)
    ratio: float
    hashed_on: Optional[frozenset] = None  # carried when the combo behaves like one hashed sample

    @property
    def key(self) -> tuple:
        return tuple((a, d.sample_table) for a, d in self.assignment)

    def descriptor_names(self) -> tuple[str, ...]:
        return tuple(d.sample_table for _, d in self.assignment)


def effective_ratio(left: Combo, right: Combo, left_cols, right_cols) -> Combo:
    """Fold two sides of a join into one combo with its composed ratio.

    Two hashed samples equi-joined on their hash column sets keep the
    smaller ratio (tuples co-locate); any other pairing multiplies.
    """
    both_hashed = (
        left.hashed_on is not None
        and right.hashed_on is not None
        and left.hashed_on == frozenset(left_cols)
        and right.hashed_on == frozenset(right_cols)
    )
    assignment = left.assignment + right.assignment
    if both_hashed:
        return Combo(assignment, min(left.ratio, right.ratio), left.hashed_on)
    return Combo(assignment, left.ratio * right.ratio, None)


def _leaf_combo(alias: str, d: SampleDescriptor) -> Combo:
    hashed_on = frozenset(d.columns) if d.kind == HASHED else None
    ratio = d.effective_ratio if d.kind != IRREGULAR else d.tau
    return Combo(((alias, d),), ratio, hashed_on)


@dataclass(frozen=True)
class AggregateTask:
    """What the planner needs to know about one aggregate output."""

    name: str
    kind: str
    distinct_column: Optional[str] = None  # bare name, for count_distinct


@dataclass
class ScoredPlan:
    combos: tuple[Combo, ...]  # one per aggregate, aligned with tasks
    score: float
    io_cost: float
    feasible: bool
    groups: tuple[tuple[tuple[int, ...], Combo], ...]  # consolidated

    def tie_key(self):
        mean_ratio = sum(c.ratio for c in self.combos) / len(self.combos)
        names = tuple(c.descriptor_names() for c in self.combos)
        return (-self.score, -mean_ratio, names)


def consolidate(combos: Sequence[Combo]) -> tuple[tuple[tuple[int, ...], Combo], ...]:
    """Group aggregates that share the same sample set."""
    groups: list[tuple[list[int], Combo]] = []
    seen: dict[tuple, int] = {}
    for i, combo in enumerate(combos):
        key = tuple(sorted(combo.key))
        if key in seen:
            groups[seen[key]][0].append(i)
        else:
            seen[key] = len(groups)
            groups.append(([i], combo))
    return tuple((tuple(idx), combo) for idx, combo in groups)


class SamplePlanner:
    def __init__(self, db, catalog: SampleCatalog, config: PolicyConfig = PolicyConfig()):
        self.db = db
        self.catalog = catalog
        self.config = config

    # -- public API ---------------------------------------------------------

    def tasks_for(self, ast: QueryAst) -> list[AggregateTask]:
        tasks = []
        names = output_names_for(ast)
        for name, item in zip(names, ast.select):
            aggs = aggregates_in(item.expr)
            if not aggs:
                continue
            agg = aggs[0]
            col = None
            if agg.kind == COUNT_DISTINCT and isinstance(agg.arg, ColRef):
                col = agg.arg.name
            tasks.append(AggregateTask(name, agg.kind, col))
        return tasks

    def enumerate_candidates(self, ast: QueryAst, k: Optional[int] = None) -> list[ScoredPlan]:
        """All scored candidate plans after top-k pruning at every join."""
        k = k or self.config.planner_k
        tasks = self.tasks_for(ast)
        tree = join_tree_of(ast)
        grouping = self._grouping_by_alias(ast)
        per_task = [self._combos_for_task(tree, task, k) for task in tasks]
        return self._cross_plans(per_task, ast, grouping)

    def plan(self, ast: QueryAst, k: Optional[int] = None) -> tuple[Optional[ScoredPlan], list[ScoredPlan]]:
        """Best feasible plan and the scored candidate list (for explain)."""
        candidates = self.enumerate_candidates(ast, k)
        return self.select_plan(candidates), candidates

    def select_plan(self, candidates: Sequence[ScoredPlan]) -> Optional[ScoredPlan]:
        feasible = [p for p in candidates if p.feasible]
        if not feasible:
            return None
        return min(feasible, key=lambda p: p.tie_key())

    # -- internals ---------------------------------------------------------------

    def _grouping_by_alias(self, ast: QueryAst) -> dict[str, set[str]]:
        alias_tables = {t.alias: t.name for t in ast.tables if not t.is_derived}
        out: dict[str, set[str]] = {a: set() for a in alias_tables}
        for ref in ast.group_by:
            if ref.table is not None and ref.table in out:
                out[ref.table].add(ref.name)
            else:
                # unqualified: attribute to every table that has the column
                for alias, table in alias_tables.items():
                    if self.db.has(table) and self.db.get(table).schema.has(ref.name):
                        out[alias].add(ref.name)
        return out

    def _options_for_leaf(self, leaf: JoinLeaf, task: AggregateTask) -> list[Combo]:
        """Samples available for one table occurrence.

        The base table participates as a full-rate stand-in only when no
        usable sample exists for it; the no-AQP fallback is decided at
        selection time instead.
        """
        candidates: list[SampleDescriptor] = []
        if self.db.has(leaf.table):
            candidates = self.catalog.list_candidates(leaf.table)
            if task.kind == COUNT_DISTINCT and task.distinct_column is not None:
                if self.db.get(leaf.table).schema.has(task.distinct_column):
                    # a distinct count needs co-located values: hashed on that column
                    candidates = [
                        d
                        for d in candidates
                        if d.kind == HASHED and d.columns == (task.distinct_column,)
                    ]
        if not candidates:
            rows = self.db.get(leaf.table).row_count if self.db.has(leaf.table) else 0
            candidates = [base_table_standin(leaf.table, rows)]
        return [_leaf_combo(leaf.alias, d) for d in candidates]

    def _combos_for_task(self, tree, task: AggregateTask, k: int) -> list[Combo]:
        if isinstance(tree, JoinLeaf):
            return self._options_for_leaf(tree, task)
        left = self._combos_for_task(tree.left, task, k)
        right = self._options_for_leaf(tree.right, task)
        merged = [
            effective_ratio(lc, rc, tree.left_cols, tree.right_cols)
            for lc in left
            for rc in right
        ]
        if len(merged) <= k:
            return merged
        # keep the k best by partial score; ties by larger ratio then name
        merged.sort(key=lambda c: (-math.sqrt(c.ratio), -c.ratio, c.descriptor_names()))
        return merged[:k]

    def _cross_plans(self, per_task, ast, grouping) -> list[ScoredPlan]:
        plans: list[tuple[Combo, ...]] = [()]
        for options in per_task:
            plans = [p + (c,) for p in plans for c in options]
        total_source = sum(
            self.db.get(t.name).row_count
            for t in ast.tables
            if not t.is_derived and self.db.has(t.name)
        )
        budget_rows = self.config.io_budget * total_source
        out = []
        for combos in plans:
            groups = consolidate(combos)
            score = 0.0
            cost = 0.0
            for _, combo in groups:
                advantage = 1.0
                for alias, d in combo.assignment:
                    if d.kind == STRATIFIED and grouping.get(alias, set()) and set(
                        d.columns
                    ) >= grouping[alias]:
                        advantage = self.config.advantage_factor
                        break
                score += math.sqrt(combo.ratio) * advantage
                cost += sum(d.built_size for _, d in combo.assignment)
            score /= max(len(groups), 1)
            out.append(ScoredPlan(combos, score, cost, cost <= budget_rows, groups))
        return out


def derive_sample_type(
    kind: str, columns: Sequence[str], tau: float, grouping: Sequence[str]
) -> tuple[str, float]:
    """Sample kind of a grouped-aggregate derived table built over a sample.

    Hashed on exactly the grouping attributes: groups survive independently
    with chance tau, so the derived relation is a uniform sample at tau.
    Stratified on the grouping attributes: no group is missed, so the
    derived relation is the full result. Anything else is irregular.
    """
    if set(columns) == set(grouping) and grouping:
        if kind == HASHED:
            return UNIFORM, tau
        if kind == STRATIFIED:
            return UNIFORM, 1.0
    return IRREGULAR, 1.0


def explain_text(
    tasks: Sequence[AggregateTask],
    best: Optional[ScoredPlan],
    candidates: Sequence[ScoredPlan],
    budget_rows: float,
) -> str:
    lines = []
    if best is None:
        lines.append("no feasible sample plan within the I/O budget; running exactly")
    else:
        lines.append(f"chosen plan: score={best.score:.4f} io_cost={best.io_cost:.0f}")
        for idx_group, combo in best.groups:
            names = ", ".join(tasks[i].name for i in idx_group)
            samples = ", ".join(f"{a}->{d.sample_table}" for a, d in combo.assignment)
            lines.append(
                f"  [{names}] uses {samples} (effective ratio {combo.ratio:.6g})"
            )
    shown = 0
    for plan in sorted(candidates, key=lambda p: p.tie_key()):
        if best is not None and plan is best:
            continue
        if shown >= 5:
            break
        reason = "over I/O budget" if not plan.feasible else "lower score"
        sets = "; ".join(
            ",".join(d.sample_table for _, d in combo.assignment) for combo in plan.combos
        )
        lines.append(
            f"  rejected ({reason}): score={plan.score:.4f} cost={plan.io_cost:.0f} [{sets}]"
        )
        shown += 1
    lines.append(f"  budget: {budget_rows:.0f} rows")
    return "\n".join(lines)
