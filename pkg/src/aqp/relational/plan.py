"""Logical plan nodes.

Plans form a DAG: a node may appear as the child of several parents, in
which case the executor materializes it once per execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .expr import Col, Expr


class PlanNode:
    pass


@dataclass(frozen=True)
class Scan(PlanNode):
    table: str


@dataclass(frozen=True)
class Project(PlanNode):
    """Replace the schema with the given named expressions."""

    child: PlanNode
    outputs: tuple[tuple[str, Expr], ...]

    @staticmethod
    def star(child: PlanNode, names: Sequence[str], extra=()) -> "Project":
        outputs = [(n, Col(n)) for n in names] + list(extra)
        return Project(child, tuple(outputs))


@dataclass(frozen=True)
class Filter(PlanNode):
    child: PlanNode
    predicate: Expr


@dataclass(frozen=True)
class EquiJoin(PlanNode):
    """Inner equi-join; an empty key list is a cross product.

    Right-side columns whose names collide with the left get a ``_r``
    suffix. Null keys match null keys (groups formed over a null key can
    be joined back to their source rows).
    """

    left: PlanNode
    right: PlanNode
    left_keys: tuple[str, ...]
    right_keys: tuple[str, ...]
    suffix: str = "_r"


@dataclass(frozen=True)
class AggSpec:
    """One aggregate output column.

    ``func``: count_star, count, sum, avg, min, max, var, stddev,
    count_distinct, quantile, wsum, wavg, wvar, wstddev, wquantile.
    Weighted variants take (value column, weight column); quantiles carry
    ``param`` in (0, 1).
    """

    name: str
    func: str
    arg: Optional[str] = None
    weight: Optional[str] = None
    param: Optional[float] = None


@dataclass(frozen=True)
class Aggregate(PlanNode):
    child: PlanNode
    group: tuple[str, ...]
    aggs: tuple[AggSpec, ...]


@dataclass(frozen=True)
class Union(PlanNode):
    children: tuple[PlanNode, ...]


@dataclass(frozen=True)
class Limit(PlanNode):
    child: PlanNode
    n: int


def walk(node: PlanNode) -> list[PlanNode]:
    """All nodes of the plan DAG; shared nodes appear once."""
    seen: set[int] = set()
    stack = [node]
    order: list[PlanNode] = []
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        order.append(n)
        for attr in ("child", "left", "right"):
            c = getattr(n, attr, None)
            if isinstance(c, PlanNode):
                stack.append(c)
        stack.extend(getattr(n, "children", ()))
    return order


def count_scans(node: PlanNode, table: str) -> int:
    """Distinct Scan nodes of a table in the plan DAG."""
    return sum(1 for n in walk(node) if isinstance(n, Scan) and n.table == table)
