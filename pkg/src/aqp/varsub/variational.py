"""Variational tables: subsample ids assigned in a single pass.

Each retained tuple carries a subsample id (sid) in 1..b; a tuple belongs
to at most one subsample. Joins of two variational tables stay variational
after one equi-join plus one projection that reassigns sid through a block
map over the sid grid, and a grouped aggregate over a variational table
becomes variational by appending sid to its grouping columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import MismatchedB, NotPerfectSquare, SpecError, UnsupportedShape
from ..relational import Aggregate, INT64, PlanNode, Relation, join_relations
from ..relational.plan import walk

SID_COLUMN = "sid"


@dataclass(frozen=True)
class VariationalSpec:
    """Subsample geometry: sample size n, target size n_s, count b.

    ``n_s`` may be fractional for complete partitions (b * n_s == n).
    """

    n: int
    n_s: float
    b: int

    def __post_init__(self):
        if self.b < 2:
            raise SpecError(f"need at least 2 subsamples, got b={self.b}")
        if self.n_s <= 0:
            raise SpecError(f"subsample size must be positive, got {self.n_s}")
        if self.b * self.n_s > self.n + 1e-9:
            raise SpecError(
                f"b * n_s = {self.b * self.n_s} exceeds sample size {self.n}"
            )

    @classmethod
    def for_sample_size(cls, n: int) -> "VariationalSpec":
        """Default geometry: n_s = round(sqrt(n)), b = floor(n / n_s)."""
        n_s = max(int(round(math.sqrt(n))), 1)
        b = n // n_s
        return cls(n, n_s, b)

    @classmethod
    def partition(cls, n: int, b: int) -> "VariationalSpec":
        """Complete partition: every tuple lands in one of b subsamples."""
        return cls(n, n / b, b)

    @property
    def p_zero(self) -> float:
        """Probability a tuple falls into no subsample."""
        return (self.n - self.b * self.n_s) / self.n if self.n else 0.0


@dataclass
class VariationalTable:
    """A sample relation with a sid column plus the realized subsample sizes."""

    relation: Relation
    spec: VariationalSpec
    sizes: np.ndarray  # realized size of subsample i at index i-1

    @property
    def b(self) -> int:
        return self.spec.b

    def sid(self) -> np.ndarray:
        return self.relation.column(SID_COLUMN)


def draw_sids(n_rows: int, spec: VariationalSpec, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per tuple: sid 0 with weight (n - b n_s)/n, else 1..b."""
    keep_prob = min(spec.b * spec.n_s / spec.n, 1.0) if spec.n else 1.0
    u = rng.random(n_rows)
    sid = np.zeros(n_rows, dtype=np.int64)
    kept = u < keep_prob
    scaled = u[kept] / keep_prob * spec.b
    sid[kept] = np.minimum(scaled.astype(np.int64), spec.b - 1) + 1
    return sid


def assign_sids(sample: Relation, spec: VariationalSpec, seed: int) -> VariationalTable:
    """Build the variational table of a sample; sid-0 tuples are dropped."""
    if spec.n != sample.row_count:
        spec = VariationalSpec(sample.row_count, spec.n_s, spec.b)
    rng = np.random.default_rng(np.random.PCG64(seed))
    sid = draw_sids(sample.row_count, spec, rng)
    kept = sid > 0
    rel = sample.take(kept).with_column(SID_COLUMN, INT64, sid[kept])
    sizes = np.bincount(sid[kept] - 1, minlength=spec.b)
    return VariationalTable(rel, spec, sizes)


def h_join_sid(i, j, b: int):
    """Block map over the sid grid: h(i,j) = floor((i-1)/r)*r + floor((j-1)/r) + 1.

    ``r = sqrt(b)`` must be integral; the preimage of each output sid is an
    r-by-r block, so the b-by-b grid partitions into b equal blocks.
    Accepts scalars or arrays.
    """
    r = math.isqrt(b)
    if r * r != b:
        raise NotPerfectSquare(f"b={b} is not a perfect square")
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    out = (i - 1) // r * r + (j - 1) // r + 1
    return int(out) if out.ndim == 0 else out


def join_variational(
    tv: VariationalTable,
    sv: VariationalTable,
    keys: Sequence[tuple[str, str]],
) -> VariationalTable:
    """Variational table of the join: one equi-join, then sid reassignment."""
    if tv.b != sv.b:
        raise MismatchedB(f"subsample counts differ: {tv.b} vs {sv.b}")
    b = tv.b
    r = math.isqrt(b)
    if r * r != b:
        raise NotPerfectSquare(f"b={b} is not a perfect square")
    left_keys = [k for k, _ in keys]
    right_keys = [k for _, k in keys]
    joined = join_relations(tv.relation, sv.relation, left_keys, right_keys)
    sid = h_join_sid(joined.column(SID_COLUMN), joined.column(SID_COLUMN + "_r"), b)
    names = [n for n in joined.schema.names if n not in (SID_COLUMN, SID_COLUMN + "_r")]
    rel = joined.select(names).with_column(SID_COLUMN, INT64, sid)
    sizes = np.bincount(sid - 1, minlength=b) if len(sid) else np.zeros(b, np.int64)
    spec = VariationalSpec.partition(max(rel.row_count, b), b)
    return VariationalTable(rel, spec, sizes)


def nest_variational(plan: PlanNode) -> Aggregate:
    """Push sid into an inner aggregate's grouping columns.

    The rewritten aggregate produces the variational table of the derived
    relation in the same single scan. One nesting level only.
    """
    if not isinstance(plan, Aggregate):
        raise UnsupportedShape("inner query must be a grouped aggregate")
    if SID_COLUMN in plan.group:
        raise UnsupportedShape("aggregate already grouped by sid")
    for node in walk(plan.child):
        if isinstance(node, Aggregate):
            raise UnsupportedShape(
                "aggregates of aggregates beyond one nesting level"
            )
    return Aggregate(plan.child, tuple(plan.group) + (SID_COLUMN,), plan.aggs)
