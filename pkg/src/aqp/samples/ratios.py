"""Minimum Bernoulli sampling ratios for per-stratum guarantees.

``solve_min_ratio(m, n, delta)`` returns the smallest inclusion probability
p such that a Bernoulli process over n tuples yields at least m of them
with probability 1 - delta. The binomial lower-tail condition is inverted
directly (bisection against the exact binomial survival function), which
keeps the result within bisection tolerance of the true minimum at every n.
A closed-form normal-approximation inverse is kept alongside; it upper
bounds the exact answer in the small-ratio regime and mirrors how the
ratios can be precomputed into a SQL case expression.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfcinv
from scipy.stats import binom

from ..errors import DomainError
from ..relational.expr import CaseWhen, Cmp, Expr, Lit


def _check_args(m: int, n: int, delta: float):
    if not 1 <= m:
        raise DomainError(f"m must be >= 1, got {m}")
    if m > n:
        raise DomainError(f"m={m} exceeds stratum size n={n}")
    if not 0 < delta < 1:
        raise DomainError(f"delta must be in (0,1), got {delta}")


def solve_min_ratio(m: int, n: int, delta: float, tol: float = 1e-12) -> float:
    """Smallest p with P(Binomial(n, p) >= m) >= 1 - delta.

    Returns 1.0 at the m == n boundary: only sampling everything makes the
    full stratum certain.
    """
    _check_args(m, n, delta)
    if m == n:
        return 1.0
    target = 1.0 - delta
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if binom.sf(m - 1, n, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def normal_approx_min_ratio(m: int, n: int, delta: float, tol: float = 1e-12) -> float:
    """Closed-form ratio from the normal approximation of the binomial.

    Solves g(p; n) = sqrt(2 n p (1-p)) * erfcinv(2 (1-delta)) + n p = m
    for its smallest root in (0, 1]. Conservative (>= the exact ratio) for
    the m << n regime this is used in.
    """
    _check_args(m, n, delta)
    if m == n:
        return 1.0
    c = erfcinv(2.0 * (1.0 - delta))

    def g(p: float) -> float:
        return float(np.sqrt(2.0 * n * p * (1.0 - p)) * c + n * p)

    # g dips below 0 near p=0 then rises through m before p=1
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if g(mid) >= m:
            hi = mid
        else:
            lo = mid
    return min(hi, 1.0)


@dataclass(frozen=True)
class StaircaseTable:
    """Piecewise-constant upper bound of the minimum ratio by stratum size.

    ``breakpoints`` are (size threshold, ratio) pairs with strictly
    increasing thresholds and non-increasing ratios. A stratum of size n
    uses the ratio at the largest threshold <= n, and ratio 1 below the
    first threshold. Because the minimum ratio decreases with stratum
    size, looking up a smaller threshold is always conservative.
    """

    breakpoints: tuple[tuple[int, float], ...]
    m: int
    delta: float

    def lookup(self, n: int) -> float:
        ratio = 1.0
        for threshold, r in self.breakpoints:
            if n >= threshold:
                ratio = r
            else:
                break
        return ratio

    def to_case_expr(self, size_expr: Expr) -> Expr:
        """The staircase as a nested case expression over a size column."""
        branches = [
            (Cmp(">=", size_expr, Lit(threshold)), Lit(ratio))
            for threshold, ratio in reversed(self.breakpoints)
        ]
        return CaseWhen(tuple(branches), Lit(1.0))


@lru_cache(maxsize=256)
def staircase_thresholds(
    m: int, delta: float, max_size: int, factor: float = 1.05
) -> StaircaseTable:
    """Geometric threshold grid from m up to max_size.

    The grid factor bounds the conservativeness loss: between two adjacent
    thresholds the looked-up ratio exceeds the pointwise minimum by at most
    about one grid step. Tables are cached; repeated builds over same-sized
    strata reuse the solved ratios.
    """
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    thresholds: list[int] = []
    t = m
    while t < max_size:
        thresholds.append(t)
        t = max(t + 1, int(np.ceil(t * factor)))
    thresholds.append(max(max_size, m))
    pairs = tuple((t, solve_min_ratio(m, t, delta)) for t in thresholds)
    return StaircaseTable(pairs, m, delta)
