"""Ratio solver, staircase, and sample builder tests."""

import collections

import numpy as np
import pytest
from scipy.stats import binom

from aqp.errors import DomainError, InvariantViolation
from aqp.relational import Database, FLOAT64, INT64, Relation, Schema, TEXT
from aqp.samples import (
    PROB_COLUMN,
    SampleCatalog,
    StaircaseTable,
    append_to_samples,
    build_hashed,
    build_stratified,
    build_uniform,
    normal_approx_min_ratio,
    solve_min_ratio,
    staircase_thresholds,
)


def exact_min_p(m, n, delta):
    """Independent oracle: bisect the exact binomial survival function."""
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if binom.sf(m - 1, n, mid) >= 1 - delta:
            hi = mid
        else:
            lo = mid
    return hi


class TestSolveMinRatio:
    def test_matches_exact_binomial_oracle(self):
        for m, n in [(10, 100), (10, 1000), (50, 2000)]:
            for delta in (0.001, 0.01):
                got = solve_min_ratio(m, n, delta)
                want = exact_min_p(m, n, delta)
                assert got == pytest.approx(want, abs=1e-9)

    def test_above_naive_ratio(self):
        # p = m/n leaves a ~45% shortfall chance at m=10, n=100
        assert binom.cdf(9, 100, 0.1) == pytest.approx(0.451, abs=0.01)
        assert solve_min_ratio(10, 100, 0.001) > 0.1

    def test_boundary_m_equals_n(self):
        assert solve_min_ratio(100, 100, 0.001) == 1.0

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            solve_min_ratio(11, 10, 0.001)
        with pytest.raises(DomainError):
            solve_min_ratio(0, 10, 0.001)

    def test_normal_approx_is_conservative_here(self):
        # the closed form upper-bounds the exact ratio in the small-p regime
        for m, n in [(10, 100), (10, 1000), (50, 5000)]:
            for delta in (0.001, 0.01):
                assert normal_approx_min_ratio(m, n, delta) >= solve_min_ratio(
                    m, n, delta
                )

    def test_guarantee_holds_at_solution(self):
        p = solve_min_ratio(10, 1000, 0.001)
        assert binom.sf(9, 1000, p) >= 0.999
        assert binom.sf(9, 1000, p * 0.98) < 0.999


class TestStaircase:
    def test_conservative_on_grid_and_midpoints(self):
        table = staircase_thresholds(10, 0.001, 3000)
        sizes = [t for t, _ in table.breakpoints]
        mids = [(a + b) // 2 for a, b in zip(sizes, sizes[1:]) if b - a > 1]
        for n in sizes + mids:
            assert table.lookup(n) >= solve_min_ratio(10, n, 0.001) - 1e-12

    def test_lower_threshold_rule(self):
        # between thresholds 10 and 20 the ratio at 10 applies
        table = StaircaseTable(
            ((10, solve_min_ratio(10, 10, 0.001)), (20, solve_min_ratio(10, 20, 0.001))),
            m=10,
            delta=0.001,
        )
        assert table.lookup(15) == solve_min_ratio(10, 10, 0.001)

    def test_below_first_threshold_is_one(self):
        table = staircase_thresholds(10, 0.001, 1000)
        assert table.lookup(3) == 1.0

    def test_ratios_non_increasing(self):
        table = staircase_thresholds(10, 0.001, 5000)
        ratios = [r for _, r in table.breakpoints]
        assert all(a >= b - 1e-12 for a, b in zip(ratios, ratios[1:]))

    def test_case_expr_matches_lookup(self):
        from aqp.relational import Project, Scan
        from aqp.relational.expr import Col

        table = staircase_thresholds(5, 0.01, 500)
        sizes = np.array([1, 4, 5, 17, 80, 499, 500, 900], dtype=np.int64)
        db = Database()
        db.register("s", Relation.from_columns(Schema([("n", INT64)]), [sizes]))
        out = db.execute(
            Project(Scan("s"), (("r", table.to_case_expr(Col("n"))),)), seed=0
        )
        assert list(out.column("r")) == [table.lookup(int(n)) for n in sizes]


@pytest.fixture
def sampled_db():
    db = Database()
    rng = np.random.default_rng(42)
    n = 50_000
    rel = Relation.from_columns(
        Schema([("g", INT64), ("x", FLOAT64)]),
        [rng.integers(0, 20, n), rng.normal(10.0, 3.0, n)],
    )
    db.register("t", rel)
    return db, SampleCatalog(db)


class TestUniform:
    def test_tau_one_is_identity(self, sampled_db):
        db, cat = sampled_db
        d = build_uniform(db, cat, "t", 1.0, seed=1)
        assert d.built_size == db.get("t").row_count
        assert (db.get(d.sample_table).column(PROB_COLUMN) == 1.0).all()

    def test_binomial_size_bound(self):
        db = Database()
        db.register(
            "u", Relation.from_columns(Schema([("v", INT64)]), [np.arange(1_000_000)])
        )
        cat = SampleCatalog(db)
        d = build_uniform(db, cat, "u", 0.01, seed=3)
        sigma = np.sqrt(1e4 * 0.99)
        assert abs(d.built_size - 1e4) <= 3 * sigma

    def test_per_row_inclusion_frequency(self):
        # two-row table at tau=0.5: each row in about half the builds
        db = Database()
        db.register("two", Relation.from_rows(Schema([("v", INT64)]), [(1,), (2,)]))
        cat = SampleCatalog(db)
        hits = collections.Counter()
        trials = 400
        for seed in range(trials):
            d = build_uniform(db, cat, "two", 0.5, seed=seed)
            for (v, _p) in db.get(d.sample_table).rows():
                hits[v] += 1
        for v in (1, 2):
            assert abs(hits[v] / trials - 0.5) < 0.09  # 3 sigma ~ 0.075

    def test_unbiased_total(self):
        # E[sum(x)/tau over sample] = sum(x) over source
        rng = np.random.default_rng(1)
        x = rng.exponential(2.0, 100_000)
        db = Database()
        db.register("b", Relation.from_columns(Schema([("x", FLOAT64)]), [x]))
        cat = SampleCatalog(db)
        truth = x.sum()
        estimates = []
        for seed in range(1000):
            d = build_uniform(db, cat, "b", 0.01, seed=seed)
            estimates.append(db.get(d.sample_table).column("x").sum() / 0.01)
        assert abs(np.mean(estimates) / truth - 1) < 0.01


class TestHashed:
    def test_equal_values_in_or_out_together(self, sampled_db):
        db, cat = sampled_db
        d = build_hashed(db, cat, "t", 0.4, ["g"], seed=1)
        sample_groups = set(db.get(d.sample_table).column("g").tolist())
        src = db.get("t")
        # every source row of an included group is in the sample
        included = np.isin(src.column("g"), list(sample_groups))
        assert included.sum() == d.built_size

    def test_tau_one_full_table(self, sampled_db):
        db, cat = sampled_db
        d = build_hashed(db, cat, "t", 1.0, ["g"], seed=1)
        assert d.built_size == db.get("t").row_count

    def test_distinct_share_binomial(self):
        db = Database()
        values = np.arange(100_000) % 1000
        db.register("h", Relation.from_columns(Schema([("c", INT64)]), [values]))
        cat = SampleCatalog(db)
        d = build_hashed(db, cat, "h", 0.1, ["c"], seed=1)
        kept = len(set(db.get(d.sample_table).column("c").tolist()))
        sigma = np.sqrt(1000 * 0.1 * 0.9)
        assert abs(kept - 100) <= 3 * sigma

    def test_rebuild_identical(self, sampled_db):
        db, cat = sampled_db
        d1 = build_hashed(db, cat, "t", 0.3, ["g"], seed=1)
        rows1 = sorted(db.get(d1.sample_table).rows())
        d2 = build_hashed(db, cat, "t", 0.3, ["g"], seed=999, name=d1.sample_table)
        rows2 = sorted(db.get(d2.sample_table).rows())
        assert rows1 == rows2


class TestStratified:
    def test_small_stratum_kept_whole(self):
        db = Database()
        rows = [(0, float(i)) for i in range(5)] + [(1, float(i)) for i in range(3000)]
        db.register("s", Relation.from_rows(Schema([("g", INT64), ("x", FLOAT64)]), rows))
        cat = SampleCatalog(db)
        d = build_stratified(db, cat, "s", 0.01, ["g"], seed=2, m=10, delta=0.001)
        sample = db.get(d.sample_table)
        small = sample.take(sample.column("g") == 0)
        assert small.row_count == 5
        assert (small.column(PROB_COLUMN) == 1.0).all()

    def test_minimum_guarantee_smoke(self):
        # the full 1000-build Monte Carlo runs in the acceptance suite
        db = Database()
        g = np.repeat([0, 1, 2], [100, 1000, 10000])
        db.register(
            "s",
            Relation.from_columns(
                Schema([("g", INT64), ("x", FLOAT64)]),
                [g, np.arange(g.size, dtype=float)],
            ),
        )
        cat = SampleCatalog(db)
        failures = 0
        builds = 60
        for seed in range(builds):
            d = build_stratified(db, cat, "s", 1e-4, ["g"], seed=seed, m=10, delta=0.001)
            counts = collections.Counter(db.get(d.sample_table).column("g").tolist())
            failures += sum(counts.get(k, 0) < 10 for k in (0, 1, 2))
        assert failures <= 2

    def test_eq1_guarantee_when_staircase_covers_budget(self):
        # budget target |T| tau / d below the m floor: the staircase carries
        # the 1-delta guarantee for the Eq-style minimum
        db = Database()
        g = np.repeat(np.arange(10), 2000)
        db.register(
            "s",
            Relation.from_columns(
                Schema([("g", INT64), ("x", FLOAT64)]),
                [g, np.arange(g.size, dtype=float)],
            ),
        )
        cat = SampleCatalog(db)
        tau = 0.002  # target = 20000 * 0.002 / 10 = 4 <= m
        target = 20000 * tau / 10
        failures = 0
        for seed in range(50):
            d = build_stratified(db, cat, "s", tau, ["g"], seed=seed, m=10, delta=0.001)
            counts = collections.Counter(db.get(d.sample_table).column("g").tolist())
            failures += sum(counts.get(k, 0) < min(target, 2000) for k in range(10))
        assert failures == 0

    def test_prob_column_is_realized_ratio(self, sampled_db):
        db, cat = sampled_db
        d = build_stratified(db, cat, "t", 0.01, ["g"], seed=5)
        sample = db.get(d.sample_table)
        src = db.get("t")
        for gval in set(sample.column("g").tolist()):
            in_sample = sample.take(sample.column("g") == gval)
            n_src = int((src.column("g") == gval).sum())
            expect = in_sample.row_count / n_src
            assert in_sample.column(PROB_COLUMN) == pytest.approx(expect)

    def test_null_stratum(self):
        db = Database()
        rows = [(None, 1.0)] * 40 + [("a", 2.0)] * 4000
        db.register("s", Relation.from_rows(Schema([("g", TEXT), ("x", FLOAT64)]), rows))
        cat = SampleCatalog(db)
        d = build_stratified(db, cat, "s", 0.01, ["g"], seed=3, m=10, delta=0.001)
        sample = db.get(d.sample_table)
        nulls = [v for v in sample.column("g").tolist() if v is None]
        assert len(nulls) >= 10


class TestAppends:
    def _db(self):
        db = Database()
        rng = np.random.default_rng(0)
        rel = Relation.from_columns(
            Schema([("g", INT64), ("x", FLOAT64)]),
            [rng.integers(0, 5, 20_000), rng.normal(0, 1, 20_000)],
        )
        db.register("t", rel)
        return db, SampleCatalog(db), rng

    def test_uniform_append_fraction(self):
        db, cat, rng = self._db()
        d = build_uniform(db, cat, "t", 0.1, seed=1)
        before = d.built_size
        new = Relation.from_columns(
            Schema([("g", INT64), ("x", FLOAT64)]),
            [rng.integers(0, 5, 10_000), rng.normal(0, 1, 10_000)],
        )
        (updated,) = append_to_samples(db, cat, "t", new, seed=2)
        added = updated.built_size - before
        sigma = np.sqrt(10_000 * 0.1 * 0.9)
        assert abs(added - 1000) <= 3 * sigma
        assert updated.source_size == 30_000
        assert not cat.detect_stale("t")

    def test_stratified_append_reuses_ratio_exactly(self):
        db, cat, rng = self._db()
        d = build_stratified(db, cat, "t", 0.05, ["g"], seed=1)
        sample = db.get(d.sample_table)
        stored = {}
        for gval, prob in zip(sample.column("g").tolist(), sample.column(PROB_COLUMN).tolist()):
            stored.setdefault(gval, prob)
        new = Relation.from_columns(
            Schema([("g", INT64), ("x", FLOAT64)]),
            [rng.integers(0, 5, 5_000), rng.normal(0, 1, 5_000)],
        )
        append_to_samples(db, cat, "t", new, seed=7)
        grown = db.get(d.sample_table)
        appended = grown.take(np.arange(sample.row_count, grown.row_count))
        for gval, prob in zip(
            appended.column("g").tolist(), appended.column(PROB_COLUMN).tolist()
        ):
            assert prob == stored[gval]

    def test_new_stratum_uses_staircase(self):
        from aqp.samples import staircase_thresholds

        db, cat, rng = self._db()
        build_stratified(db, cat, "t", 0.05, ["g"], seed=1, m=10, delta=0.001)
        new = Relation.from_columns(
            Schema([("g", INT64), ("x", FLOAT64)]),
            [np.full(500, 99), rng.normal(0, 1, 500)],
        )
        append_to_samples(db, cat, "t", new, seed=7, m=10, delta=0.001)
        sample = db.get("t__stratified_g")
        fresh = sample.take(sample.column("g") == 99)
        expect = staircase_thresholds(10, 0.001, 500).lookup(500)
        assert fresh.row_count > 0
        assert (fresh.column(PROB_COLUMN) == expect).all()

    def test_schema_mismatch(self):
        from aqp.errors import SchemaMismatch

        db, cat, _ = self._db()
        build_uniform(db, cat, "t", 0.1, seed=1)
        bad = Relation.from_rows(Schema([("z", TEXT)]), [("x",)])
        with pytest.raises(SchemaMismatch):
            append_to_samples(db, cat, "t", bad, seed=1)
