"""Sample planner tests: enumeration, consolidation, scoring, selection."""

import itertools

import numpy as np
import pytest

from aqp.frontend import parse
from aqp.planner import (
    Combo,
    SamplePlanner,
    consolidate,
    derive_sample_type,
    effective_ratio,
    join_tree_of,
)
from aqp.relational import Database, FLOAT64, INT64, Relation, Schema
from aqp.samples import (
    HASHED,
    IRREGULAR,
    PolicyConfig,
    SampleCatalog,
    SampleDescriptor,
    STRATIFIED,
    UNIFORM,
)


def desc(source, name, kind, tau, columns=(), built=None, source_size=1_000_000):
    built = built if built is not None else int(tau * source_size)
    return SampleDescriptor(
        source_table=source,
        sample_table=name,
        kind=kind,
        tau=tau,
        columns=tuple(columns),
        built_size=built,
        source_size=source_size,
        created_at=0.0,
    )


def combo_of(*pairs):
    parts = [  # single-descriptor leaf combos
        Combo(((alias, d),), d.effective_ratio if d.kind != IRREGULAR else d.tau,
              frozenset(d.columns) if d.kind == HASHED else None)
        for alias, d in pairs
    ]
    return parts


class FakeCatalog:
    """Catalog stub returning canned descriptors."""

    def __init__(self, by_table):
        self.by_table = by_table

    def list_candidates(self, table):
        return list(self.by_table.get(table, []))


def make_db(tables):
    db = Database()
    for name, rows in tables.items():
        db.register(
            name,
            Relation.from_columns(
                Schema([("order_id", INT64), ("product", INT64), ("city", INT64), ("price", FLOAT64)]),
                [
                    np.arange(rows) % 1000,
                    np.arange(rows) % 50,
                    np.arange(rows) % 10,
                    np.ones(rows),
                ],
            ),
        )
    return db


class TestEffectiveRatio:
    def test_hashed_hashed_on_common_columns_takes_min(self):
        a = desc("orders", "o_h", HASHED, 0.01, ("order_id",))
        b = desc("products", "p_h", HASHED, 0.01, ("order_id",))
        (ca,) = combo_of(("o", a))
        (cb,) = combo_of(("p", b))
        merged = effective_ratio(ca, cb, ("order_id",), ("order_id",))
        assert merged.ratio == pytest.approx(0.01)

    def test_uniform_stratified_multiplies(self):
        a = desc("orders", "o_u", UNIFORM, 0.01)
        b = desc("products", "p_s", STRATIFIED, 0.01, ("city",))
        (ca,) = combo_of(("o", a))
        (cb,) = combo_of(("p", b))
        merged = effective_ratio(ca, cb, ("order_id",), ("order_id",))
        assert merged.ratio == pytest.approx(0.0001)

    def test_single_table_ratio_is_tau(self):
        a = desc("orders", "o_u", UNIFORM, 0.02)
        (ca,) = combo_of(("o", a))
        assert ca.ratio == pytest.approx(0.02)

    def test_hashed_on_different_columns_multiplies(self):
        a = desc("orders", "o_h", HASHED, 0.01, ("order_id",))
        b = desc("products", "p_h", HASHED, 0.01, ("product",))
        (ca,) = combo_of(("o", a))
        (cb,) = combo_of(("p", b))
        merged = effective_ratio(ca, cb, ("order_id",), ("order_id",))
        assert merged.ratio == pytest.approx(0.0001)


class TestConsolidate:
    def _combos(self):
        u_o = desc("orders", "o_u", UNIFORM, 0.01)
        s_p = desc("products", "p_s", STRATIFIED, 0.01, ("city",))
        h_o = desc("orders", "o_h", HASHED, 0.01, ("order_id",))
        h_p = desc("products", "p_h", HASHED, 0.01, ("order_id",))
        us = Combo((("o", u_o), ("p", s_p)), 0.0001)
        hs = Combo((("o", h_o), ("p", s_p)), 0.0001)
        hh = Combo((("o", h_o), ("p", h_p)), 0.01)
        return us, hs, hh

    def test_count_avg_merge_like_table5a(self):
        us, hs, _ = self._combos()
        # count(*) and avg(price) share {uniform orders, stratified products}
        groups = consolidate([us, us, hs])
        assert len(groups) == 2
        assert groups[0][0] == (0, 1)
        assert groups[1][0] == (2,)

    def test_all_three_merge_like_table5b(self):
        _, _, hh = self._combos()
        groups = consolidate([hh, hh, hh])
        assert len(groups) == 1
        assert groups[0][0] == (0, 1, 2)

    def test_distinct_sets_unchanged(self):
        us, hs, hh = self._combos()
        groups = consolidate([us, hs, hh])
        assert len(groups) == 3

    def test_idempotent_and_preserves_union(self):
        us, hs, hh = self._combos()
        groups = consolidate([us, hs, us, hh])
        covered = sorted(i for idx, _ in groups for i in idx)
        assert covered == [0, 1, 2, 3]
        again = consolidate([c for _, c in groups])
        assert len(again) == len(groups)


class TestEnumerate:
    def _planner(self, samples, tables=("orders", "order_products")):
        db = make_db({t: 1_000_000 for t in tables})
        planner = SamplePlanner(db, FakeCatalog(samples), PolicyConfig())
        return planner

    def test_two_samples_per_side_gives_four(self):
        samples = {
            "orders": [
                desc("orders", "o_u", UNIFORM, 0.01),
                desc("orders", "o_h", HASHED, 0.01, ("order_id",)),
            ],
            "order_products": [
                desc("order_products", "p_s", STRATIFIED, 0.01, ("city",)),
                desc("order_products", "p_h", HASHED, 0.01, ("order_id",)),
            ],
        }
        planner = self._planner(samples)
        ast = parse(
            "select count(*) from orders o inner join order_products p "
            "on o.order_id = p.order_id"
        )
        tree = join_tree_of(ast)
        combos = planner._combos_for_task(tree, planner.tasks_for(ast)[0], k=10)
        assert len(combos) == 4

    def test_heuristic_keeps_universe_join_first(self):
        # figure scenario: k=2 keeps universe-universe (ratio 1%) then the
        # lexicographically first 0.01% combination (uniform-stratified)
        samples = {
            "orders": [
                desc("orders", "o_uniform", UNIFORM, 0.01),
                desc("orders", "o_universe", HASHED, 0.01, ("order_id",)),
            ],
            "order_products": [
                desc("order_products", "p_stratified", STRATIFIED, 0.01, ("city",)),
                desc("order_products", "p_universe", HASHED, 0.01, ("order_id",)),
            ],
        }
        planner = self._planner(samples)
        ast = parse(
            "select count(*) from orders o inner join order_products p "
            "on o.order_id = p.order_id group by city"
        )
        tree = join_tree_of(ast)
        combos = planner._combos_for_task(tree, planner.tasks_for(ast)[0], k=2)
        assert len(combos) == 2
        assert combos[0].ratio == pytest.approx(0.01)
        assert combos[0].descriptor_names() == ("o_universe", "p_universe")
        assert combos[1].ratio == pytest.approx(0.0001)
        assert combos[1].descriptor_names() == ("o_uniform", "p_stratified")

    def test_k1_single_survivor(self):
        samples = {
            "orders": [
                desc("orders", "o_u", UNIFORM, 0.01),
                desc("orders", "o_h", HASHED, 0.01, ("order_id",)),
            ],
            "order_products": [
                desc("order_products", "p_h", HASHED, 0.01, ("order_id",)),
            ],
        }
        planner = self._planner(samples)
        ast = parse(
            "select count(*) from orders o inner join order_products p "
            "on o.order_id = p.order_id"
        )
        tree = join_tree_of(ast)
        combos = planner._combos_for_task(tree, planner.tasks_for(ast)[0], k=1)
        assert len(combos) == 1

    def test_empty_catalog_single_base_plan(self):
        planner = self._planner({})
        ast = parse("select count(*) from orders")
        best, candidates = planner.plan(ast)
        assert len(candidates) == 1
        assert best is None  # base plan exceeds any budget below 1.0


class TestScoreAndSelect:
    def test_sqrt_ratio_ordering(self):
        db = make_db({"orders": 1_000_000})
        samples = {
            "orders": [
                desc("orders", "big", UNIFORM, 0.01),
                desc("orders", "small", UNIFORM, 0.0001),
            ]
        }
        planner = SamplePlanner(db, FakeCatalog(samples), PolicyConfig())
        best, candidates = planner.plan(parse("select count(*) from orders"))
        assert best.combos[0].descriptor_names() == ("big",)
        scores = sorted(p.score for p in candidates)
        assert scores[1] / scores[0] == pytest.approx(10.0)

    def test_stratified_advantage_beats_equal_uniform(self):
        db = make_db({"orders": 1_000_000})
        samples = {
            "orders": [
                desc("orders", "u", UNIFORM, 0.01),
                desc("orders", "s", STRATIFIED, 0.01, ("city",)),
            ]
        }
        planner = SamplePlanner(db, FakeCatalog(samples), PolicyConfig())
        best, _ = planner.plan(parse("select city, count(*) from orders group by city"))
        assert best.combos[0].descriptor_names() == ("s",)
        # without grouping there is no advantage: tie broken deterministically
        best2, _ = planner.plan(parse("select count(*) from orders"))
        assert best2.combos[0].descriptor_names() == ("s",)

    def test_infeasible_falls_back(self):
        db = make_db({"orders": 1_000_000})
        samples = {"orders": [desc("orders", "u", UNIFORM, 0.5)]}  # way over 2%
        planner = SamplePlanner(db, FakeCatalog(samples), PolicyConfig())
        best, candidates = planner.plan(parse("select count(*) from orders"))
        assert best is None
        assert all(not p.feasible for p in candidates)

    def test_io_cost_double_counts_shared_samples(self):
        db = make_db({"orders": 1_000_000, "order_products": 1_000_000})
        u_o = desc("orders", "o_u", UNIFORM, 0.01)
        s_p = desc("order_products", "p_s", STRATIFIED, 0.01, ("city",))
        h_o = desc("orders", "o_h", HASHED, 0.01, ("order_id",))
        planner = SamplePlanner(db, FakeCatalog({}), PolicyConfig())
        combos = (
            Combo((("o", u_o), ("p", s_p)), 0.0001),
            Combo((("o", u_o), ("p", s_p)), 0.0001),
            Combo((("o", h_o), ("p", s_p)), 0.0001),
        )
        ast = parse(
            "select count(*), avg(price), count(distinct order_id) from orders o "
            "inner join order_products p on o.order_id = p.order_id"
        )
        plans = planner._cross_plans([[combos[0]], [combos[1]], [combos[2]]], ast, {})
        # group 1: o_u + p_s; group 2: o_h + p_s (p_s counted twice)
        assert plans[0].io_cost == u_o.built_size + 2 * s_p.built_size + h_o.built_size

    def test_pruned_matches_exhaustive(self):
        # oracle equivalence on joins up to 3 tables, 3 samples per table
        db = make_db({"t1": 1_000_000, "t2": 1_000_000, "t3": 1_000_000})
        def mk(t):
            return [
                desc(t, f"{t}_u", UNIFORM, 0.01),
                desc(t, f"{t}_h", HASHED, 0.008, ("order_id",)),
                desc(t, f"{t}_s", STRATIFIED, 0.012, ("city",)),
            ]
        samples = {t: mk(t) for t in ("t1", "t2", "t3")}
        planner = SamplePlanner(db, FakeCatalog(samples), PolicyConfig())
        queries = [
            "select count(*) from t1",
            "select count(*), avg(price) from t1 a inner join t2 b on a.order_id = b.order_id",
            "select city, count(*) from t1 a inner join t2 b on a.order_id = b.order_id "
            "inner join t3 c on b.product = c.product group by city",
            "select sum(price), count(distinct order_id) from t1 a inner join t2 b "
            "on a.order_id = b.order_id",
        ]
        for sql in queries:
            ast = parse(sql)
            pruned, _ = planner.plan(ast, k=10)
            exhaustive, _ = planner.plan(ast, k=10**9)
            assert pruned is not None and exhaustive is not None
            assert pruned.score == pytest.approx(exhaustive.score), sql


class TestDerivedSampleType:
    def test_hashed_on_grouping_gives_uniform_same_tau(self):
        assert derive_sample_type(HASHED, ("city",), 0.01, ("city",)) == (UNIFORM, 0.01)

    def test_stratified_on_grouping_gives_full(self):
        assert derive_sample_type(STRATIFIED, ("city",), 0.01, ("city",)) == (UNIFORM, 1.0)

    def test_uniform_inner_gives_irregular(self):
        assert derive_sample_type(UNIFORM, (), 0.01, ("city",))[0] == IRREGULAR

    def test_mismatched_columns_irregular(self):
        assert derive_sample_type(HASHED, ("other",), 0.01, ("city",))[0] == IRREGULAR
