"""Executor, ingestion, and persistence tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqp.errors import ArityError, DivideByZero, DuplicateTable, ParseError, UnknownTable
from aqp.relational import (
    AggSpec,
    Aggregate,
    Database,
    EquiJoin,
    FLOAT64,
    Filter,
    INT64,
    Limit,
    Project,
    Relation,
    Scan,
    Schema,
    TEXT,
    Union,
    load_catalog,
    load_csv,
    save_catalog,
)
from aqp.relational.expr import Cmp, Col, Hash01, Lit, Rand, window_count


@pytest.fixture
def db():
    d = Database()
    schema = Schema([("k", INT64), ("x", FLOAT64)])
    d.register(
        "t",
        Relation.from_rows(schema, [(1, 2.0), (2, 3.0), (2, 4.0), (3, 1.0), (3, 6.0)]),
    )
    return d


def test_load_csv_basic(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    rel = load_csv(p, Schema([("a", INT64), ("b", INT64)]))
    assert rel.row_count == 2
    assert list(rel.rows()) == [(1, 2), (3, 4)]


def test_load_csv_empty_data(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n")
    rel = load_csv(p, Schema([("a", INT64), ("b", TEXT)]))
    assert rel.row_count == 0
    assert rel.schema.names == ["a", "b"]


def test_load_csv_parse_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a\n1\nx\n")
    with pytest.raises(ParseError) as e:
        load_csv(p, Schema([("a", INT64)]))
    assert e.value.line == 3


def test_load_csv_arity_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2,3\n")
    with pytest.raises(ArityError):
        load_csv(p, Schema([("a", INT64), ("b", INT64)]))


def test_load_csv_quoting(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text('s\n"a,\nb"\n"say ""hi"""\n')
    rel = load_csv(p, Schema([("s", TEXT)]))
    assert list(rel.rows()) == [("a,\nb",), ('say "hi"',)]


def test_count_over_five_rows(db):
    out = db.execute(Aggregate(Scan("t"), (), (AggSpec("c", "count_star"),)), seed=0)
    assert list(out.rows()) == [(5,)]


def test_equijoin_single_match():
    db = Database()
    s = Schema([("k", INT64)])
    db.register("a", Relation.from_rows(s, [(1,), (2,)]))
    db.register("b", Relation.from_rows(s, [(2,), (3,)]))
    out = db.execute(EquiJoin(Scan("a"), Scan("b"), ("k",), ("k",)), seed=0)
    assert out.row_count == 1
    assert list(out.rows()) == [(2, 2)]


def test_filter_rand_fraction():
    # law of large numbers at n=1e6: observed fraction within 0.1 +/- 0.001
    db = Database()
    db.register(
        "big", Relation.from_columns(Schema([("v", INT64)]), [np.arange(1_000_000)])
    )
    out = db.execute(Filter(Scan("big"), Cmp("<", Rand(), Lit(0.1))), seed=7)
    assert abs(out.row_count / 1_000_000 - 0.1) < 0.001


def test_execute_deterministic(db):
    plan = Filter(Scan("t"), Cmp("<", Rand(), Lit(0.5)))
    a = db.execute(plan, seed=3)
    b = db.execute(plan, seed=3)
    assert list(a.rows()) == list(b.rows())


def test_create_table_as_binomial():
    db = Database()
    db.register(
        "src", Relation.from_columns(Schema([("v", INT64)]), [np.arange(10_000)])
    )
    db.create_table_as("samp", Filter(Scan("src"), Cmp("<", Rand(), Lit(0.01))), seed=5)
    n = db.get("samp").row_count
    # binomial(10000, 0.01): mean 100, 3 sigma ~ 29.8
    assert 100 - 30 <= n <= 100 + 30


def test_create_table_as_empty_and_duplicate(db):
    db.register("empty_src", Relation.empty(Schema([("z", INT64)])))
    db.create_table_as("e2", Scan("empty_src"), seed=0)
    assert db.get("e2").row_count == 0
    with pytest.raises(DuplicateTable):
        db.create_table_as("e2", Scan("empty_src"), seed=0)


def test_unknown_table(db):
    with pytest.raises(UnknownTable):
        db.execute(Scan("nope"), seed=0)


def test_divide_by_zero(db):
    from aqp.relational.expr import Arith

    plan = Project(Scan("t"), (("z", Arith("/", Col("x"), Lit(0))),))
    with pytest.raises(DivideByZero):
        db.execute(plan, seed=0)


def test_union_and_project_preserve_counts(db):
    t = db.get("t")
    u = db.execute(Union((Scan("t"), Scan("t"))), seed=0)
    assert u.row_count == 2 * t.row_count
    p = db.execute(Project.star(Scan("t"), ["x"]), seed=0)
    assert p.row_count == t.row_count


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(min_value=-5, max_value=5), min_size=0, max_size=40))
def test_union_counts_property(values):
    db = Database()
    rel = Relation.from_columns(Schema([("v", INT64)]), [np.array(values, dtype=np.int64)])
    db.register("p", rel)
    out = db.execute(Union((Scan("p"), Scan("p"))), seed=0)
    assert out.row_count == 2 * len(values)


def test_hash01_deterministic_across_sessions(db):
    plan = Project(Scan("t"), (("h", Hash01(("k",))),))
    a = Database()
    a.register("t", db.get("t"))
    h1 = db.execute(plan, seed=1).column("h")
    h2 = a.execute(plan, seed=12345).column("h")
    assert np.array_equal(h1, h2)
    assert ((h1 >= 0) & (h1 < 1)).all()


def test_window_count_matches_group_by():
    rng = np.random.default_rng(0)
    n = 5_000
    keys = rng.integers(0, 37, n)
    db = Database()
    db.register("w", Relation.from_columns(Schema([("k", INT64)]), [keys]))
    win = db.execute(
        Project(Scan("w"), (("k", Col("k")), ("wc", window_count(("k",))))), seed=0
    )
    grp = db.execute(Aggregate(Scan("w"), ("k",), (AggSpec("c", "count_star"),)), seed=0)
    counts = dict(grp.rows())
    for k, wc in win.rows():
        assert wc == counts[k]


def test_rand_call_sites_independent(db):
    # two rand() call sites in one plan draw independent values
    plan = Project(Scan("t"), (("r1", Rand()), ("r2", Rand())))
    out = db.execute(plan, seed=11)
    assert not np.array_equal(out.column("r1"), out.column("r2"))


def test_quantile_lower_tie_break():
    db = Database()
    db.register(
        "q",
        Relation.from_columns(
            Schema([("x", FLOAT64)]), [np.array([1.0, 2.0, 3.0, 4.0])]
        ),
    )
    out = db.execute(
        Aggregate(Scan("q"), (), (AggSpec("m", "quantile", "x", param=0.5),)), seed=0
    )
    # 0.5 * 4 lands exactly on a boundary: take the lower value
    assert list(out.rows()) == [(2.0,)]


def test_limit(db):
    out = db.execute(Limit(Scan("t"), 2), seed=0)
    assert out.row_count == 2


def test_aggregate_var_stddev(db):
    out = db.execute(
        Aggregate(Scan("t"), (), (AggSpec("v", "var", "x"), AggSpec("s", "stddev", "x"))),
        seed=0,
    )
    x = np.array([2.0, 3.0, 4.0, 1.0, 6.0])
    v, s = list(out.rows())[0]
    assert v == pytest.approx(x.var(ddof=1))
    assert s == pytest.approx(x.std(ddof=1))


def test_count_distinct():
    db = Database()
    db.register(
        "cd",
        Relation.from_rows(
            Schema([("g", INT64), ("v", TEXT)]),
            [(1, "a"), (1, "a"), (1, "b"), (2, "c"), (2, None)],
        ),
    )
    out = db.execute(
        Aggregate(Scan("cd"), ("g",), (AggSpec("d", "count_distinct", "v"),)), seed=0
    )
    assert dict(out.rows()) == {1: 2, 2: 1}


def test_join_on_null_key_matches():
    # group keys containing null must join back to their source rows
    db = Database()
    left = Relation.from_rows(Schema([("g", TEXT), ("x", INT64)]), [(None, 1), ("a", 2)])
    right = Relation.from_rows(Schema([("g", TEXT), ("n", INT64)]), [(None, 10), ("a", 20)])
    db.register("l", left)
    db.register("r", right)
    out = db.execute(EquiJoin(Scan("l"), Scan("r"), ("g",), ("g",)), seed=0)
    assert out.row_count == 2


def test_catalog_round_trip(tmp_path, db):
    db.register(
        "txt",
        Relation.from_rows(Schema([("s", TEXT), ("f", FLOAT64)]), [("x", 1.5), (None, float("nan"))]),
    )
    save_catalog(db, tmp_path)
    loaded = load_catalog(tmp_path)
    assert loaded.table_names() == db.table_names()
    for name in db.table_names():
        a, b = db.get(name), loaded.get(name)
        assert a.schema == b.schema
        for i in range(len(a.schema)):
            av, bv = a.column_at(i), b.column_at(i)
            if a.schema.columns[i].kind == FLOAT64:
                assert np.array_equal(av, bv, equal_nan=True)
            else:
                assert list(av) == list(bv)
