"""Sample construction with plain relational plans.

Stratified samples use a two-pass construction: pass one materializes the
per-stratum sizes, pass two joins them back and filters each tuple against
a per-stratum probability that is the larger of a budget share and the
staircase ratio guaranteeing the per-stratum minimum. The random draw is
materialized into a column before any comparison so that one tuple sees
one draw, never two.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import InvariantViolation, SchemaMismatch
from ..relational import AggSpec, Aggregate, Database, EquiJoin, Filter, Project, Relation, Scan
from ..relational.expr import CaseWhen, Cmp, Col, Lit, Rand
from .catalog import SampleCatalog
from .descriptors import (
    HASHED,
    PROB_COLUMN,
    STRATIFIED,
    UNIFORM,
    PolicyConfig,
    SampleDescriptor,
)
from .ratios import StaircaseTable, staircase_thresholds
from ..relational.expr import Hash01

SIZE_COLUMN = "strata_size"


def _sample_name(table: str, kind: str, columns: Sequence[str]) -> str:
    suffix = "_".join(columns)
    return f"{table}__{kind}" + (f"_{suffix}" if suffix else "")


def _star(names):
    return tuple((n, Col(n)) for n in names)


def build_uniform(
    db: Database,
    catalog: SampleCatalog,
    table: str,
    tau: float,
    seed: int,
    name: Optional[str] = None,
) -> SampleDescriptor:
    if not 0.0 < tau <= 1.0:
        raise InvariantViolation(f"tau must be in (0,1], got {tau}")
    source = db.get(table)
    name = name or _sample_name(table, UNIFORM, ())
    plan = Project(
        Filter(Scan(table), Cmp("<", Rand(), Lit(tau))),
        _star(source.schema.names) + ((PROB_COLUMN, Lit(tau)),),
    )
    db.drop(name)
    db.create_table_as(name, plan, seed)
    built = db.get(name).row_count
    desc = SampleDescriptor(
        source_table=table,
        sample_table=name,
        kind=UNIFORM,
        tau=tau,
        built_size=built,
        source_size=source.row_count,
    )
    catalog.register_sample(desc)
    return desc


def build_hashed(
    db: Database,
    catalog: SampleCatalog,
    table: str,
    tau: float,
    columns: Sequence[str],
    seed: int,
    name: Optional[str] = None,
) -> SampleDescriptor:
    if not columns:
        raise InvariantViolation("hashed sample requires a non-empty column set")
    if not 0.0 < tau <= 1.0:
        raise InvariantViolation(f"tau must be in (0,1], got {tau}")
    source = db.get(table)
    for c in columns:
        source.schema.index_of(c)
    name = name or _sample_name(table, HASHED, columns)
    filtered = db.execute(
        Filter(Scan(table), Cmp("<", Hash01(tuple(columns)), Lit(tau))), seed
    )
    built = filtered.row_count
    # probabilities record the realized inclusion ratio of the whole table
    ratio = built / source.row_count if source.row_count else tau
    ratio = min(max(ratio, np.nextafter(0, 1)), 1.0)
    db.drop(name)
    db.register(name, filtered.with_column(PROB_COLUMN, "float64", np.full(built, ratio)))
    desc = SampleDescriptor(
        source_table=table,
        sample_table=name,
        kind=HASHED,
        tau=tau,
        columns=tuple(columns),
        built_size=built,
        source_size=source.row_count,
    )
    catalog.register_sample(desc)
    return desc


def group_sizes(db: Database, table: str, columns: Sequence[str], seed: int) -> Relation:
    """Pass one of the stratified build: one row per stratum with its size."""
    return db.execute(
        Aggregate(Scan(table), tuple(columns), (AggSpec(SIZE_COLUMN, "count_star"),)),
        seed,
    )


def _budget_or_staircase_prob(
    source_size: int, tau: float, strata_count: int, staircase: StaircaseTable
):
    """Per-stratum probability: max(budget share capped at 1, staircase)."""
    size = Col(SIZE_COLUMN)
    share = Lit(float(source_size) * tau / max(strata_count, 1))
    budget_expr = CaseWhen(
        ((Cmp(">=", share, size), Lit(1.0)),),
        # share / size, as a float expression
        _div(share, size),
    )
    stair_expr = staircase.to_case_expr(size)
    return CaseWhen(((Cmp(">", budget_expr, stair_expr), budget_expr),), stair_expr)


def _div(a, b):
    from ..relational.expr import Arith

    return Arith("/", a, b)


def build_stratified(
    db: Database,
    catalog: SampleCatalog,
    table: str,
    tau: float,
    columns: Sequence[str],
    seed: int,
    m: int = PolicyConfig().min_per_stratum,
    delta: float = PolicyConfig().delta,
    name: Optional[str] = None,
) -> SampleDescriptor:
    if not columns:
        raise InvariantViolation("stratified sample requires a non-empty column set")
    source = db.get(table)
    name = name or _sample_name(table, STRATIFIED, columns)
    columns = tuple(columns)

    sizes = group_sizes(db, table, columns, seed)
    if sizes.row_count == 0:
        db.drop(name)
        db.register(
            name,
            Relation.empty(source.schema).with_column(PROB_COLUMN, "float64", np.empty(0)),
        )
        desc = SampleDescriptor(
            source_table=table, sample_table=name, kind=STRATIFIED, tau=tau,
            columns=columns, built_size=0, source_size=0,
        )
        catalog.register_sample(desc)
        return desc

    staircase = staircase_thresholds(m, delta, int(sizes.column(SIZE_COLUMN).max()))
    prob_expr = _budget_or_staircase_prob(
        source.row_count, tau, sizes.row_count, staircase
    )
    db.drop("__strata_sizes")
    db.register("__strata_sizes", sizes)
    size_cols = [f"__c{i}" for i in range(len(columns))]
    prob_table = Project(
        Scan("__strata_sizes"),
        tuple(zip(size_cols, (Col(c) for c in columns))) + (("__prob", prob_expr),),
    )
    # materialize the draw before comparing: one rand per tuple
    drawn = Project(
        EquiJoin(Scan(table), prob_table, columns, tuple(size_cols)),
        _star(source.schema.names) + (("__prob", Col("__prob")), ("__r", Rand())),
    )
    sampled = db.execute(Filter(drawn, Cmp("<", Col("__r"), Col("__prob"))), seed)
    db.drop("__strata_sizes")

    # probabilities record the realized per-stratum ratio, which is exact
    db.drop("__strat_sampled")
    db.register("__strat_sampled", sampled)
    realized_counts = db.execute(
        Aggregate(Scan("__strat_sampled"), columns, (AggSpec("__cnt", "count_star"),)),
        seed,
    )
    db.drop("__strat_sampled")
    by_key = {}
    total_by_key = {}
    key_cols = [realized_counts.column(c) for c in columns]
    for i, cnt in enumerate(realized_counts.column("__cnt").tolist()):
        by_key[tuple(c[i] for c in key_cols)] = cnt
    src_key_cols = [sizes.column(c) for c in columns]
    for i, total in enumerate(sizes.column(SIZE_COLUMN).tolist()):
        total_by_key[tuple(c[i] for c in src_key_cols)] = total
    samp_key_cols = [sampled.column(c) for c in columns]
    probs = np.empty(sampled.row_count, dtype=np.float64)
    for i in range(sampled.row_count):
        key = tuple(c[i] for c in samp_key_cols)
        probs[i] = by_key[key] / total_by_key[key]
    final = sampled.select(source.schema.names).with_column(PROB_COLUMN, "float64", probs)
    db.drop(name)
    db.register(name, final)
    desc = SampleDescriptor(
        source_table=table,
        sample_table=name,
        kind=STRATIFIED,
        tau=tau,
        columns=columns,
        built_size=final.row_count,
        source_size=source.row_count,
    )
    catalog.register_sample(desc)
    return desc


def build_from_request(db, catalog, table, request, seed, m=None, delta=None):
    cfg = PolicyConfig()
    if request.kind == UNIFORM:
        return build_uniform(db, catalog, table, request.tau, seed)
    if request.kind == HASHED:
        return build_hashed(db, catalog, table, request.tau, request.columns, seed)
    if request.kind == STRATIFIED:
        return build_stratified(
            db, catalog, table, request.tau, request.columns, seed,
            m=m or cfg.min_per_stratum, delta=delta or cfg.delta,
        )
    raise InvariantViolation(f"cannot build sample kind {request.kind!r}")


def append_to_samples(
    db: Database,
    catalog: SampleCatalog,
    table: str,
    new_rows: Relation,
    seed: int,
    m: int = PolicyConfig().min_per_stratum,
    delta: float = PolicyConfig().delta,
) -> list[SampleDescriptor]:
    """Append rows to a source table and keep its samples consistent.

    Uniform and hashed samples extend by applying the same tau (and hash)
    to the new rows. Stratified samples reuse the stored per-stratum
    ratios; strata first seen in the appended batch get fresh staircase
    ratios.
    """
    source = db.get(table)
    if new_rows.schema.kinds != source.schema.kinds:
        raise SchemaMismatch("appended rows do not match the source schema")
    descriptors = catalog.descriptors_for(table)
    db.append(table, new_rows)
    new_total = db.get(table).row_count

    db.drop("__append_batch")
    db.register(
        "__append_batch",
        Relation(source.schema, [new_rows.column_at(i) for i in range(len(source.schema))]),
    )
    updated = []
    try:
        for desc in descriptors:
            if desc.kind == UNIFORM:
                extra = db.execute(
                    Project(
                        Filter(Scan("__append_batch"), Cmp("<", Rand(), Lit(desc.tau))),
                        _star(source.schema.names) + ((PROB_COLUMN, Lit(desc.tau)),),
                    ),
                    seed,
                )
                db.append(desc.sample_table, extra)
            elif desc.kind == HASHED:
                extra = db.execute(
                    Filter(
                        Scan("__append_batch"),
                        Cmp("<", Hash01(desc.columns), Lit(desc.tau)),
                    ),
                    seed,
                )
                sample = db.get(desc.sample_table)
                merged = sample.select(source.schema.names).concat(extra)
                ratio = merged.row_count / new_total if new_total else desc.tau
                ratio = min(max(ratio, np.nextafter(0, 1)), 1.0)
                db.register(
                    desc.sample_table,
                    merged.with_column(PROB_COLUMN, "float64", np.full(merged.row_count, ratio)),
                    replace=True,
                )
            elif desc.kind == STRATIFIED:
                extra = _append_stratified(db, desc, new_rows, seed, m, delta)
                db.append(desc.sample_table, extra)
            new_desc = desc.with_sizes(
                built=db.get(desc.sample_table).row_count, source=new_total
            )
            catalog.register_sample(new_desc)
            updated.append(new_desc)
    finally:
        db.drop("__append_batch")
    return updated


def _append_stratified(db, desc, new_rows, seed, m, delta) -> Relation:
    sample = db.get(desc.sample_table)
    columns = list(desc.columns)
    # stored per-stratum ratios, extracted from the existing sample
    stored: dict[tuple, float] = {}
    key_cols = [sample.column(c) for c in columns]
    probs = sample.column(desc.prob_column)
    for i in range(sample.row_count):
        stored.setdefault(tuple(c[i] for c in key_cols), float(probs[i]))

    db.drop("__append_strat")
    db.register("__append_strat", new_rows)
    batch_sizes = group_sizes(db, "__append_strat", columns, seed)
    db.drop("__append_strat")
    staircase = None
    ratios = np.empty(new_rows.row_count, dtype=np.float64)
    batch_keys = [batch_sizes.column(c) for c in columns]
    ratio_by_key = {}
    for i, size in enumerate(batch_sizes.column(SIZE_COLUMN).tolist()):
        key = tuple(c[i] for c in batch_keys)
        if key in stored:
            ratio_by_key[key] = stored[key]
        else:
            if staircase is None:
                staircase = staircase_thresholds(
                    m, delta, int(batch_sizes.column(SIZE_COLUMN).max())
                )
            ratio_by_key[key] = staircase.lookup(size)
    row_keys = [new_rows.column(c) for c in columns]
    for i in range(new_rows.row_count):
        ratios[i] = ratio_by_key[tuple(c[i] for c in row_keys)]
    rng = np.random.default_rng(np.random.PCG64(seed))
    keep = rng.random(new_rows.row_count) < ratios
    kept = new_rows.take(keep)
    return kept.with_column(PROB_COLUMN, "float64", ratios[keep])
