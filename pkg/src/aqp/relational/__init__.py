"""Hermetic in-memory relational executor and data ingestion."""

from .executor import (
    Database,
    aggregate_relation,
    exact_percentile,
    join_relations,
    weighted_percentile,
)
from .io import load_catalog, load_csv, parse_schema_spec, save_catalog
from .plan import AggSpec, Aggregate, EquiJoin, Filter, Limit, PlanNode, Project, Scan, Union, count_scans
from .schema import BOOL, FLOAT64, INT64, TEXT, Column, Relation, Schema
from . import expr

__all__ = [
    "AggSpec",
    "Aggregate",
    "BOOL",
    "Column",
    "Database",
    "EquiJoin",
    "FLOAT64",
    "Filter",
    "INT64",
    "Limit",
    "PlanNode",
    "Project",
    "Relation",
    "Scan",
    "Schema",
    "TEXT",
    "Union",
    "aggregate_relation",
    "count_scans",
    "exact_percentile",
    "expr",
    "join_relations",
    "load_catalog",
    "load_csv",
    "parse_schema_spec",
    "save_catalog",
    "weighted_percentile",
]
