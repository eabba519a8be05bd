"""Approximate query processing middleware over a bundled relational executor.

The package rewrites aggregate SQL into a single-scan subsampled form that
returns unbiased estimates with confidence intervals, plans which prepared
sample tables to use within an I/O budget, and builds those samples with
plain relational operations.

Typical library use::

    from aqp import Database, Engine, SampleCatalog, build_uniform

    db = Database()
    db.register("orders", relation)
    catalog = SampleCatalog(db)
    build_uniform(db, catalog, "orders", tau=0.01, seed=1)
    engine = Engine(db, catalog)
    result = engine.query("select count(*) as c from orders", show_errors=True)
"""

__version__ = "0.1.0"

from .engine import Engine, QueryResult
from .relational import Database, Relation, Schema, load_csv
from .samples import (
    PolicyConfig,
    SampleCatalog,
    build_hashed,
    build_stratified,
    build_uniform,
)

__all__ = [
    "Database",
    "Engine",
    "PolicyConfig",
    "QueryResult",
    "Relation",
    "SampleCatalog",
    "Schema",
    "__version__",
    "build_hashed",
    "build_stratified",
    "build_uniform",
    "load_csv",
]
