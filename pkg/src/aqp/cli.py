"""Command-line interface: data loading, sample management, queries, shell.

Configuration precedence: command-line flags beat AQP_-prefixed
environment variables, which beat the flat key=value config file, which
beats defaults. Exit codes: 0 success, 1 query error, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bench import estimators_compare, run_bench
from .engine import Engine, QueryResult
from .errors import AqpError, ConfigError
from .relational import Database, load_catalog, load_csv, parse_schema_spec, save_catalog
from .samples import (
    PolicyConfig,
    SampleCatalog,
    build_from_request,
    build_hashed,
    build_stratified,
    build_uniform,
)

ENV_PREFIX = "AQP_"


@dataclass
class CliConfig:
    data_dir: str = "./aqp_data"
    seed: int = 0
    alpha: float = 0.05
    budget: float = 0.02
    show_errors: bool = False
    max_rel_err: Optional[float] = None

    @property
    def policy(self) -> PolicyConfig:
        return PolicyConfig(io_budget=self.budget, alpha=self.alpha)


_BOOLS = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _coerce(key: str, value: str):
    try:
        if key in ("seed",):
            return int(value)
        if key in ("alpha", "budget", "max_rel_err"):
            return float(value)
        if key in ("show_errors",):
            return _BOOLS[value.strip().lower()]
        return value
    except (KeyError, ValueError):
        raise ConfigError(f"bad value {value!r} for {key}") from None


def load_config(config_file: Optional[str], flag_values: dict) -> CliConfig:
    cfg = CliConfig()
    fields = ("data_dir", "seed", "alpha", "budget", "show_errors", "max_rel_err")
    if config_file:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigError(f"config file {config_file!r} not found")
        for line_no, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().lower().replace("-", "_")
            if not sep or key not in fields:
                raise ConfigError(f"config line {line_no}: cannot parse {line!r}")
            cfg = replace(cfg, **{key: _coerce(key, value.strip())})
    for key in fields:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            cfg = replace(cfg, **{key: _coerce(key, env)})
    for key, value in flag_values.items():
        if value is not None:
            cfg = replace(cfg, **{key: value})
    return cfg


# --- persistence helpers -------------------------------------------------------


def open_state(cfg: CliConfig) -> tuple[Database, SampleCatalog]:
    directory = Path(cfg.data_dir)
    if (directory / "manifest.json").is_file():
        db = load_catalog(directory)
    else:
        db = Database()
    catalog = SampleCatalog(db, directory)
    return db, catalog


def save_state(cfg: CliConfig, db: Database):
    save_catalog(db, Path(cfg.data_dir))


# --- output formatting ------------------------------------------------------------


def format_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def render_table(columns: list[str], rows: list[tuple]) -> str:
    cells = [[format_value(v) for v in row] for row in rows]
    widths = [len(c) for c in columns]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    header = "  ".join(c.ljust(widths[i]) for i, c in enumerate(columns))
    rule = "  ".join("-" * w for w in widths)
    body = [
        "  ".join(cell.rjust(widths[i]) for i, cell in enumerate(row)) for row in cells
    ]
    return "\n".join([header, rule] + body)


def print_result(result: QueryResult, out=None):
    out = out if out is not None else sys.stdout
    for notice in result.notices:
        print(f"-- {notice}", file=out)
    print(render_table(result.columns, result.rows), file=out)
    print(f"({len(result.rows)} rows, {'approximate' if result.approximate else 'exact'})", file=out)


# --- subcommands ----------------------------------------------------------------


def cmd_load(args, cfg: CliConfig) -> int:
    db, catalog = open_state(cfg)
    schema = parse_schema_spec(args.schema)
    rel = load_csv(args.csv, schema, delimiter=args.delimiter, header=not args.no_header)
    db.register(args.table, rel, replace=args.replace)
    save_state(cfg, db)
    print(f"loaded {rel.row_count} rows into {args.table}")
    return 0


def cmd_sample(args, cfg: CliConfig) -> int:
    db, catalog = open_state(cfg)
    if args.sample_cmd == "list":
        descs = catalog.all_descriptors()
        if args.table:
            descs = [d for d in descs if d.source_table == args.table]
        rows = [
            (
                d.source_table,
                d.sample_table,
                d.kind,
                d.tau,
                ",".join(d.columns) or "-",
                d.built_size,
                d.source_size,
                "stale" if catalog.detect_stale(d.source_table) else "fresh",
            )
            for d in descs
        ]
        print(
            render_table(
                ["source", "sample", "kind", "tau", "columns", "rows", "source_rows", "state"],
                rows,
            )
        )
        return 0
    if args.sample_cmd == "create":
        columns = args.columns.split(",") if args.columns else []
        if args.kind == "uniform":
            d = build_uniform(db, catalog, args.table, args.tau, args.seed_value)
        elif args.kind == "hashed":
            d = build_hashed(db, catalog, args.table, args.tau, columns, args.seed_value)
        elif args.kind == "stratified":
            d = build_stratified(
                db, catalog, args.table, args.tau, columns, args.seed_value,
                m=args.m, delta=args.delta,
            )
        else:  # default policy over the table
            for req in catalog.default_sample_plan_for_table(args.table, cfg.policy):
                build_from_request(db, catalog, args.table, req, args.seed_value)
            save_state(cfg, db)
            print("built default samples")
            return 0
        save_state(cfg, db)
        print(f"built {d.sample_table}: {d.built_size} rows at tau={d.tau}")
        return 0
    if args.sample_cmd == "refresh":
        tables = [args.table] if args.table else sorted(
            {d.source_table for d in catalog.all_descriptors()}
        )
        for table in tables:
            if not catalog.detect_stale(table):
                continue
            for d in catalog.descriptors_for(table):
                if d.kind == "uniform":
                    build_uniform(db, catalog, table, d.tau, args.seed_value, name=d.sample_table)
                elif d.kind == "hashed":
                    build_hashed(db, catalog, table, d.tau, d.columns, args.seed_value, name=d.sample_table)
                elif d.kind == "stratified":
                    build_stratified(db, catalog, table, d.tau, d.columns, args.seed_value, name=d.sample_table)
                print(f"refreshed {d.sample_table}")
        save_state(cfg, db)
        return 0
    raise ConfigError(f"unknown sample command {args.sample_cmd!r}")


def cmd_query(args, cfg: CliConfig) -> int:
    db, catalog = open_state(cfg)
    engine = Engine(db, catalog, cfg.policy)
    result = engine.query(
        args.sql,
        seed=cfg.seed,
        alpha=cfg.alpha,
        show_errors=cfg.show_errors,
        max_rel_err=cfg.max_rel_err,
        exact=args.exact,
        budget=cfg.budget,
    )
    print_result(result)
    return 0


def cmd_explain(args, cfg: CliConfig) -> int:
    db, catalog = open_state(cfg)
    engine = Engine(db, catalog, cfg.policy)
    print(engine.explain(args.sql))
    return 0


def cmd_bench(args, cfg: CliConfig) -> int:
    params = {}
    if args.n is not None:
        params["n"] = args.n
    if args.trials is not None:
        params["trials"] = args.trials
    report = run_bench(args.suite, seed=cfg.seed, out=args.out, **params)
    print(report.to_text(), end="")
    if args.out:
        print(f"# report written to {args.out}")
    return 0


def cmd_estimators(args, cfg: CliConfig) -> int:
    report = estimators_compare(n=args.n, b=args.b, stat=args.stat, seed=cfg.seed)
    if args.out:
        report.write(args.out)
    print(report.to_text(), end="")
    return 0


# --- interactive shell ---------------------------------------------------------------


SHELL_HELP = """\
meta-commands:
  \\samples            list registered samples
  \\tables             list base tables
  \\explain <query>    show the sample plan for a query
  \\exact <query>      run a query exactly
  \\set <key> <value>  set budget | alpha | seed | show-errors | max-rel-err
  \\help               this message
  \\q                  quit
Statements end with ';'.
"""


def cmd_shell(args, cfg: CliConfig) -> int:
    db, catalog = open_state(cfg)
    engine = Engine(db, catalog, cfg.policy)
    print(f"aqp {__version__} interactive shell; \\help for help")
    buffer = ""
    statement_no = 0
    while True:
        try:
            prompt = "aqp> " if not buffer else "...> "
            line = input(prompt)
        except EOFError:
            print()
            return 0
        except KeyboardInterrupt:
            buffer = ""
            print()
            continue
        if not buffer and line.strip().startswith("\\"):
            code = _shell_meta(line.strip(), engine, cfg)
            if code is not None:
                return code
            engine = Engine(engine.db, engine.catalog, cfg.policy)
            continue
        buffer += line + "\n"
        if ";" not in buffer:
            continue
        statement, _, rest = buffer.partition(";")
        buffer = rest.strip() and rest or ""
        statement = statement.strip()
        if not statement:
            continue
        statement_no += 1
        try:
            result = engine.query(
                statement,
                seed=cfg.seed + statement_no,
                alpha=cfg.alpha,
                show_errors=cfg.show_errors,
                max_rel_err=cfg.max_rel_err,
                budget=cfg.budget,
            )
            print_result(result)
        except AqpError as e:
            print(f"error: {e}")


def _shell_meta(line: str, engine: Engine, cfg: CliConfig) -> Optional[int]:
    parts = line.split(None, 1)
    cmd = parts[0]
    arg = parts[1] if len(parts) > 1 else ""
    if cmd in ("\\q", "\\quit"):
        return 0
    if cmd == "\\help":
        print(SHELL_HELP, end="")
        return None
    if cmd == "\\samples":
        rows = [
            (d.sample_table, d.kind, d.tau, ",".join(d.columns) or "-", d.built_size)
            for d in engine.catalog.all_descriptors()
        ]
        print(render_table(["sample", "kind", "tau", "columns", "rows"], rows))
        return None
    if cmd == "\\tables":
        for name in engine.db.table_names():
            print(f"{name}  ({engine.db.get(name).row_count} rows)")
        return None
    if cmd == "\\explain":
        try:
            print(engine.explain(arg.rstrip(";")))
        except AqpError as e:
            print(f"error: {e}")
        return None
    if cmd == "\\exact":
        try:
            result = engine.query(arg.rstrip(";"), seed=cfg.seed, exact=True)
            print_result(result)
        except AqpError as e:
            print(f"error: {e}")
        return None
    if cmd == "\\set":
        try:
            key, value = arg.split(None, 1)
            key = key.replace("-", "_")
            if key not in ("budget", "alpha", "seed", "show_errors", "max_rel_err"):
                raise ConfigError(f"unknown setting {key!r}")
            setattr(cfg, key, _coerce(key, value))
            print(f"{key} = {getattr(cfg, key)}")
        except (ValueError, ConfigError) as e:
            print(f"error: {e}")
        return None
    print(f"unknown meta-command {cmd!r}; \\help for help")
    return None


# --- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqp",
        description="Approximate query processing over a bundled relational executor",
    )
    parser.add_argument("--data-dir", help="catalog directory (AQP_DATA_DIR)")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="session seed (AQP_SEED)")
    parser.add_argument("--alpha", type=float, help="confidence level (AQP_ALPHA)")
    parser.add_argument("--budget", type=float, help="I/O budget ratio (AQP_BUDGET)")
    parser.add_argument(
        "--show-errors", action="store_true", default=None,
        help="append error columns to answers (AQP_SHOW_ERRORS)",
    )
    parser.add_argument(
        "--max-rel-err", type=float, help="accuracy contract (AQP_MAX_REL_ERR)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="ingest a CSV file as a base table")
    p.add_argument("--table", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True, help='e.g. "id:int64,price:float64,city:text"')
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--replace", action="store_true")

    p = sub.add_parser("sample", help="create, list, or refresh samples")
    ps = p.add_subparsers(dest="sample_cmd", required=True)
    pc = ps.add_parser("create")
    pc.add_argument("--table", required=True)
    pc.add_argument("--kind", choices=["uniform", "hashed", "stratified", "default"], default="default")
    pc.add_argument("--tau", type=float, default=0.01)
    pc.add_argument("--columns", default="")
    pc.add_argument("--m", type=int, default=PolicyConfig().min_per_stratum)
    pc.add_argument("--delta", type=float, default=PolicyConfig().delta)
    pc.add_argument("--seed-value", type=int, default=0)
    pl = ps.add_parser("list")
    pl.add_argument("--table")
    pr = ps.add_parser("refresh")
    pr.add_argument("--table")
    pr.add_argument("--seed-value", type=int, default=0)

    p = sub.add_parser("query", help="run a query approximately")
    p.add_argument("sql")
    p.add_argument("--exact", action="store_true", help="bypass approximation")

    p = sub.add_parser("explain", help="show the chosen sample plan")
    p.add_argument("sql")

    sub.add_parser("shell", help="interactive SQL shell")

    p = sub.add_parser("bench", help="run a validation bench suite")
    p.add_argument("suite")
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out")

    p = sub.add_parser("estimators", help="reference estimator tools")
    pe = p.add_subparsers(dest="estimators_cmd", required=True)
    pc = pe.add_parser("compare")
    pc.add_argument("--n", type=int, required=True)
    pc.add_argument("--b", type=int, required=True)
    pc.add_argument("--stat", default="mean")
    pc.add_argument("--out")
    return parser


COMMANDS = {
    "load": cmd_load,
    "sample": cmd_sample,
    "query": cmd_query,
    "explain": cmd_explain,
    "shell": cmd_shell,
    "bench": cmd_bench,
    "estimators": cmd_estimators,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            {
                "data_dir": args.data_dir,
                "seed": args.seed,
                "alpha": args.alpha,
                "budget": args.budget,
                "show_errors": args.show_errors,
                "max_rel_err": args.max_rel_err,
            },
        )
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except AqpError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
