"""Sample metadata and the engine-wide policy knobs."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from ..errors import InvariantViolation

UNIFORM = "uniform"
HASHED = "hashed"
STRATIFIED = "stratified"
IRREGULAR = "irregular"

KINDS = (UNIFORM, HASHED, STRATIFIED, IRREGULAR)

PROB_COLUMN = "sampling_prob"


@dataclass(frozen=True)
class SampleDescriptor:
    """Metadata of one prepared sample table."""

    source_table: str
    sample_table: str
    kind: str
    tau: float
    columns: tuple[str, ...] = ()
    prob_column: str = PROB_COLUMN
    built_size: int = 0
    source_size: int = 0
    created_at: float = field(default_factory=time.time)

    def validate(self):
        if self.kind not in KINDS:
            raise InvariantViolation(f"unknown sample kind {self.kind!r}")
        if not 0.0 < self.tau <= 1.0:
            raise InvariantViolation(f"tau must be in (0,1], got {self.tau}")
        if self.kind in (HASHED, STRATIFIED) and not self.columns:
            raise InvariantViolation(f"{self.kind} sample requires a column set")
        if self.built_size < 0 or self.source_size < 0:
            raise InvariantViolation("sizes must be nonnegative")

    @property
    def key(self) -> tuple:
        return (self.source_table, self.kind, self.columns)

    @property
    def effective_ratio(self) -> float:
        """Overall inclusion ratio used for plan scoring."""
        if self.source_size:
            return self.built_size / self.source_size
        return self.tau

    def with_sizes(self, built: int, source: int) -> "SampleDescriptor":
        return replace(self, built_size=built, source_size=source)

    def to_json(self) -> dict:
        return {
            "source_table": self.source_table,
            "sample_table": self.sample_table,
            "kind": self.kind,
            "tau": self.tau,
            "columns": list(self.columns),
            "prob_column": self.prob_column,
            "built_size": self.built_size,
            "source_size": self.source_size,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SampleDescriptor":
        return cls(
            source_table=doc["source_table"],
            sample_table=doc["sample_table"],
            kind=doc["kind"],
            tau=doc["tau"],
            columns=tuple(doc["columns"]),
            prob_column=doc["prob_column"],
            built_size=doc["built_size"],
            source_size=doc["source_size"],
            created_at=doc["created_at"],
        )


@dataclass(frozen=True)
class PolicyConfig:
    """Defaults for sample preparation, planning, and error estimation."""

    target_rows: int = 10_000_000
    io_budget: float = 0.02
    min_per_stratum: int = 10
    delta: float = 0.001
    subsample_exponent: float = 0.5  # fixed: n_s grows as n**(1/2)
    planner_k: int = 10
    advantage_factor: float = 10.0
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.io_budget <= 1.0:
            raise InvariantViolation("io_budget must be in (0,1]")
        if not 0.0 < self.delta < 1.0:
            raise InvariantViolation("delta must be in (0,1)")
        if self.min_per_stratum < 1:
            raise InvariantViolation("min_per_stratum must be >= 1")
