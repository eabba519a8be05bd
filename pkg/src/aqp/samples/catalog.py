"""The sample catalog: registration, staleness, and the default policy.

Descriptors persist as one human-readable JSON document per source table
(``samples/<table>.json`` inside the catalog directory), with a versioned
header so the format can evolve.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DuplicateSample, InvariantViolation, UnknownTable
from ..relational import Database
from ..relational.codes import factorize_column
from .descriptors import HASHED, STRATIFIED, UNIFORM, PolicyConfig, SampleDescriptor

DOC_FORMAT = "aqp-samples"
DOC_VERSION = 1


@dataclass(frozen=True)
class SampleRequest:
    """One sample the default policy asks to build."""

    kind: str
    tau: float
    columns: tuple[str, ...] = ()


def default_requests(
    size: int, cardinalities: list[tuple[str, int]], config: PolicyConfig = PolicyConfig()
) -> list[SampleRequest]:
    """The default sampling policy as a pure function of table statistics."""
    tau = min(1.0, config.target_rows / size) if size else 1.0
    requests = [SampleRequest(UNIFORM, tau)]
    threshold = 0.01 * size
    high = [(n, c) for n, c in cardinalities if c > threshold]
    low = [(n, c) for n, c in cardinalities if c < threshold]
    high.sort(key=lambda t: (-t[1], t[0]))
    low.sort(key=lambda t: (t[1], t[0]))
    for name, _ in high[:10]:
        requests.append(SampleRequest(HASHED, tau, (name,)))
    for name, _ in low[:10]:
        requests.append(SampleRequest(STRATIFIED, tau, (name,)))
    return requests


class SampleCatalog:
    """Many readers, single writer over descriptor state."""

    def __init__(self, db: Database, directory: Optional[str | Path] = None):
        self.db = db
        self.directory = Path(directory) if directory else None
        self._by_key: dict[tuple, SampleDescriptor] = {}
        self._version = 0
        self._lock = threading.RLock()
        if self.directory is not None:
            self._load()

    # -- registration -------------------------------------------------------

    def register_sample(self, d: SampleDescriptor) -> int:
        with self._lock:
            d.validate()
            if not self.db.has(d.sample_table):
                raise InvariantViolation(f"sample table {d.sample_table!r} not found")
            sample = self.db.get(d.sample_table)
            if not sample.schema.has(d.prob_column):
                raise InvariantViolation(
                    f"prob column {d.prob_column!r} missing from {d.sample_table!r}"
                )
            probs = sample.column(d.prob_column)
            if len(probs) and (np.min(probs) <= 0 or np.max(probs) > 1):
                raise InvariantViolation("sampling probabilities must lie in (0,1]")
            if d.key in self._by_key and self._by_key[d.key].sample_table != d.sample_table:
                raise DuplicateSample(f"sample for {d.key} already registered")
            if d.key in self._by_key and self._by_key[d.key].sample_table == d.sample_table:
                pass  # refresh of the same sample table is allowed
            self._by_key[d.key] = d
            self._version += 1
            self._save(d.source_table)
            return self._version

    def unregister(self, d: SampleDescriptor):
        with self._lock:
            self._by_key.pop(d.key, None)
            self._version += 1
            self._save(d.source_table)

    # -- queries --------------------------------------------------------------

    def descriptors_for(self, table: str) -> list[SampleDescriptor]:
        self._require_table(table)
        with self._lock:
            return sorted(
                (d for d in self._by_key.values() if d.source_table == table),
                key=lambda d: d.sample_table,
            )

    def detect_stale(self, table: str) -> bool:
        """True iff the source row count moved since any sample was built."""
        self._require_table(table)
        current = self.db.get(table).row_count
        return any(d.source_size != current for d in self.descriptors_for(table))

    def list_candidates(self, table: str) -> list[SampleDescriptor]:
        self._require_table(table)
        current = self.db.get(table).row_count
        return [d for d in self.descriptors_for(table) if d.source_size == current]

    def all_descriptors(self) -> list[SampleDescriptor]:
        with self._lock:
            return sorted(self._by_key.values(), key=lambda d: d.sample_table)

    def _require_table(self, table: str):
        if not self.db.has(table):
            raise UnknownTable(f"no table named {table!r}")

    # -- default policy ---------------------------------------------------------

    def default_sample_plan_for_table(
        self, table: str, config: PolicyConfig = PolicyConfig()
    ) -> list[SampleRequest]:
        """Sampling requests implied by column cardinalities.

        One uniform sample always; hashed samples on up to 10 of the
        highest-cardinality columns above 1% of the row count; stratified
        samples on up to 10 of the lowest-cardinality columns below it.
        """
        self._require_table(table)
        rel = self.db.get(table)
        cards = []
        for col in rel.schema.columns:
            _, card = factorize_column(rel.column(col.name), col.kind)
            cards.append((col.name, card))
        return default_requests(rel.row_count, cards, config)

    # -- persistence ---------------------------------------------------------------

    def _doc_path(self, table: str) -> Optional[Path]:
        if self.directory is None:
            return None
        samples_dir = self.directory / "samples"
        samples_dir.mkdir(parents=True, exist_ok=True)
        return samples_dir / f"{table}.json"

    def _save(self, table: str):
        path = self._doc_path(table)
        if path is None:
            return
        docs = [
            d.to_json()
            for d in self.all_descriptors()
            if d.source_table == table
        ]
        payload = {"format": DOC_FORMAT, "version": DOC_VERSION, "samples": docs}
        path.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")

    def _load(self):
        samples_dir = self.directory / "samples"
        if not samples_dir.is_dir():
            return
        for path in sorted(samples_dir.glob("*.json")):
            payload = json.loads(path.read_text(encoding="utf-8"))
            if payload.get("format") != DOC_FORMAT or payload.get("version") != DOC_VERSION:
                raise InvariantViolation(f"unsupported sample document {path}")
            for doc in payload["samples"]:
                d = SampleDescriptor.from_json(doc)
                self._by_key[d.key] = d
