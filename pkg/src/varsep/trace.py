"""Iteration records shared by the VSV and QGA loops."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    evaluations: int
    device_calls: int
    proposal_hsd: float
    best_hsd: float
    elapsed: float


@dataclass
class OptimizationTrace:
    """Append-only list of records plus run metadata (seed, config, tag)."""

    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def append(self, evaluations: int, device_calls: int, proposal_hsd: float, best_hsd: float) -> TraceRecord:
        it = self.records[-1].iteration + 1 if self.records else 0
        rec = TraceRecord(
            iteration=it,
            evaluations=int(evaluations),
            device_calls=int(device_calls),
            proposal_hsd=float(proposal_hsd),
            best_hsd=float(best_hsd),
            elapsed=time.perf_counter() - self._t0,
        )
        self.records.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def improvements(self) -> int:
        """Number of strict decreases of the best-so-far channel."""
        best = self.column("best_hsd")
        return sum(1 for a, b in zip(best, best[1:]) if b < a)

    def to_csv(self, include_time: bool = True) -> str:
        names = [f.name for f in fields(TraceRecord)]
        if not include_time:
            names.remove("elapsed")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for rec in self.records:
            row = asdict(rec)
            writer.writerow([_fmt(row[k]) for k in names])
        return buf.getvalue()


def _fmt(x: Any) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)
