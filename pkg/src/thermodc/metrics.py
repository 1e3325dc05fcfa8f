"""Run summaries, policy comparisons and their JSON exports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from .engine import IntervalMetrics

SCHEMA_VERSION = 1
J_PER_KWH = 3.6e6


@dataclass(frozen=True)
class RunSummary:
    total_energy_kwh: float
    it_energy_kwh: float
    cooling_energy_kwh: float
    other_energy_kwh: float
    mean_pue: float  # total energy / IT energy
    total_migrations: int
    overload_interval_fraction: float
    inlet_violation_count: int
    n_intervals: int
    interval_s: int
    duration_s: int
    overloaded_host_intervals: int
    active_host_intervals: int
    migration_degradation_mhz_s: float
    max_inlet_k: float
    intervals_csv: str = "intervals.csv"

    @property
    def mean_active_hosts(self) -> float:
        return self.active_host_intervals / self.n_intervals


def summarize(intervals: Sequence[IntervalMetrics], interval_s: int,
              inlet_limit_k: float = 303.0) -> RunSummary:
    if not intervals:
        raise ValueError("cannot summarise an empty run")
    it_j = sum(m.p_it_w * interval_s for m in intervals)
    cool_j = sum(m.p_cool_w * interval_s for m in intervals)
    other_j = sum(m.p_other_w * interval_s for m in intervals)
    total_j = sum((m.p_it_w + m.p_cool_w + m.p_other_w) * interval_s for m in intervals)
    overloaded = sum(m.overloaded_hosts for m in intervals)
    active = sum(m.active_hosts for m in intervals)
    return RunSummary(
        total_energy_kwh=total_j / J_PER_KWH,
        it_energy_kwh=it_j / J_PER_KWH,
        cooling_energy_kwh=cool_j / J_PER_KWH,
        other_energy_kwh=other_j / J_PER_KWH,
        mean_pue=total_j / it_j if it_j > 0 else 1.0,
        total_migrations=sum(m.migrations for m in intervals),
        overload_interval_fraction=overloaded / active if active else 0.0,
        inlet_violation_count=sum(1 for m in intervals if m.max_inlet_k > inlet_limit_k),
        n_intervals=len(intervals),
        interval_s=interval_s,
        duration_s=len(intervals) * interval_s,
        overloaded_host_intervals=overloaded,
        active_host_intervals=active,
        migration_degradation_mhz_s=sum(m.migration_degradation_mhz_s for m in intervals),
        max_inlet_k=max(m.max_inlet_k for m in intervals),
    )


def combine(a: RunSummary, b: RunSummary) -> RunSummary:
    """Summary of two consecutive stretches of the same run."""
    if a.interval_s != b.interval_s:
        raise ValueError("cannot combine summaries with different intervals")
    it = a.it_energy_kwh + b.it_energy_kwh
    total = a.total_energy_kwh + b.total_energy_kwh
    active = a.active_host_intervals + b.active_host_intervals
    overloaded = a.overloaded_host_intervals + b.overloaded_host_intervals
    return RunSummary(
        total_energy_kwh=total,
        it_energy_kwh=it,
        cooling_energy_kwh=a.cooling_energy_kwh + b.cooling_energy_kwh,
        other_energy_kwh=a.other_energy_kwh + b.other_energy_kwh,
        mean_pue=total / it if it > 0 else 1.0,
        total_migrations=a.total_migrations + b.total_migrations,
        overload_interval_fraction=overloaded / active if active else 0.0,
        inlet_violation_count=a.inlet_violation_count + b.inlet_violation_count,
        n_intervals=a.n_intervals + b.n_intervals,
        interval_s=a.interval_s,
        duration_s=a.duration_s + b.duration_s,
        overloaded_host_intervals=overloaded,
        active_host_intervals=active,
        migration_degradation_mhz_s=a.migration_degradation_mhz_s + b.migration_degradation_mhz_s,
        max_inlet_k=max(a.max_inlet_k, b.max_inlet_k),
        intervals_csv=a.intervals_csv,
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Candidate relative to baseline; negative means the candidate uses less."""

    total_energy_pct: float | None
    it_energy_pct: float | None
    cooling_energy_pct: float | None
    delta_pue: float
    delta_migrations: int
    delta_overload_fraction: float


def _pct(candidate: float, baseline: float) -> float | None:
    if baseline == 0:
        return 0.0 if candidate == 0 else None
    return 100.0 * (candidate - baseline) / baseline


def compare(candidate: RunSummary, baseline: RunSummary) -> ComparisonReport:
    if candidate.duration_s != baseline.duration_s or candidate.interval_s != baseline.interval_s:
        raise ValueError(
            f"runs differ in length: {candidate.duration_s}s/{candidate.interval_s}s vs "
            f"{baseline.duration_s}s/{baseline.interval_s}s")
    return ComparisonReport(
        total_energy_pct=_pct(candidate.total_energy_kwh, baseline.total_energy_kwh),
        it_energy_pct=_pct(candidate.it_energy_kwh, baseline.it_energy_kwh),
        cooling_energy_pct=_pct(candidate.cooling_energy_kwh, baseline.cooling_energy_kwh),
        delta_pue=candidate.mean_pue - baseline.mean_pue,
        delta_migrations=candidate.total_migrations - baseline.total_migrations,
        delta_overload_fraction=candidate.overload_interval_fraction - baseline.overload_interval_fraction,
    )


def mean_report(reports: Sequence[ComparisonReport]) -> ComparisonReport:
    """Field-wise mean across seeds; undefined percentages stay undefined."""
    if not reports:
        raise ValueError("no reports to average")

    def avg(name):
        vals = [getattr(r, name) for r in reports]
        if any(v is None for v in vals):
            return None
        return sum(vals) / len(vals)

    return ComparisonReport(**{f.name: avg(f.name) for f in fields(ComparisonReport)})


# -- export ------------------------------------------------------------------

def summary_to_dict(summary: RunSummary, config: dict[str, Any] | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {"schema": SCHEMA_VERSION}
    doc.update(asdict(summary))
    doc["config"] = config if config is not None else {}
    return doc


def summary_from_dict(doc: dict[str, Any]) -> RunSummary:
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported summary schema {doc.get('schema')!r}")
    return RunSummary(**{f.name: doc[f.name] for f in fields(RunSummary)})


def dumps(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_summary(summary: RunSummary, path: str | Path, config: dict[str, Any] | None = None) -> None:
    Path(path).write_text(dumps(summary_to_dict(summary, config)), encoding="utf-8")


@dataclass
class ComparisonDoc:
    baseline: str
    runs: dict[str, RunSummary]
    reports: dict[str, ComparisonReport]
    per_seed: dict[int, dict[str, ComparisonReport]] = field(default_factory=dict)

    def to_dict(self, config: dict[str, Any] | None = None) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "baseline": self.baseline,
            "runs": {k: summary_to_dict(v) for k, v in self.runs.items()},
            "deltas": {k: asdict(v) for k, v in self.reports.items()},
        }
        if self.per_seed:
            doc["per_seed_deltas"] = {str(s): {k: asdict(v) for k, v in r.items()}
                                      for s, r in self.per_seed.items()}
        doc["config"] = config if config is not None else {}
        return doc


def fmt_pct(x: float | None) -> str:
    return "n/a" if x is None or math.isnan(x) else f"{x:+.2f}%"
