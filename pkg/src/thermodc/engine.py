"""Interval-driven simulation loop with migration cost accounting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .domain import (
    CoolingState,
    DataCentreState,
    DemandSample,
    HostSpec,
    HostState,
    Plan,
    VmState,
    refresh_host,
)
from .models import Models
from .workload import DemandSeries, demand_at

if TYPE_CHECKING:
    from .metrics import RunSummary

CSV_COLUMNS = (
    "t_s", "p_it_w", "p_cool_w", "p_other_w", "pue", "setpoint_k", "active_hosts",
    "migrations", "max_inlet_k", "overloaded_hosts", "migration_degradation_mhz_s",
)

MIGRATION_DEGRADATION = 0.10  # fraction of VM demand unserved while its memory is copied


class PlanError(RuntimeError):
    """A plan referenced unknown VMs/hosts or broke a capacity rule."""


class InfeasibleStart(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    duration_s: int = 86400
    interval_s: int = 300
    migration_bandwidth_mb_s: float = 125.0  # math.inf disables migration cost
    p_other_fraction: float = 0.0
    initial_setpoint_k: float = 291.0

    def __post_init__(self):
        if self.interval_s <= 0 or self.duration_s < self.interval_s:
            raise ValueError("need interval_s > 0 and duration_s >= interval_s")
        if self.migration_bandwidth_mb_s <= 0:
            raise ValueError("migration bandwidth must be positive")
        if self.p_other_fraction < 0:
            raise ValueError("p_other_fraction must be >= 0")

    @property
    def n_intervals(self) -> int:
        return math.ceil(self.duration_s / self.interval_s)


@dataclass(frozen=True)
class IntervalMetrics:
    t_s: int
    p_it_w: float
    p_cool_w: float
    p_other_w: float
    pue: float
    setpoint_k: float
    active_hosts: int
    migrations: int
    max_inlet_k: float
    overloaded_hosts: int
    migration_degradation_mhz_s: float

    def row(self) -> list[str]:
        return [v if isinstance(v, str) else (str(v) if isinstance(v, int) else repr(float(v)))
                for v in (getattr(self, c) for c in CSV_COLUMNS)]


@dataclass(frozen=True)
class MigrationRecord:
    vm_id: str
    src: str
    dst: str
    duration_s: float
    degradation_mhz_s: float


def build_hosts(n_hosts: int, hosts_per_rack: int, template: HostSpec | None = None) -> list[HostState]:
    """Hosts ``h000..`` filled rack by rack."""
    template = template or HostSpec("template")
    width = max(3, len(str(n_hosts - 1)))
    rwidth = max(2, len(str((n_hosts - 1) // hosts_per_rack)))
    hosts = []
    for i in range(n_hosts):
        spec = HostSpec(
            id=f"h{i:0{width}d}", cores=template.cores, mips_per_core=template.mips_per_core,
            ram_mb=template.ram_mb, freq_levels_ghz=template.freq_levels_ghz,
            p_idle_w=template.p_idle_w, p_max_w=template.p_max_w,
            r_thermal_k_per_w=template.r_thermal_k_per_w,
            rack_id=f"r{i // hosts_per_rack:0{rwidth}d}", storage_gb=template.storage_gb,
        )
        hosts.append(HostState(spec))
    return hosts


def initial_state(hosts: list[HostState], workloads: Sequence[DemandSeries], *,
                  initial_setpoint_k: float = 291.0, inlet_limit_k: float = 303.0,
                  setpoint_range_k: tuple[float, float] = (285.0, 308.0)) -> DataCentreState:
    """Round-robin first-fit on RAM: VM i starts its search at host i mod n."""
    specs = [w.vm_spec() for w in workloads]
    if len({s.id for s in specs}) != len(specs):
        raise InfeasibleStart("duplicate VM ids in workloads")
    need = sum(s.ram_mb for s in specs)
    have = sum(h.spec.ram_mb for h in hosts)
    if need > have:
        raise InfeasibleStart(f"total VM RAM {need} MB exceeds data-centre RAM {have} MB")
    state = DataCentreState(
        hosts=hosts, vms={s.id: VmState(s) for s in specs},
        cooling=CoolingState(setpoint_k=initial_setpoint_k, setpoint_range_k=setpoint_range_k),
        inlet_limit_k=inlet_limit_k,
    )
    free = [h.spec.ram_mb - state.vm_ram(h) for h in hosts]
    n = len(hosts)
    for i, s in enumerate(specs):
        for k in range(n):
            j = (i + k) % n
            if free[j] >= s.ram_mb:
                break
        else:
            raise InfeasibleStart(f"no host has {s.ram_mb} MB free for vm {s.id}")
        hosts[j].vms.add(s.id)
        hosts[j].active = True
        hosts[j].freq_idx = hosts[j].spec.max_freq_idx
        state.mapping[s.id] = hosts[j].id
        free[j] -= s.ram_mb
    return state


def migration_duration(ram_mb: float, bandwidth_mb_s: float, interval_s: float) -> float:
    if math.isinf(bandwidth_mb_s):
        return 0.0
    return min(ram_mb / bandwidth_mb_s, interval_s)


def _move(state: DataCentreState, vm_id: str, dst: str) -> None:
    """Attach an already-detached VM to ``dst`` after checking RAM."""
    host = state.host(dst)
    ram = state.vms[vm_id].spec.ram_mb
    if state.vm_ram(host) + ram > host.spec.ram_mb:
        raise PlanError(f"vm {vm_id}: not enough RAM on {dst}")
    host.vms.add(vm_id)
    host.active = True
    state.mapping[vm_id] = dst


def apply_migration(state: DataCentreState, vm_id: str, src: str, dst: str, interval_s: float,
                    bandwidth_mb_s: float = 125.0) -> MigrationRecord:
    """Move one VM atomically and charge the degraded service during the copy."""
    if vm_id not in state.vms:
        raise PlanError(f"unknown vm {vm_id!r}")
    if not state.has_host(src) or not state.has_host(dst):
        raise PlanError(f"unknown host in migration {src!r} -> {dst!r}")
    if state.mapping.get(vm_id) != src:
        raise PlanError(f"vm {vm_id} is not on {src}")
    state.host(src).vms.discard(vm_id)
    del state.mapping[vm_id]
    try:
        _move(state, vm_id, dst)
    except PlanError:
        state.host(src).vms.add(vm_id)
        state.mapping[vm_id] = src
        raise
    return _record(state, vm_id, src, dst, interval_s, bandwidth_mb_s)


def _record(state, vm_id, src, dst, interval_s, bandwidth_mb_s) -> MigrationRecord:
    vm = state.vms[vm_id]
    dur = migration_duration(vm.spec.ram_mb, bandwidth_mb_s, interval_s)
    return MigrationRecord(vm_id, src, dst, dur, MIGRATION_DEGRADATION * vm.demand_mhz * dur)


def apply_plan(state: DataCentreState, plan: Plan, cfg: EngineConfig) -> list[MigrationRecord]:
    """Apply all moves as one atomic step: detach every migrating VM, then attach."""
    seen: set[str] = set()
    for vm, src, dst in plan.migrations:
        if vm in seen:
            raise PlanError(f"vm {vm} migrates twice")
        seen.add(vm)
        if vm not in state.vms:
            raise PlanError(f"unknown vm {vm!r}")
        if not state.has_host(src) or not state.has_host(dst):
            raise PlanError(f"unknown host in migration {src!r} -> {dst!r}")
        if state.mapping.get(vm) != src:
            raise PlanError(f"vm {vm} is not on {src}")
    for vm, host in plan.placements:
        if vm not in state.vms or vm in state.mapping:
            raise PlanError(f"placement of unknown or already mapped vm {vm!r}")
        if not state.has_host(host):
            raise PlanError(f"unknown host {host!r}")
    for h_id in plan.deactivations:
        if not state.has_host(h_id):
            raise PlanError(f"deactivation of unknown host {h_id!r}")
    for h_id, idx in plan.freq_assignment.items():
        if not state.has_host(h_id):
            raise PlanError(f"frequency for unknown host {h_id!r}")
        if not 0 <= idx < len(state.host(h_id).spec.freq_levels_ghz):
            raise PlanError(f"frequency index {idx} invalid for {h_id}")

    for vm, src, _ in plan.migrations:
        state.host(src).vms.discard(vm)
        del state.mapping[vm]
    for vm, _, dst in plan.migrations:
        _move(state, vm, dst)
    for vm, host in plan.placements:
        _move(state, vm, host)
    records = [_record(state, vm, src, dst, cfg.interval_s, cfg.migration_bandwidth_mb_s)
               for vm, src, dst in plan.migrations]

    for h_id in plan.deactivations:
        deactivate(state, h_id)
    for h_id, idx in plan.freq_assignment.items():
        host = state.host(h_id)
        if not host.active and not host.vms:
            raise PlanError(f"frequency assigned to inactive host {h_id}")
        host.freq_idx = idx
    for h in state.hosts:
        if h.active and not h.vms:
            h.active = False
    if plan.setpoint_k is not None:
        lo, hi = state.cooling.setpoint_range_k
        if not lo - 1e-9 <= plan.setpoint_k <= hi + 1e-9:
            raise PlanError(f"setpoint {plan.setpoint_k} K outside [{lo}, {hi}]")
        state.cooling.setpoint_k = plan.setpoint_k
    return records


def deactivate(state: DataCentreState, host_id: str) -> None:
    host = state.host(host_id)
    if host.vms:
        raise PlanError(f"cannot deactivate {host_id}: still hosts {sorted(host.vms)}")
    host.active = False


def evaluate(state: DataCentreState, models: Models, p_other_fraction: float = 0.0) -> tuple[float, float, float]:
    """Run power -> inlet -> cpu temperature -> cooling; returns (p_it, p_cool, p_other)."""
    for h in state.hosts:
        refresh_host(state, h, models.power)
    powers = [h.power_w for h in state.hosts]
    inlets = models.thermal.inlet_temps(state.cooling.setpoint_k, powers,
                                        [h.spec.rack_id for h in state.hosts])
    for h, t_in in zip(state.hosts, inlets):
        h.inlet_temp_k = t_in
        h.cpu_temp_k = models.thermal.cpu_temp(t_in, h.power_w, h.spec)
    p_it = sum(powers)
    cop, p_cool = models.cooling.cooling(p_it, state.cooling.setpoint_k)
    state.cooling.cop = cop
    state.cooling.power_w = p_cool
    return p_it, p_cool, p_other_fraction * p_it


def step(state: DataCentreState, demands: Mapping[str, DemandSample], policy, models: Models,
         cfg: EngineConfig, overload_threshold: float = 0.9) -> tuple[DataCentreState, IntervalMetrics]:
    """Advance ``state`` by one interval in place and return it with the interval's metrics."""
    for vm_id, sample in demands.items():
        state.vms[vm_id].demand_mhz = sample.cpu_mhz
    for h in state.hosts:
        refresh_host(state, h, models.power)

    plan = policy.plan(state)
    records = apply_plan(state, plan, cfg)
    p_it, p_cool, p_other = evaluate(state, models, cfg.p_other_fraction)

    active = [h for h in state.hosts if h.active]
    metrics = IntervalMetrics(
        t_s=state.clock_s,
        p_it_w=p_it,
        p_cool_w=p_cool,
        p_other_w=p_other,
        pue=(p_it + p_cool + p_other) / p_it if p_it > 0 else 1.0,
        setpoint_k=state.cooling.setpoint_k,
        active_hosts=len(active),
        migrations=len(records),
        max_inlet_k=max(h.inlet_temp_k for h in state.hosts),
        overloaded_hosts=sum(1 for h in active if h.ratio > overload_threshold),
        migration_degradation_mhz_s=sum(r.degradation_mhz_s for r in records),
    )
    state.clock_s += cfg.interval_s
    return state, metrics


@dataclass(frozen=True)
class SimSetup:
    """Everything a run needs besides workloads and the policy."""

    n_hosts: int = 200
    hosts_per_rack: int = 40
    host: HostSpec = HostSpec("template")
    models: Models = Models()
    engine: EngineConfig = EngineConfig()

    def __post_init__(self):
        if self.n_hosts < 1 or self.hosts_per_rack < 1:
            raise ValueError("n_hosts and hosts_per_rack must be >= 1")


@dataclass
class RunResult:
    summary: "RunSummary"
    intervals: list[IntervalMetrics]
    state: DataCentreState


def simulate(state: DataCentreState, workloads: Sequence[DemandSeries], policy, models: Models,
             cfg: EngineConfig, overload_threshold: float = 0.9) -> list[IntervalMetrics]:
    missing = set(state.vms) - {w.vm_id for w in workloads}
    if missing:
        raise ValueError(f"no demand series for {sorted(missing)}")
    series = sorted(workloads, key=lambda w: w.vm_id)
    out = []
    for k in range(cfg.n_intervals):
        t = k * cfg.interval_s
        demands = {w.vm_id: demand_at(w, t) for w in series}
        state, m = step(state, demands, policy, models, cfg, overload_threshold)
        out.append(m)
    return out


def run(setup: SimSetup, workloads: Sequence[DemandSeries], policy) -> RunResult:
    """Simulate ``setup`` under ``policy``; fully deterministic for identical inputs."""
    from .metrics import summarize

    cfg = getattr(policy, "cfg", None)
    limit = cfg.inlet_limit_k if cfg is not None else 303.0
    threshold = cfg.overload_threshold if cfg is not None else 0.9
    setpoint = setup.engine.initial_setpoint_k
    if cfg is not None and cfg.fixed_setpoint_k is not None:
        setpoint = cfg.fixed_setpoint_k
    cp = setup.models.cooling.params
    hosts = build_hosts(setup.n_hosts, setup.hosts_per_rack, setup.host)
    state = initial_state(hosts, workloads, initial_setpoint_k=setpoint, inlet_limit_k=limit,
                          setpoint_range_k=(cp.min_k, cp.max_k))
    intervals = simulate(state, workloads, policy, setup.models, setup.engine, threshold)
    summary = summarize(intervals, setup.engine.interval_s, inlet_limit_k=limit)
    return RunResult(summary, intervals, state)


def write_intervals_csv(intervals: Iterable[IntervalMetrics], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in intervals:
        w.writerow(m.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_intervals_csv(path: str | Path) -> list[IntervalMetrics]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        ints = {"t_s", "active_hosts", "migrations", "overloaded_hosts"}
        return [IntervalMetrics(**{k: int(v) if k in ints else float(v) for k, v in row.items()})
                for row in reader]
