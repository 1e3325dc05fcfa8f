"""Consolidation, DVFS and cooling-setpoint planning over a cloned twin.

Planning order per interval: overloaded hosts shed VMs, underloaded hosts are
evacuated (all-or-nothing), then frequencies and the setpoint are chosen for
the resulting mapping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cmp_to_key
from typing import Iterable, NamedTuple, Sequence

from .domain import (
    DataCentreState,
    HostSpec,
    HostState,
    Plan,
    capacity_mhz,
    clone_twin,
    refresh_host,
)
from .models import Models

log = logging.getLogger(__name__)


class Criterion(str, Enum):
    MIN_POWER = "MinPowerIncrease"
    MAX_POWER = "MaxPowerIncrease"
    INTEGRATED = "IntegratedFreqUtil"


@dataclass(frozen=True)
class PolicyConfig:
    overload_threshold: float = 0.9
    underload_threshold: float = 0.3
    criterion: Criterion = Criterion.INTEGRATED
    fixed_setpoint_k: float | None = None
    dvfs_enabled: bool = True
    inlet_limit_k: float = 303.0
    migrations_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        if not 0 < self.underload_threshold < self.overload_threshold <= 1:
            raise ValueError("need 0 < underload_threshold < overload_threshold <= 1")

    @classmethod
    def baseline(cls, criterion: Criterion | str = Criterion.MIN_POWER, **kw) -> PolicyConfig:
        """Power-only baseline: frequency pinned at max, setpoint fixed at 291 K."""
        return cls(criterion=Criterion(criterion), dvfs_enabled=False, fixed_setpoint_k=291.0, **kw)


class PlacementInfeasible(Exception):
    def __init__(self, vm_id: str, placed: Sequence[tuple[str, str]] = ()):
        super().__init__(f"placement infeasible for vm {vm_id}")
        self.vm_id = vm_id
        self.placed = list(placed)


class SetpointDecision(NamedTuple):
    setpoint_k: float
    violation: bool


# -- detection and selection -------------------------------------------------

def detect_overloaded(state: DataCentreState, cfg: PolicyConfig) -> list[str]:
    hot = [h for h in state.hosts if h.active and h.ratio > cfg.overload_threshold]
    hot.sort(key=lambda h: (-h.ratio, h.id))
    return [h.id for h in hot]


def detect_underloaded(state: DataCentreState, cfg: PolicyConfig) -> list[str]:
    cold = [h for h in state.hosts
            if h.active and h.util < cfg.underload_threshold and h.ratio <= cfg.overload_threshold]
    cold.sort(key=lambda h: (h.util, h.id))
    return [h.id for h in cold]


def _shed_capacity(host: HostState, cfg: PolicyConfig) -> float:
    # with DVFS the planner can still raise the clock, so judge against the top level
    idx = host.spec.max_freq_idx if cfg.dvfs_enabled else host.freq_idx
    return capacity_mhz(host.spec, idx)


def select_vms_to_migrate(state: DataCentreState, host_id: str, cfg: PolicyConfig) -> list[str]:
    """VMs to move off ``host_id``: smallest-RAM-first relief for overload, everything for underload."""
    host = state.host(host_id)
    if host.ratio > cfg.overload_threshold:
        cap = _shed_capacity(host, cfg)
        demand = host.demand_mhz
        chosen = []
        for v in sorted(host.vms, key=lambda v: (state.vms[v].spec.ram_mb, v)):
            if demand / cap <= cfg.overload_threshold:
                break
            chosen.append(v)
            demand -= state.vms[v].demand_mhz
        return chosen
    if host.util < cfg.underload_threshold:
        return sorted(host.vms)
    return []


CAPACITY_EPS_MHZ = 1e-9  # absorbs rounding so exact boundary cases count as covered


def choose_frequency(spec: HostSpec, demand_mhz: float, cfg: PolicyConfig) -> int:
    """Lowest ladder index whose capacity, derated by the overload threshold, covers the demand."""
    for idx in range(len(spec.freq_levels_ghz)):
        if capacity_mhz(spec, idx) * cfg.overload_threshold + CAPACITY_EPS_MHZ >= demand_mhz:
            return idx
    return spec.max_freq_idx


# -- scoring -----------------------------------------------------------------

class Projection(NamedTuple):
    freq_before: int
    freq_after: int
    demand_after: float
    util_after: float
    power_before: float
    power_after: float

    @property
    def delta_power(self) -> float:
        return self.power_after - self.power_before

    @property
    def delta_freq(self) -> int:
        return self.freq_after - self.freq_before


def project(twin: DataCentreState, host: HostState, vm_id: str, models: Models,
            cfg: PolicyConfig) -> Projection:
    """Predicted host figures if ``vm_id`` were added to ``host``."""
    spec = host.spec
    demand = host.demand_mhz + twin.vms[vm_id].demand_mhz
    if cfg.dvfs_enabled:
        f_after = choose_frequency(spec, demand, cfg)
    else:
        f_after = host.freq_idx if host.active else spec.max_freq_idx
    f_before = host.freq_idx if host.active else 0
    util = min(demand / capacity_mhz(spec, f_after), 1.0)
    p_before = host.power_w if host.active else 0.0
    return Projection(f_before, f_after, demand, util, p_before,
                      models.power.power(util, f_after, spec))


def score_min_power(twin, host, vm_id, models, cfg=PolicyConfig()) -> float:
    """Power increase in watts (lower is better); activation counts the idle floor."""
    return project(twin, host, vm_id, models, cfg).delta_power


def score_max_power(twin, host, vm_id, models, cfg=PolicyConfig()) -> float:
    """Power increase in watts (higher is better)."""
    return project(twin, host, vm_id, models, cfg).delta_power


def score_integrated(twin, host, vm_id, models, cfg) -> tuple:
    """Lexicographic key, smaller is better: frequency step, -utilisation, power increase, id."""
    p = project(twin, host, vm_id, models, cfg)
    return (p.delta_freq, -p.util_after, p.delta_power, host.id)


SCORE_TOL = 1e-9  # scores closer than this are equal, so ties fall through to the host id


def rank_key(twin, host, vm_id, models, cfg) -> tuple:
    """Key for candidate hosts under ``cfg.criterion``; the minimum (per :func:`compare_keys`) wins."""
    if cfg.criterion is Criterion.INTEGRATED:
        return score_integrated(twin, host, vm_id, models, cfg)
    if cfg.criterion is Criterion.MIN_POWER:
        return (score_min_power(twin, host, vm_id, models, cfg), host.id)
    return (-score_max_power(twin, host, vm_id, models, cfg), host.id)


def compare_keys(a: tuple, b: tuple) -> int:
    """Lexicographic three-way comparison treating floats within SCORE_TOL as equal."""
    for x, y in zip(a, b):
        if isinstance(x, float) or isinstance(y, float):
            if abs(x - y) <= SCORE_TOL:
                continue
        elif x == y:
            continue
        return -1 if x < y else 1
    return 0


# -- placement workspace -----------------------------------------------------

class Workspace:
    """A twin plus the bookkeeping BFD needs: RAM in use and rack membership."""

    def __init__(self, twin: DataCentreState, models: Models, cfg: PolicyConfig):
        self.twin = twin
        self.models = models
        self.cfg = cfg
        self.ram_used = {h.id: twin.vm_ram(h) for h in twin.hosts}
        self.racks: dict[str, list[HostState]] = {}
        for h in twin.hosts:
            self.racks.setdefault(h.spec.rack_id, []).append(h)

    def retune(self, host: HostState) -> None:
        if host.active and self.cfg.dvfs_enabled:
            host.freq_idx = choose_frequency(host.spec, sum(
                self.twin.vms[v].demand_mhz for v in sorted(host.vms)), self.cfg)
        elif not self.cfg.dvfs_enabled and host.active:
            host.freq_idx = host.spec.max_freq_idx
        refresh_host(self.twin, host, self.models.power)

    def attach(self, vm_id: str, host_id: str) -> None:
        host = self.twin.host(host_id)
        host.vms.add(vm_id)
        host.active = True
        self.twin.mapping[vm_id] = host_id
        self.ram_used[host_id] += self.twin.vms[vm_id].spec.ram_mb
        self.retune(host)

    def detach(self, vm_id: str) -> str:
        host_id = self.twin.mapping.pop(vm_id)
        host = self.twin.host(host_id)
        host.vms.discard(vm_id)
        self.ram_used[host_id] -= self.twin.vms[vm_id].spec.ram_mb
        self.retune(host)
        return host_id

    def set_active(self, host: HostState, active: bool) -> None:
        host.active = active
        self.retune(host)

    def feasible(self, host: HostState, vm_id: str, allow_activation: bool) -> bool:
        """RAM headroom, activation permission and no overload after placement."""
        if not host.active and not allow_activation:
            return False
        vm = self.twin.vms[vm_id]
        if self.ram_used[host.id] + vm.spec.ram_mb > host.spec.ram_mb:
            return False
        top = capacity_mhz(host.spec, host.spec.max_freq_idx)
        return host.demand_mhz + vm.demand_mhz <= top * self.cfg.overload_threshold + CAPACITY_EPS_MHZ

    def inlet_ok(self, host: HostState, vm_id: str) -> bool:
        """Predicted rack inlets at the current setpoint stay within the limit."""
        proj = project(self.twin, host, vm_id, self.models, self.cfg)
        members = self.racks[host.spec.rack_id]
        powers = [proj.power_after if m is host else m.power_w for m in members]
        inlets = self.models.thermal.inlet_temps(
            self.twin.cooling.setpoint_k, powers, [m.spec.rack_id for m in members])
        return max(inlets) <= self.cfg.inlet_limit_k

    def best_host(self, vm_id: str, exclude: Iterable[str] = (),
                  allow_activation: bool = True) -> str | None:
        excluded = set(exclude)
        ranked = []
        for h in self.twin.hosts:
            if h.id in excluded or not self.feasible(h, vm_id, allow_activation):
                continue
            ranked.append((rank_key(self.twin, h, vm_id, self.models, self.cfg), h))
        ranked.sort(key=cmp_to_key(lambda a, b: compare_keys(a[0], b[0])))
        if self.cfg.criterion is not Criterion.INTEGRATED:
            return ranked[0][1].id if ranked else None
        # inlet-infeasible hosts are dropped; scanning in rank order gives the same argbest
        for _, h in ranked:
            if self.inlet_ok(h, vm_id):
                return h.id
        return None


def bfd_order(twin: DataCentreState, vm_ids: Iterable[str]) -> list[str]:
    """Descending CPU demand, then descending RAM, then id."""
    return sorted(vm_ids, key=lambda v: (-twin.vms[v].demand_mhz, -twin.vms[v].spec.ram_mb, v))


def place_bfd(vm_ids: Iterable[str], twin: DataCentreState, cfg: PolicyConfig, models: Models, *,
              origins: dict[str, str] | None = None, exclude: Iterable[str] = (),
              allow_activation: bool = True, strict: bool = True,
              workspace: Workspace | None = None) -> list[tuple[str, str]]:
    """Best-fit-decreasing placement of unmapped VMs onto the twin.

    Each VM is barred from its own origin host. With ``strict`` the first VM
    without a feasible host raises :class:`PlacementInfeasible` (carrying the
    placements already made); otherwise such VMs are skipped and left unmapped.
    """
    ws = workspace or Workspace(twin, models, cfg)
    origins = origins or {}
    exclude = set(exclude)
    placed: list[tuple[str, str]] = []
    for vm in bfd_order(twin, vm_ids):
        if vm in twin.mapping:
            raise ValueError(f"vm {vm} is still mapped to {twin.mapping[vm]}")
        barred = exclude | ({origins[vm]} if vm in origins else set())
        dst = ws.best_host(vm, barred, allow_activation)
        if dst is None:
            if strict:
                raise PlacementInfeasible(vm, placed)
            continue
        ws.attach(vm, dst)
        placed.append((vm, dst))
    return placed


def choose_setpoint(twin: DataCentreState, models: Models, cfg: PolicyConfig) -> SetpointDecision:
    """Warmest grid setpoint keeping every active host's predicted inlet within the limit.

    Switched-off hosts need no protection, so a data centre with nothing
    running gets the warmest setpoint on the grid.
    """
    powers = [h.power_w for h in twin.hosts]
    racks = [h.spec.rack_id for h in twin.hosts]
    grid = models.cooling.setpoint_grid()
    if not any(h.active for h in twin.hosts):
        return SetpointDecision(grid[-1], False)
    for sp in reversed(grid):
        inlets = models.thermal.inlet_temps(sp, powers, racks)
        if max(t for t, h in zip(inlets, twin.hosts) if h.active) <= cfg.inlet_limit_k:
            return SetpointDecision(sp, False)
    return SetpointDecision(grid[0], True)


# -- the planner -------------------------------------------------------------

def plan(state: DataCentreState, cfg: PolicyConfig, models: Models) -> Plan:
    """Build a Plan for ``state`` without touching it."""
    twin = clone_twin(state)
    ws = Workspace(twin, models, cfg)
    for h in twin.hosts:
        ws.retune(h)

    placements: list[tuple[str, str]] = []
    moves: list[tuple[str, str, str]] = []
    stays: list[str] = []

    # VMs without a host yet (arrivals)
    arrivals = sorted(v for v in twin.vms if v not in twin.mapping)
    if arrivals:
        done = place_bfd(arrivals, twin, cfg, models, strict=False, workspace=ws)
        placements.extend(done)
        stays.extend(sorted(set(arrivals) - {v for v, _ in done}))

    if cfg.migrations_enabled:
        overloaded = detect_overloaded(state, cfg)
        underloaded = detect_underloaded(state, cfg)
        origins: dict[str, str] = {}
        receivers: set[str] = set()

        shed = [v for h in overloaded for v in select_vms_to_migrate(state, h, cfg)]
        for v in shed:
            origins[v] = ws.detach(v)
        done = place_bfd(shed, twin, cfg, models, origins=origins, strict=False, workspace=ws)
        placed = {v for v, _ in done}
        for v in shed:
            if v not in placed:
                ws.attach(v, origins[v])
                stays.append(v)
        for v, dst in done:
            moves.append((v, origins[v], dst))
            receivers.add(dst)

        evacuated: set[str] = set()
        for h_id in underloaded:
            if h_id in receivers:
                continue
            vms = select_vms_to_migrate(state, h_id, cfg)
            if not vms:
                continue
            host = twin.host(h_id)
            for v in vms:
                origins[v] = ws.detach(v)
            ws.set_active(host, False)
            try:
                done = place_bfd(vms, twin, cfg, models, origins=origins,
                                 exclude=evacuated | {h_id}, allow_activation=False, workspace=ws)
            except PlacementInfeasible as exc:
                for v, _ in reversed(exc.placed):
                    ws.detach(v)
                ws.set_active(host, True)
                for v in vms:
                    ws.attach(v, h_id)
                continue
            evacuated.add(h_id)
            for v, dst in done:
                moves.append((v, h_id, dst))
                receivers.add(dst)

    shut = []
    for h in twin.hosts:
        if h.active and not h.vms:
            ws.set_active(h, False)
        if not h.active and state.host(h.id).active:
            shut.append(h.id)
    freq = {}
    for h in twin.hosts:
        if h.active:
            freq[h.id] = (choose_frequency(h.spec, h.demand_mhz, cfg) if cfg.dvfs_enabled
                          else h.spec.max_freq_idx)
            h.freq_idx = freq[h.id]
        refresh_host(twin, h, models.power)

    if cfg.fixed_setpoint_k is not None:
        decision = SetpointDecision(cfg.fixed_setpoint_k, False)
    else:
        decision = choose_setpoint(twin, models, cfg)
        if decision.violation:
            log.warning("t=%s: no setpoint keeps inlets under %.1f K", state.clock_s, cfg.inlet_limit_k)

    return Plan(
        migrations=tuple(moves),
        freq_assignment=freq,
        setpoint_k=decision.setpoint_k,
        placements=tuple(placements),
        deactivations=tuple(shut),
        stays=tuple(stays),
        thermal_violation=decision.violation,
    )


@dataclass(frozen=True)
class Policy:
    """Binds a PolicyConfig to a model bundle; what the engine calls each interval."""

    cfg: PolicyConfig = PolicyConfig()
    models: Models = Models()

    def plan(self, state: DataCentreState) -> Plan:
        return plan(state, self.cfg, self.models)


@dataclass(frozen=True)
class NoOpPolicy(Policy):
    """Leaves mapping, frequencies and setpoint untouched."""

    def plan(self, state: DataCentreState) -> Plan:
        return Plan(setpoint_k=state.cooling.setpoint_k)
