"""Core data model: hosts, VMs, cooling and the cloneable data-centre twin."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

# Intel Xeon E5620 DVFS ladder (GHz); the last level is the reference maximum.
XEON_E5620_LEVELS: tuple[float, ...] = (1.73, 1.86, 2.13, 2.26, 2.39, 2.40)

DEFAULT_INLET_LIMIT_K = 303.0


@dataclass(frozen=True)
class HostSpec:
    id: str
    cores: int = 4
    mips_per_core: float = 2400.0  # MHz per core at f_max
    ram_mb: int = 16384
    freq_levels_ghz: tuple[float, ...] = XEON_E5620_LEVELS
    p_idle_w: float = 75.0
    p_max_w: float = 250.0
    r_thermal_k_per_w: float = 0.15
    rack_id: str = "rack0"
    storage_gb: float = 1.0  # carried only, no model reads it

    def __post_init__(self):
        levels = tuple(float(f) for f in self.freq_levels_ghz)
        object.__setattr__(self, "freq_levels_ghz", levels)
        if not levels:
            raise ValueError(f"host {self.id}: freq_levels_ghz is empty")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"host {self.id}: freq_levels_ghz must be strictly ascending")
        if levels[0] <= 0:
            raise ValueError(f"host {self.id}: frequencies must be positive")
        if not 0 < self.p_idle_w < self.p_max_w:
            raise ValueError(f"host {self.id}: need 0 < p_idle_w < p_max_w")
        if self.cores < 1:
            raise ValueError(f"host {self.id}: cores must be >= 1")
        if self.mips_per_core <= 0 or self.ram_mb <= 0:
            raise ValueError(f"host {self.id}: mips_per_core and ram_mb must be positive")
        if self.r_thermal_k_per_w < 0:
            raise ValueError(f"host {self.id}: r_thermal_k_per_w must be >= 0")

    @property
    def f_max_ghz(self) -> float:
        return self.freq_levels_ghz[-1]

    @property
    def max_freq_idx(self) -> int:
        return len(self.freq_levels_ghz) - 1


@dataclass(frozen=True)
class VmSpec:
    id: str
    cores: int
    ram_mb: int

    def __post_init__(self):
        if self.cores < 1:
            raise ValueError(f"vm {self.id}: cores must be >= 1")
        if self.ram_mb <= 0:
            raise ValueError(f"vm {self.id}: ram_mb must be positive")


@dataclass(frozen=True)
class DemandSample:
    t_s: int
    cpu_mhz: float
    mem_kb: float = 0.0
    disk_rd_kbs: float = 0.0
    disk_wr_kbs: float = 0.0
    net_rx_kbs: float = 0.0
    net_tx_kbs: float = 0.0

    def __post_init__(self):
        for name in ("t_s", "cpu_mhz", "mem_kb", "disk_rd_kbs", "disk_wr_kbs",
                     "net_rx_kbs", "net_tx_kbs"):
            if getattr(self, name) < 0:
                raise ValueError(f"DemandSample.{name} must be >= 0")


def capacity_mhz(spec: HostSpec, freq_idx: int) -> float:
    """CPU capacity of a host when clocked at ``freq_levels_ghz[freq_idx]``."""
    if not 0 <= freq_idx < len(spec.freq_levels_ghz):
        raise IndexError(f"host {spec.id}: frequency index {freq_idx} out of range")
    return spec.cores * spec.mips_per_core * (spec.freq_levels_ghz[freq_idx] / spec.f_max_ghz)


@dataclass
class HostState:
    spec: HostSpec
    active: bool = False
    freq_idx: int = -1  # normalised to the top level in __post_init__
    vms: set[str] = field(default_factory=set)
    demand_mhz: float = 0.0
    ratio: float = 0.0  # unclamped demand / capacity, kept for overload accounting
    util: float = 0.0  # ratio clamped to [0, 1]; what the power model sees
    power_w: float = 0.0
    inlet_temp_k: float = 0.0
    cpu_temp_k: float = 0.0

    def __post_init__(self):
        if self.freq_idx < 0:
            self.freq_idx = self.spec.max_freq_idx

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def capacity_mhz(self) -> float:
        return capacity_mhz(self.spec, self.freq_idx)


@dataclass
class VmState:
    spec: VmSpec
    demand_mhz: float = 0.0

    @property
    def id(self) -> str:
        return self.spec.id


@dataclass
class CoolingState:
    setpoint_k: float = 291.0
    cop: float = 1.0
    power_w: float = 0.0
    setpoint_range_k: tuple[float, float] = (285.0, 308.0)


@dataclass
class DataCentreState:
    hosts: list[HostState]
    vms: dict[str, VmState] = field(default_factory=dict)
    mapping: dict[str, str] = field(default_factory=dict)
    cooling: CoolingState = field(default_factory=CoolingState)
    clock_s: int = 0
    inlet_limit_k: float = DEFAULT_INLET_LIMIT_K
    _index: dict[str, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._index = {h.id: i for i, h in enumerate(self.hosts)}
        if len(self._index) != len(self.hosts):
            raise ValueError("duplicate host ids")

    def host(self, host_id: str) -> HostState:
        try:
            return self.hosts[self._index[host_id]]
        except KeyError:
            raise KeyError(f"unknown host {host_id!r}") from None

    def has_host(self, host_id: str) -> bool:
        return host_id in self._index

    def vm_ram(self, host: HostState) -> int:
        return sum(self.vms[v].spec.ram_mb for v in host.vms if v in self.vms)

    def ram_free(self, host: HostState) -> int:
        return host.spec.ram_mb - self.vm_ram(host)

    def active_hosts(self) -> list[HostState]:
        return [h for h in self.hosts if h.active]


@dataclass(frozen=True)
class Plan:
    migrations: tuple[tuple[str, str, str], ...] = ()  # (vm, src, dst)
    freq_assignment: dict[str, int] = field(default_factory=dict)
    setpoint_k: float | None = None
    placements: tuple[tuple[str, str], ...] = ()  # (vm, host) for unmapped VMs
    deactivations: tuple[str, ...] = ()  # hosts the plan expects to be empty afterwards
    stays: tuple[str, ...] = ()  # VMs the planner wanted to move but could not place
    thermal_violation: bool = False


def clone_twin(state: DataCentreState) -> DataCentreState:
    """Deep copy of the mutable parts; specs are frozen and shared."""
    hosts = [
        HostState(
            spec=h.spec, active=h.active, freq_idx=h.freq_idx, vms=set(h.vms),
            demand_mhz=h.demand_mhz, ratio=h.ratio, util=h.util, power_w=h.power_w,
            inlet_temp_k=h.inlet_temp_k, cpu_temp_k=h.cpu_temp_k,
        )
        for h in state.hosts
    ]
    c = state.cooling
    return DataCentreState(
        hosts=hosts,
        vms={k: VmState(v.spec, v.demand_mhz) for k, v in state.vms.items()},
        mapping=dict(state.mapping),
        cooling=CoolingState(c.setpoint_k, c.cop, c.power_w, tuple(c.setpoint_range_k)),
        clock_s=state.clock_s,
        inlet_limit_k=state.inlet_limit_k,
    )


class Violation(NamedTuple):
    kind: str
    subject: str
    detail: str


def validate(state: DataCentreState) -> list[Violation]:
    """Check the state invariants; returns one entry per broken invariant instance."""
    out: list[Violation] = []
    holders: dict[str, list[str]] = {}
    for h in state.hosts:
        for v in h.vms:
            holders.setdefault(v, []).append(h.id)

    for v in sorted(set(state.mapping) | set(holders)):
        mapped = state.mapping.get(v)
        held = sorted(holders.get(v, []))
        if v not in state.vms:
            out.append(Violation("unknown vm", v, f"vm {v} is mapped or hosted but not declared"))
        elif held != ([mapped] if mapped is not None else []):
            out.append(Violation(
                "mapping inconsistency", v,
                f"mapping says {mapped!r}, host sets contain it on {held}"))
        elif mapped is not None and not state.has_host(mapped):
            out.append(Violation("mapping inconsistency", v, f"mapped to unknown host {mapped!r}"))

    for h in state.hosts:
        if not 0 <= h.freq_idx < len(h.spec.freq_levels_ghz):
            out.append(Violation("frequency index", h.id, f"freq_idx {h.freq_idx} out of range"))
        if not h.active and h.vms:
            out.append(Violation("inactive host not empty", h.id, f"holds {sorted(h.vms)}"))
        if not h.active and h.power_w != 0:
            out.append(Violation("inactive host power", h.id, f"power_w={h.power_w}"))
        used = state.vm_ram(h)
        if used > h.spec.ram_mb:
            out.append(Violation("RAM oversubscription", h.id, f"{used} MB > {h.spec.ram_mb} MB"))
        if not 0.0 <= h.util <= 1.0:
            out.append(Violation("util out of range", h.id, f"util={h.util}"))

    c = state.cooling
    lo, hi = c.setpoint_range_k
    if not lo <= c.setpoint_k <= hi:
        out.append(Violation("setpoint out of range", "cooling", f"{c.setpoint_k} K not in [{lo}, {hi}]"))
    if c.cop <= 0:
        out.append(Violation("non-positive COP", "cooling", f"cop={c.cop}"))
    if c.power_w < 0:
        out.append(Violation("negative cooling power", "cooling", f"power_w={c.power_w}"))
    return out


def refresh_host(state: DataCentreState, host: HostState, power_model) -> None:
    """Recompute demand, ratio, util and power of ``host`` from its VMs.

    Demand is summed in id order so the planner's twin and the engine produce
    bit-identical figures for the same mapping.
    """
    host.demand_mhz = sum(state.vms[v].demand_mhz for v in sorted(host.vms))
    host.ratio = host.demand_mhz / capacity_mhz(host.spec, host.freq_idx)
    host.util = min(host.ratio, 1.0)
    host.power_w = power_model.power(host.util, host.freq_idx, host.spec) if host.active else 0.0
