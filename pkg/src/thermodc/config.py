"""Run configuration: strict JSON schema and conversion to simulation objects."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .domain import XEON_E5620_LEVELS, HostSpec
from .engine import EngineConfig, SimSetup
from .models import (
    COOLING_MODELS,
    POWER_MODELS,
    THERMAL_MODELS,
    CoolingModelParams,
    Models,
    ThermalModelParams,
    build_models,
)
from .policies import Criterion, PolicyConfig
from .workload import BurstParams, DemandSeries, Flavor, SynthParams, load_trace_dir, synth_workload


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` holds one human-readable line per issue."""

    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatacenterSection(_Strict):
    n_hosts: int = Field(200, ge=1)
    hosts_per_rack: int = Field(40, ge=1)
    cores: int = Field(4, ge=1)
    mips_per_core: float = Field(2400.0, gt=0)
    ram_mb: int = Field(16384, gt=0)
    freq_levels_ghz: tuple[float, ...] = XEON_E5620_LEVELS
    p_idle_w: float = Field(75.0, gt=0)
    p_max_w: float = Field(250.0, gt=0)
    r_thermal_k_per_w: float = Field(0.15, ge=0)
    storage_gb: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _check(self):
        self.host_template()
        return self

    def host_template(self) -> HostSpec:
        return HostSpec("template", cores=self.cores, mips_per_core=self.mips_per_core,
                        ram_mb=self.ram_mb, freq_levels_ghz=self.freq_levels_ghz,
                        p_idle_w=self.p_idle_w, p_max_w=self.p_max_w,
                        r_thermal_k_per_w=self.r_thermal_k_per_w, storage_gb=self.storage_gb)


class PowerSection(_Strict):
    kind: str = "quadratic"

    @model_validator(mode="after")
    def _check(self):
        if self.kind not in POWER_MODELS:
            raise ValueError(f"unknown power model {self.kind!r}; choose from {sorted(POWER_MODELS)}")
        return self


class CoolingSection(_Strict):
    kind: str = "polynomial"
    cop_a: float = 0.0068
    cop_b: float = 0.0008
    cop_c: float = 0.458
    min_k: float = 285.0
    max_k: float = 308.0
    granularity_k: float = Field(0.5, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.kind not in COOLING_MODELS:
            raise ValueError(f"unknown cooling model {self.kind!r}; choose from {sorted(COOLING_MODELS)}")
        self.params()
        return self

    def params(self) -> CoolingModelParams:
        return CoolingModelParams(self.cop_a, self.cop_b, self.cop_c, self.min_k, self.max_k,
                                  self.granularity_k)


class ThermalSection(_Strict):
    kind: str = "rack_recirculation"
    beta_k_per_w: float = Field(0.0008, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if self.kind not in THERMAL_MODELS:
            raise ValueError(f"unknown thermal model {self.kind!r}; choose from {sorted(THERMAL_MODELS)}")
        return self


class ModelsSection(_Strict):
    power: PowerSection = PowerSection()
    cooling: CoolingSection = CoolingSection()
    thermal: ThermalSection = ThermalSection()


class FlavorSection(_Strict):
    cores: int = Field(ge=1)
    ram_mb: int = Field(gt=0)


class BurstSection(_Strict):
    rate_per_day: float = Field(2.0, ge=0)
    duration_s: int = Field(1800, gt=0)
    peak_to_mean: float = Field(8.0, ge=1, le=100)
    min_bursts: int = Field(1, ge=0)


class SynthSection(_Strict):
    n_vms: int = Field(180, ge=1)
    flavor_mix: tuple[float, ...] = (3, 2, 1)
    flavors: tuple[FlavorSection, ...] = (
        FlavorSection(cores=1, ram_mb=4096),
        FlavorSection(cores=2, ram_mb=8192),
        FlavorSection(cores=4, ram_mb=16384),
    )
    sample_interval_s: int = Field(300, gt=0)
    base_util: float = Field(0.1, gt=0, le=1)
    level_spread: float = Field(0.5, ge=0, lt=1)
    diurnal_amplitude: float = Field(0.5, ge=0, le=1)
    peak_hour: float = Field(14.0, ge=0, lt=24)
    noise_sigma: float = Field(0.15, ge=0)
    mem_util: float = Field(0.6, ge=0, le=1)
    stress_factor: float = Field(1.5, ge=1)
    burst: BurstSection = BurstSection()

    @model_validator(mode="after")
    def _check(self):
        if len(self.flavor_mix) != len(self.flavors):
            raise ValueError(f"flavor_mix has {len(self.flavor_mix)} weights for {len(self.flavors)} flavors")
        if any(w < 0 for w in self.flavor_mix) or sum(self.flavor_mix) <= 0:
            raise ValueError("flavor_mix weights must be >= 0 with a positive sum")
        return self

    def params(self, mips_per_core: float = 2400.0) -> SynthParams:
        return SynthParams(
            flavors=tuple(Flavor(f.cores, f.ram_mb) for f in self.flavors),
            sample_interval_s=self.sample_interval_s, mips_per_core=mips_per_core,
            base_util=self.base_util, level_spread=self.level_spread,
            diurnal_amplitude=self.diurnal_amplitude, peak_hour=self.peak_hour,
            noise_sigma=self.noise_sigma, mem_util=self.mem_util, stress_factor=self.stress_factor,
        )

    def burst_params(self) -> BurstParams:
        b = self.burst
        return BurstParams(b.rate_per_day, b.duration_s, b.peak_to_mean, b.min_bursts)


class WorkloadSection(_Strict):
    trace_dir: Optional[str] = None
    synth: Optional[SynthSection] = None

    @model_validator(mode="after")
    def _check(self):
        if self.trace_dir is not None and self.synth is not None:
            raise ValueError("give either trace_dir or synth, not both")
        return self


class PolicySection(_Strict):
    overload_threshold: float = Field(0.9, gt=0, le=1)
    underload_threshold: float = Field(0.3, gt=0, lt=1)
    criterion: Literal["MinPowerIncrease", "MaxPowerIncrease", "IntegratedFreqUtil"] = "IntegratedFreqUtil"
    fixed_setpoint_k: Optional[float] = None
    dvfs_enabled: bool = True
    inlet_limit_k: float = Field(303.0, gt=0)
    migrations_enabled: bool = True

    @model_validator(mode="after")
    def _check(self):
        if not self.underload_threshold < self.overload_threshold:
            raise ValueError("underload_threshold must be below overload_threshold")
        return self

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(**self.model_dump())


class RunSection(_Strict):
    duration_s: int = Field(86400, gt=0)
    interval_s: int = Field(300, gt=0)
    seed: int = 42
    seeds: Optional[tuple[int, ...]] = None
    migration_bandwidth_mb_s: Optional[float] = Field(125.0, gt=0)  # null = instantaneous
    p_other_fraction: float = Field(0.0, ge=0)
    initial_setpoint_k: float = 291.0

    @model_validator(mode="after")
    def _check(self):
        if self.duration_s < self.interval_s:
            raise ValueError("duration_s must be at least one interval")
        return self


def _default_policies() -> dict[str, PolicySection]:
    return {
        "min_power": PolicySection(criterion="MinPowerIncrease", dvfs_enabled=False, fixed_setpoint_k=291.0),
        "max_power": PolicySection(criterion="MaxPowerIncrease", dvfs_enabled=False, fixed_setpoint_k=291.0),
        "integrated": PolicySection(criterion="IntegratedFreqUtil"),
    }


class CompareSection(_Strict):
    baseline: str = "min_power"
    policies: dict[str, PolicySection] = Field(default_factory=_default_policies)

    @model_validator(mode="after")
    def _check(self):
        if not self.policies:
            raise ValueError("at least one policy is required")
        if self.baseline not in self.policies:
            raise ValueError(f"baseline {self.baseline!r} is not among the configured policies")
        return self


class RunConfig(_Strict):
    datacenter: DatacenterSection = DatacenterSection()
    models: ModelsSection = ModelsSection()
    workload: WorkloadSection = WorkloadSection()
    policy: PolicySection = PolicySection()
    run: RunSection = RunSection()
    compare: CompareSection = CompareSection()

    @model_validator(mode="after")
    def _check(self):
        lo, hi = self.models.cooling.min_k, self.models.cooling.max_k
        for name, p in [("policy", self.policy)] + [(f"compare.policies.{k}", v)
                                                     for k, v in self.compare.policies.items()]:
            if p.fixed_setpoint_k is not None and not lo <= p.fixed_setpoint_k <= hi:
                raise ValueError(f"{name}.fixed_setpoint_k {p.fixed_setpoint_k} outside [{lo}, {hi}]")
        if not lo <= self.run.initial_setpoint_k <= hi:
            raise ValueError(f"run.initial_setpoint_k outside [{lo}, {hi}]")
        return self

    # -- conversions --

    def build_models(self) -> Models:
        m = self.models
        return build_models(m.power.kind, m.cooling.kind, m.thermal.kind, m.cooling.params(),
                            ThermalModelParams(m.thermal.beta_k_per_w,
                                               self.datacenter.r_thermal_k_per_w))

    def engine_config(self) -> EngineConfig:
        r = self.run
        bw = math.inf if r.migration_bandwidth_mb_s is None else r.migration_bandwidth_mb_s
        return EngineConfig(r.duration_s, r.interval_s, bw, r.p_other_fraction, r.initial_setpoint_k)

    def setup(self) -> SimSetup:
        d = self.datacenter
        return SimSetup(d.n_hosts, d.hosts_per_rack, d.host_template(), self.build_models(),
                        self.engine_config())

    def workloads(self, seed: int | None = None) -> list[DemandSeries]:
        if self.workload.trace_dir is not None:
            return load_trace_dir(self.workload.trace_dir)
        synth = self.workload.synth or SynthSection()
        return synth_workload(self.run.seed if seed is None else seed, synth.n_vms,
                              self.run.duration_s, synth.flavor_mix, synth.burst_params(),
                              synth.params(self.datacenter.mips_per_core))

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def _line_of(text: str, loc: tuple) -> int | None:
    """Best-effort line number of the key path ``loc`` inside the JSON text."""
    pos = 0
    found = None
    for part in loc:
        if not isinstance(part, str):
            continue
        i = text.find(f'"{part}"', pos)
        if i < 0:
            break
        pos = i
        found = text.count("\n", 0, i) + 1
    return found


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno}, column {exc.colno}: invalid JSON: {exc.msg}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["line 1: top level must be a JSON object"])
    trace_dir = (raw.get("workload") or {}).get("trace_dir") if isinstance(raw.get("workload"), dict) else None
    if isinstance(trace_dir, str) and base_dir is not None and not Path(trace_dir).is_absolute():
        raw["workload"]["trace_dir"] = str((Path(base_dir) / trace_dir).resolve())
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            field = ".".join(str(p) for p in loc) or "<root>"
            line = _line_of(text, loc)
            where = f"line {line}: " if line else ""
            problems.append(f"{where}{field}: {err['msg']}")
        raise ConfigError(problems) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    return parse_config(text, base_dir=path.parent)


def with_overrides(cfg: RunConfig, seed: int | None = None, criterion: str | None = None) -> RunConfig:
    data = cfg.model_dump()
    if seed is not None:
        data["run"]["seed"] = seed
        data["run"]["seeds"] = None
    if criterion is not None:
        try:
            Criterion(criterion)
        except ValueError:
            raise ConfigError([f"--policy: unknown criterion {criterion!r}; choose from "
                               f"{[c.value for c in Criterion]}"]) from None
        data["policy"]["criterion"] = criterion
    return RunConfig.model_validate(data)
