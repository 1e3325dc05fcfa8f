"""Parametric power, cooling and thermal models.

Each model family has a small protocol so the policies never depend on a
concrete implementation. Registries map config names to factories; anything
registered there is run through the shared contract tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, runtime_checkable

from .domain import HostSpec

KELVIN_OFFSET = 273.15


# -- power -------------------------------------------------------------------

@dataclass(frozen=True)
class PowerModelParams:
    p_idle_w: float = 75.0
    p_max_w: float = 250.0

    def __post_init__(self):
        if not 0 < self.p_idle_w < self.p_max_w:
            raise ValueError("need 0 < p_idle_w < p_max_w")

    @classmethod
    def from_spec(cls, spec: HostSpec) -> PowerModelParams:
        return cls(spec.p_idle_w, spec.p_max_w)


def _check_util(util: float) -> None:
    if not 0.0 <= util <= 1.0:
        raise ValueError(f"util {util} outside [0, 1]")


def server_power(params: PowerModelParams, util: float, freq_idx: int, spec: HostSpec) -> float:
    """Idle floor plus dynamic power scaling with util and the square of the relative clock."""
    _check_util(util)
    rel = spec.freq_levels_ghz[freq_idx] / spec.f_max_ghz
    return params.p_idle_w + (params.p_max_w - params.p_idle_w) * util * rel * rel


@runtime_checkable
class PowerModel(Protocol):
    def power(self, util: float, freq_idx: int, spec: HostSpec) -> float: ...


@dataclass(frozen=True)
class QuadraticDvfsPower:
    """Default model; idle/max watts come from the host spec."""

    def power(self, util: float, freq_idx: int, spec: HostSpec) -> float:
        return server_power(PowerModelParams.from_spec(spec), util, freq_idx, spec)


@dataclass(frozen=True)
class CubicDvfsPower:
    """Dynamic power proportional to f^3 (voltage scaled with frequency)."""

    def power(self, util: float, freq_idx: int, spec: HostSpec) -> float:
        _check_util(util)
        rel = spec.freq_levels_ghz[freq_idx] / spec.f_max_ghz
        return spec.p_idle_w + (spec.p_max_w - spec.p_idle_w) * util * rel ** 3


# -- cooling -----------------------------------------------------------------

@dataclass(frozen=True)
class CoolingModelParams:
    # COP(T) = a*T^2 + b*T + c with T in Celsius
    cop_a: float = 0.0068
    cop_b: float = 0.0008
    cop_c: float = 0.458
    min_k: float = 285.0
    max_k: float = 308.0
    granularity_k: float = 0.5

    def __post_init__(self):
        if not self.min_k < self.max_k:
            raise ValueError("setpoint range needs min_k < max_k")
        if self.granularity_k <= 0:
            raise ValueError("granularity_k must be positive")
        for t in self.setpoint_grid():
            if cop(self, t) <= 0:
                raise ValueError(f"COP not positive at {t} K")

    def setpoint_grid(self) -> list[float]:
        n = int(math.floor((self.max_k - self.min_k) / self.granularity_k + 1e-9))
        return [self.min_k + i * self.granularity_k for i in range(n + 1)]


def cop(params: CoolingModelParams, setpoint_k: float) -> float:
    t = setpoint_k - KELVIN_OFFSET
    return params.cop_a * t * t + params.cop_b * t + params.cop_c


def _check_setpoint(params: CoolingModelParams, setpoint_k: float) -> None:
    if not params.min_k - 1e-9 <= setpoint_k <= params.max_k + 1e-9:
        raise ValueError(f"setpoint {setpoint_k} K outside [{params.min_k}, {params.max_k}]")


def cooling_power(params: CoolingModelParams, p_it_total_w: float, setpoint_k: float) -> tuple[float, float]:
    """Return ``(cop, watts)`` needed to remove ``p_it_total_w`` of heat."""
    _check_setpoint(params, setpoint_k)
    if p_it_total_w < 0:
        raise ValueError("IT power must be >= 0")
    c = cop(params, setpoint_k)
    return c, p_it_total_w / c


@runtime_checkable
class CoolingModel(Protocol):
    params: CoolingModelParams

    def cooling(self, p_it_total_w: float, setpoint_k: float) -> tuple[float, float]: ...

    def setpoint_grid(self) -> list[float]: ...


@dataclass(frozen=True)
class PolynomialCopCooling:
    params: CoolingModelParams = field(default_factory=CoolingModelParams)

    def cooling(self, p_it_total_w: float, setpoint_k: float) -> tuple[float, float]:
        return cooling_power(self.params, p_it_total_w, setpoint_k)

    def setpoint_grid(self) -> list[float]:
        return self.params.setpoint_grid()


@dataclass(frozen=True)
class LinearCopCooling:
    """COP rising linearly from ``cop_at_min`` to ``cop_at_max`` across the setpoint range."""

    params: CoolingModelParams = field(default_factory=CoolingModelParams)
    cop_at_min: float = 1.5
    cop_at_max: float = 8.0

    def cooling(self, p_it_total_w: float, setpoint_k: float) -> tuple[float, float]:
        p = self.params
        _check_setpoint(p, setpoint_k)
        if p_it_total_w < 0:
            raise ValueError("IT power must be >= 0")
        frac = (setpoint_k - p.min_k) / (p.max_k - p.min_k)
        c = self.cop_at_min + frac * (self.cop_at_max - self.cop_at_min)
        return c, p_it_total_w / c

    def setpoint_grid(self) -> list[float]:
        return self.params.setpoint_grid()


# -- thermal -----------------------------------------------------------------

@dataclass(frozen=True)
class ThermalModelParams:
    beta_k_per_w: float = 0.0008  # inlet rise per watt dissipated in the same rack
    r_thermal_k_per_w: float = 0.15

    def __post_init__(self):
        if self.beta_k_per_w < 0 or self.r_thermal_k_per_w < 0:
            raise ValueError("thermal coefficients must be >= 0")


def rack_powers(host_powers: Sequence[float], racks: Sequence[str]) -> dict[str, float]:
    totals: dict[str, float] = {}
    for p, r in zip(host_powers, racks):
        totals[r] = totals.get(r, 0.0) + p
    return totals


def inlet_temps(params: ThermalModelParams, setpoint_k: float,
                host_powers: Sequence[float], racks: Sequence[str]) -> list[float]:
    """Supply air plus recirculated heat from the host's own rack."""
    if any(p < 0 for p in host_powers):
        raise ValueError("host powers must be >= 0")
    totals = rack_powers(host_powers, racks)
    return [setpoint_k + params.beta_k_per_w * totals[r] for r in racks]


def cpu_temp(params: ThermalModelParams, inlet_k: float, server_power_w: float) -> float:
    if server_power_w < 0:
        raise ValueError("power must be >= 0")
    return inlet_k + params.r_thermal_k_per_w * server_power_w


@runtime_checkable
class ThermalModel(Protocol):
    """Inlets must depend only on the powers of hosts sharing a rack."""

    def inlet_temps(self, setpoint_k: float, host_powers: Sequence[float],
                    racks: Sequence[str]) -> list[float]: ...

    def cpu_temp(self, inlet_k: float, server_power_w: float, spec: HostSpec) -> float: ...


@dataclass(frozen=True)
class RackRecirculationThermal:
    params: ThermalModelParams = field(default_factory=ThermalModelParams)

    def inlet_temps(self, setpoint_k, host_powers, racks):
        return inlet_temps(self.params, setpoint_k, host_powers, racks)

    def cpu_temp(self, inlet_k, server_power_w, spec):
        p = ThermalModelParams(self.params.beta_k_per_w, spec.r_thermal_k_per_w)
        return cpu_temp(p, inlet_k, server_power_w)


@dataclass(frozen=True)
class HottestSpotThermal:
    """Rack-local variant where the inlet rise grows with the rack's hottest host as well as its total."""

    params: ThermalModelParams = field(default_factory=ThermalModelParams)
    hotspot_k_per_w: float = 0.004

    def inlet_temps(self, setpoint_k, host_powers, racks):
        if any(p < 0 for p in host_powers):
            raise ValueError("host powers must be >= 0")
        totals = rack_powers(host_powers, racks)
        peak: dict[str, float] = {}
        for p, r in zip(host_powers, racks):
            peak[r] = max(peak.get(r, 0.0), p)
        return [setpoint_k + self.params.beta_k_per_w * totals[r] + self.hotspot_k_per_w * peak[r]
                for r in racks]

    def cpu_temp(self, inlet_k, server_power_w, spec):
        p = ThermalModelParams(self.params.beta_k_per_w, spec.r_thermal_k_per_w)
        return cpu_temp(p, inlet_k, server_power_w)


# -- facility ----------------------------------------------------------------

def pue(p_it: float, p_cool: float, p_other: float = 0.0) -> float:
    if p_it <= 0:
        raise ValueError("PUE undefined for zero IT power")
    if p_cool < 0 or p_other < 0:
        raise ValueError("cooling and other power must be >= 0")
    return (p_it + p_cool + p_other) / p_it


@dataclass(frozen=True)
class Models:
    power: PowerModel = field(default_factory=QuadraticDvfsPower)
    cooling: CoolingModel = field(default_factory=PolynomialCopCooling)
    thermal: ThermalModel = field(default_factory=RackRecirculationThermal)


POWER_MODELS: dict[str, Callable[[], PowerModel]] = {
    "quadratic": QuadraticDvfsPower,
    "cubic": CubicDvfsPower,
}
COOLING_MODELS: dict[str, Callable[[CoolingModelParams], CoolingModel]] = {
    "polynomial": lambda p: PolynomialCopCooling(p),
    "linear": lambda p: LinearCopCooling(p),
}
THERMAL_MODELS: dict[str, Callable[[ThermalModelParams], ThermalModel]] = {
    "rack_recirculation": lambda p: RackRecirculationThermal(p),
    "hottest_spot": lambda p: HottestSpotThermal(p),
}


def build_models(power: str = "quadratic", cooling: str = "polynomial",
                 thermal: str = "rack_recirculation",
                 cooling_params: CoolingModelParams | None = None,
                 thermal_params: ThermalModelParams | None = None) -> Models:
    try:
        return Models(
            power=POWER_MODELS[power](),
            cooling=COOLING_MODELS[cooling](cooling_params or CoolingModelParams()),
            thermal=THERMAL_MODELS[thermal](thermal_params or ThermalModelParams()),
        )
    except KeyError as exc:
        raise ValueError(f"unknown model kind {exc.args[0]!r}") from None
