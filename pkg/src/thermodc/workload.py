"""Bitbrains GWA-T-12 style traces and synthetic business-critical workloads."""

from __future__ import annotations

import bisect
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .domain import DemandSample, VmSpec

HEADER = (
    "Timestamp", "CPU cores", "CPU capacity provisioned [MHZ]", "CPU usage [MHZ]",
    "CPU usage [%]", "Memory capacity provisioned [KB]", "Memory usage [KB]",
    "Disk read [KB/s]", "Disk write [KB/s]", "Net recv [KB/s]", "Net transmit [KB/s]",
)
N_COLUMNS = len(HEADER)
DAY_S = 86400


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class DemandSeries:
    """Demand of one VM over time; timestamps are relative to ``epoch_s``."""

    vm_id: str
    samples: tuple[DemandSample, ...]
    cores: int = 1
    cpu_capacity_mhz: float = 2400.0
    mem_capacity_kb: float = 4096 * 1024
    epoch_s: int = 0
    _times: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise ValueError(f"{self.vm_id}: no samples")
        times = tuple(s.t_s for s in samples)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"{self.vm_id}: timestamps must be strictly increasing")
        object.__setattr__(self, "_times", times)

    @property
    def ram_mb(self) -> int:
        return int(math.ceil(self.mem_capacity_kb / 1024))

    def vm_spec(self) -> VmSpec:
        return VmSpec(self.vm_id, self.cores, self.ram_mb)


def demand_at(series: DemandSeries, t_s: float) -> DemandSample:
    """Zero-order hold lookup, clamped to the first and last samples."""
    i = bisect.bisect_right(series._times, t_s) - 1
    return series.samples[max(i, 0)]


# -- trace I/O ---------------------------------------------------------------

def _num(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise TraceFormatError(f"not a number: {text!r}", line, column) from None
    if not math.isfinite(value) or value < 0:
        raise TraceFormatError(f"expected a finite non-negative number, got {text!r}", line, column)
    return value


def parse_trace(stream: TextIO | str, vm_id: str = "vm") -> DemandSeries:
    """Parse one semicolon-separated trace; the first line is a header."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    samples: list[DemandSample] = []
    first: tuple[int, float, float] | None = None
    epoch = 0
    prev_ts: int | None = None
    for lineno, raw in enumerate(stream, start=1):
        if lineno == 1:
            continue
        if not raw.strip():
            continue
        fields = [f.strip() for f in raw.rstrip("\r\n").split(";")]
        if len(fields) != N_COLUMNS:
            raise TraceFormatError(f"expected {N_COLUMNS} fields, got {len(fields)}", lineno)
        vals = [_num(f, lineno, HEADER[i]) for i, f in enumerate(fields)]
        ts = vals[0]
        if ts != int(ts):
            raise TraceFormatError(f"timestamp must be integral, got {fields[0]!r}", lineno, HEADER[0])
        ts = int(ts)
        if prev_ts is not None and ts <= prev_ts:
            raise TraceFormatError(f"timestamp {ts} not after {prev_ts}", lineno, HEADER[0])
        prev_ts = ts
        if first is None:
            if vals[1] != int(vals[1]) or vals[1] < 1:
                raise TraceFormatError(f"core count must be a positive integer, got {fields[1]!r}",
                                       lineno, HEADER[1])
            first = (int(vals[1]), vals[2], vals[5])
            epoch = ts
        samples.append(DemandSample(
            t_s=ts - epoch, cpu_mhz=vals[3], mem_kb=vals[6],
            disk_rd_kbs=vals[7], disk_wr_kbs=vals[8], net_rx_kbs=vals[9], net_tx_kbs=vals[10],
        ))
    if first is None:
        raise TraceFormatError("no samples")
    return DemandSeries(vm_id, tuple(samples), cores=first[0], cpu_capacity_mhz=first[1],
                        mem_capacity_kb=first[2], epoch_s=epoch)


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def serialize_trace(series: DemandSeries, stream: TextIO | None = None) -> str:
    """Write ``series`` in the format ``parse_trace`` reads; returns the text."""
    out = io.StringIO()
    out.write(";".join(HEADER) + "\n")
    cap = series.cpu_capacity_mhz
    for s in series.samples:
        pct = 100.0 * s.cpu_mhz / cap if cap > 0 else 0.0
        row = (series.epoch_s + s.t_s, series.cores, cap, s.cpu_mhz, pct, series.mem_capacity_kb,
               s.mem_kb, s.disk_rd_kbs, s.disk_wr_kbs, s.net_rx_kbs, s.net_tx_kbs)
        out.write(";".join(_fmt(v) for v in row) + "\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def load_trace_dir(path: str | Path) -> list[DemandSeries]:
    """One VM per ``*.csv`` file, id taken from the file stem, in name order."""
    files = sorted(Path(path).glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no .csv traces in {path}")
    series = []
    for f in files:
        with f.open(encoding="utf-8") as fh:
            try:
                series.append(parse_trace(fh, vm_id=f.stem))
            except TraceFormatError as exc:
                raise TraceFormatError(f"{f.name}: {exc}") from None
    return series


def write_trace_dir(series: Iterable[DemandSeries], path: str | Path) -> list[Path]:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    written = []
    for s in series:
        f = path / f"{s.vm_id}.csv"
        f.write_text(serialize_trace(s), encoding="utf-8")
        written.append(f)
    return written


# -- synthetic workloads -----------------------------------------------------

@dataclass(frozen=True)
class Flavor:
    cores: int
    ram_mb: int


DEFAULT_FLAVORS: tuple[Flavor, ...] = (Flavor(1, 4096), Flavor(2, 8192), Flavor(4, 16384))


@dataclass(frozen=True)
class BurstParams:
    rate_per_day: float = 2.0
    duration_s: int = 1800
    peak_to_mean: float = 8.0  # burst level relative to the VM's nominal mean
    min_bursts: int = 1

    def __post_init__(self):
        if self.rate_per_day < 0 or self.duration_s <= 0 or self.min_bursts < 0:
            raise ValueError("burst rate/min_bursts must be >= 0 and duration > 0")
        if not 1.0 <= self.peak_to_mean <= 100.0:
            raise ValueError("peak_to_mean must lie in [1, 100]")


@dataclass(frozen=True)
class SynthParams:
    flavors: tuple[Flavor, ...] = DEFAULT_FLAVORS
    sample_interval_s: int = 300
    mips_per_core: float = 2400.0
    base_util: float = 0.1  # nominal mean demand as a fraction of flavor capacity
    level_spread: float = 0.5  # per-VM level multiplier drawn from 1 +/- spread
    diurnal_amplitude: float = 0.5
    peak_hour: float = 14.0
    noise_sigma: float = 0.15
    mem_util: float = 0.6
    stress_factor: float = 1.5
    epoch_s: int = 1376314800

    def __post_init__(self):
        if not self.flavors:
            raise ValueError("at least one flavor is required")
        if self.sample_interval_s <= 0 or self.mips_per_core <= 0:
            raise ValueError("sample_interval_s and mips_per_core must be positive")
        if not 0 < self.base_util <= 1:
            raise ValueError("base_util must lie in (0, 1]")
        if not 0 <= self.level_spread < 1 or not 0 <= self.diurnal_amplitude <= 1:
            raise ValueError("level_spread must lie in [0, 1) and diurnal_amplitude in [0, 1]")
        if self.noise_sigma < 0 or not 0 <= self.mem_util <= 1 or self.stress_factor < 1:
            raise ValueError("invalid noise_sigma, mem_util or stress_factor")


def flavor_counts(n_vms: int, mix: Sequence[float]) -> list[int]:
    """Split ``n_vms`` over the mix weights by largest remainder."""
    total = float(sum(mix))
    exact = [n_vms * w / total for w in mix]
    counts = [int(math.floor(e)) for e in exact]
    order = sorted(range(len(mix)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n_vms - sum(counts)]:
        counts[i] += 1
    return counts


def synth_workload(seed: int, n_vms: int, duration_s: int,
                   flavor_mix: Sequence[float] = (3, 2, 1),
                   burst: BurstParams | None = None,
                   params: SynthParams | None = None) -> list[DemandSeries]:
    """Diurnal low-level demand with Poisson rectangular bursts, one series per VM."""
    burst = burst or BurstParams()
    params = params or SynthParams()
    if n_vms < 1:
        raise ValueError("n_vms must be >= 1")
    if duration_s < params.sample_interval_s:
        raise ValueError("duration must cover at least one sample interval")
    if len(flavor_mix) != len(params.flavors):
        raise ValueError(f"flavor_mix has {len(flavor_mix)} weights for {len(params.flavors)} flavors")
    if any(w < 0 for w in flavor_mix) or sum(flavor_mix) <= 0:
        raise ValueError("flavor_mix weights must be >= 0 with a positive sum")

    flavors = [f for f, c in zip(params.flavors, flavor_counts(n_vms, flavor_mix)) for _ in range(c)]
    t = np.arange(0, duration_s, params.sample_interval_s, dtype=np.int64)
    diurnal = 1.0 + params.diurnal_amplitude * np.cos(
        2 * np.pi * (t / DAY_S - params.peak_hour / 24.0))
    width = len(str(n_vms - 1))
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_vms)]

    out = []
    for i, (flavor, rng) in enumerate(zip(flavors, rngs)):
        cap = flavor.cores * params.mips_per_core
        level = cap * params.base_util * rng.uniform(1 - params.level_spread, 1 + params.level_spread)
        sig = params.noise_sigma
        noise = rng.lognormal(-sig * sig / 2, sig, size=len(t)) if sig > 0 else np.ones(len(t))
        cpu = level * diurnal * noise

        n_bursts = max(int(rng.poisson(burst.rate_per_day * duration_s / DAY_S)), burst.min_bursts)
        starts = rng.uniform(0, duration_s, size=n_bursts)
        span = max(1, int(round(burst.duration_s / params.sample_interval_s)))
        peak = burst.peak_to_mean * level
        for s in np.sort(starts):
            i0 = int(s // params.sample_interval_s)
            cpu[i0:i0 + span] = np.maximum(cpu[i0:i0 + span], peak)
        cpu = np.minimum(cpu, cap * params.stress_factor)

        ram_kb = flavor.ram_mb * 1024
        mem = np.minimum(ram_kb * params.mem_util * rng.lognormal(0, 0.05, size=len(t)), ram_kb)
        io_scale = cpu / cap
        disk_rd = rng.exponential(50.0, size=len(t)) * io_scale
        disk_wr = rng.exponential(30.0, size=len(t)) * io_scale
        net_rx = rng.exponential(20.0, size=len(t)) * io_scale
        net_tx = rng.exponential(20.0, size=len(t)) * io_scale

        samples = tuple(
            DemandSample(int(t[k]), round(float(cpu[k]), 3), round(float(mem[k]), 1),
                         round(float(disk_rd[k]), 3), round(float(disk_wr[k]), 3),
                         round(float(net_rx[k]), 3), round(float(net_tx[k]), 3))
            for k in range(len(t))
        )
        out.append(DemandSeries(f"vm{i:0{width}d}", samples, cores=flavor.cores,
                                cpu_capacity_mhz=float(cap),
                                mem_capacity_kb=float(ram_kb), epoch_s=params.epoch_s))
    return out
