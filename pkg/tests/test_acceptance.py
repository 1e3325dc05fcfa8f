"""Acceptance criteria, each checked at its stated tolerance.

Every test records a single ``criterion N: PASS|FAIL`` line; the lines are
printed in the pytest terminal summary (and immediately with ``-s``).
"""

from __future__ import annotations

import random
import time
from fractions import Fraction

import pytest

from thermodc.domain import DemandSample, HostSpec
from thermodc.engine import EngineConfig, SimSetup, run, write_intervals_csv
from thermodc.metrics import dumps, summary_to_dict
from thermodc.models import Models
from thermodc.policies import PolicyConfig, Policy, choose_frequency, place_bfd
from thermodc.workload import DemandSeries, TraceFormatError, HEADER, parse_trace, serialize_trace, synth_workload

from conftest import ACCEPTANCE_LINES
from oracle import build_twin, oracle_bfd, random_instance

DAY = 86400
NIGHT_END_S = 6 * 3600


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def timed_run(setup, workloads, cfg):
    t0 = time.perf_counter()
    result = run(setup, workloads, Policy(cfg, setup.models))
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def scenario():
    """Desk-scale scenario: 200 hosts in 5 racks of 40, 180 VMs (3:2:1), 24 h, seed 42."""
    setup = SimSetup(n_hosts=200, hosts_per_rack=40, engine=EngineConfig(duration_s=DAY, interval_s=300))
    workloads = synth_workload(42, 180, DAY, flavor_mix=(3, 2, 1))
    runs = {
        "integrated": PolicyConfig(),
        "min_power": PolicyConfig.baseline("MinPowerIncrease"),
        "max_power": PolicyConfig.baseline("MaxPowerIncrease"),
        "no_migration": PolicyConfig(migrations_enabled=False),
    }
    out = {name: timed_run(setup, workloads, cfg) for name, cfg in runs.items()}
    out["setup"], out["workloads"] = setup, workloads
    return out


# 1 ---------------------------------------------------------------------------

def test_criterion_1_pue_endpoints():
    # every host holds one 4-core VM at half load: full DC, steady moderate load
    workloads = [DemandSeries(f"vm{i:03d}", (DemandSample(0, 4800.0),), cores=4,
                              cpu_capacity_mhz=9600.0, mem_capacity_kb=16384 * 1024.0)
                 for i in range(200)]
    setup = SimSetup(n_hosts=200, hosts_per_rack=40, engine=EngineConfig(duration_s=3600))
    t0 = time.perf_counter()
    pues = {}
    for sp in (291.0, 303.0):
        r = run(setup, workloads, Policy(PolicyConfig(fixed_setpoint_k=sp, dvfs_enabled=False), setup.models))
        t_c = sp - 273.15
        cop = 0.0068 * t_c ** 2 + 0.0008 * t_c + 0.458
        pues[sp] = (r.summary.mean_pue, 1 + 1 / cop)
    elapsed = time.perf_counter() - t0
    lo, hi = pues[291.0][0], pues[303.0][0]
    ok = (1.36 <= lo <= 1.40 and 1.14 <= hi <= 1.18 and elapsed < 5.0
          and all(abs(p - ref) <= 1e-9 for p, ref in pues.values()))
    verdict(1, ok, f"PUE@291K={lo:.4f} in [1.36,1.40], PUE@303K={hi:.4f} in [1.14,1.18], "
                   f"closed-form COP agrees, {elapsed:.2f}s < 5s")


# 2 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_2_headline_direction(scenario):
    (integ, t_i), (base, t_b) = scenario["integrated"], scenario["min_power"]
    a, b = integ.summary, base.summary
    total = 100 * (a.total_energy_kwh - b.total_energy_kwh) / b.total_energy_kwh
    cooling = 100 * (a.cooling_energy_kwh - b.cooling_energy_kwh) / b.cooling_energy_kwh
    slowest = max(scenario[k][1] for k in ("integrated", "min_power", "max_power", "no_migration"))
    ok = total <= -5.0 and cooling <= -25.0 and a.mean_pue < b.mean_pue and slowest < 60.0
    verdict(2, ok, f"total {total:+.2f}% (<= -5%), cooling {cooling:+.2f}% (<= -25%), "
                   f"PUE {a.mean_pue:.4f} < {b.mean_pue:.4f}, slowest run {slowest:.1f}s < 60s")


# 3 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_3_inlet_cap(scenario):
    integ, _ = scenario["integrated"]
    worst = max(m.max_inlet_k for m in integ.intervals)
    ok = worst <= 303.0 and integ.summary.inlet_violation_count == 0
    verdict(3, ok, f"max inlet {worst:.6f} K <= 303.0 over {len(integ.intervals)} intervals, "
                   f"{integ.summary.inlet_violation_count} violations")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_bfd_oracle():
    t0 = time.perf_counter()
    agree, steps, binding = 0, 0, 0
    seen_criteria = set()
    for seed in range(1000):
        hosts, vms, to_place, kw = random_instance(random.Random(seed))
        seen_criteria.add(kw["criterion"])
        expected = oracle_bfd(hosts, vms, to_place, **kw)
        if kw["criterion"] == "IntegratedFreqUtil":
            binding += expected != oracle_bfd(hosts, vms, to_place, **{**kw, "limit": float("inf")})
        twin, models = build_twin(hosts, vms, kw["beta"], kw["setpoint"])
        cfg = PolicyConfig(overload_threshold=kw["threshold"], underload_threshold=0.05,
                           criterion=kw["criterion"], dvfs_enabled=kw["dvfs"])
        got = place_bfd(to_place, twin, cfg, models, origins=kw["origins"], exclude=kw["exclude"],
                        allow_activation=kw["allow_activation"], strict=False)
        agree += got == [(v, h) for v, h in expected if h is not None]
        steps += len(expected)
    elapsed = time.perf_counter() - t0
    ok = agree == 1000 and len(seen_criteria) == 3 and elapsed < 10.0
    verdict(4, ok, f"{agree}/1000 instances ({steps} placement steps) match the exhaustive scan, "
                   f"inlet rule decisive in {binding}, {elapsed:.2f}s < 10s")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_dvfs_minimal_monotone():
    spec = HostSpec("h")
    cfg = PolicyConfig()
    thr = Fraction(str(cfg.overload_threshold))
    levels = [Fraction(str(f)) for f in spec.freq_levels_ghz]
    caps = [spec.cores * Fraction(str(spec.mips_per_core)) * f / levels[-1] for f in levels]
    prev, bad = -1, []
    for d in range(0, 9601, 10):
        idx = choose_frequency(spec, float(d), cfg)
        fits = [i for i, c in enumerate(caps) if c * thr >= d]
        want = fits[0] if fits else len(levels) - 1
        if idx != want or idx < prev:
            bad.append(d)
        prev = idx
    examples = (spec.freq_levels_ghz[choose_frequency(spec, 6000.0, cfg)],
                spec.freq_levels_ghz[choose_frequency(spec, 8000.0, cfg)])
    ok = not bad and examples == (1.73, 2.26)
    verdict(5, ok, f"961 demands checked against exact arithmetic, {len(bad)} wrong; "
                   f"6000->{examples[0]} GHz, 8000->{examples[1]} GHz")


# 6 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_conservation_and_determinism(scenario, tmp_path):
    worst = 0.0
    for name in ("integrated", "min_power", "max_power", "no_migration"):
        r, _ = scenario[name]
        dt = scenario["setup"].engine.interval_s
        joules = sum((m.p_it_w + m.p_cool_w + m.p_other_w) * dt for m in r.intervals)
        worst = max(worst, abs(r.summary.total_energy_kwh - joules / 3.6e6) / (joules / 3.6e6))
    first, _ = scenario["integrated"]
    again, _ = timed_run(scenario["setup"], scenario["workloads"], PolicyConfig())
    same_csv = write_intervals_csv(first.intervals) == write_intervals_csv(again.intervals)
    same_json = dumps(summary_to_dict(first.summary)) == dumps(summary_to_dict(again.summary))
    ok = worst <= 1e-9 and same_csv and same_json
    verdict(6, ok, f"max relative energy error {worst:.2e} <= 1e-9, "
                   f"intervals.csv identical={same_csv}, summary.json identical={same_json}")


# 7 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_consolidation_at_night(scenario):
    def night_mean(name):
        r, _ = scenario[name]
        night = [m.active_hosts for m in r.intervals if m.t_s < NIGHT_END_S]
        return sum(night) / len(night)

    control = night_mean("no_migration")
    means = {n: night_mean(n) for n in ("min_power", "max_power", "integrated")}
    ok = all(m < control for m in means.values())
    detail = ", ".join(f"{n}={m:.1f}" for n, m in means.items())
    verdict(7, ok, f"night mean active hosts {detail} < no-migration {control:.1f}")


# 8 ---------------------------------------------------------------------------

GOOD = "1376314846;1;2926;146.3;5.0;1048576;524288;0;0;10;12"
MALFORMED = [
    ("1376315146;1;2926;146.3;5.0;1048576;524288;0;0;10", 3),  # 10 fields
    ("1376315146;1;2926;146.3;5.0;1048576;524288;0;0;10;12;7", 3),  # 12 fields
    ("1376315146;1;2926;abc;5.0;1048576;524288;0;0;10;12", 3),
    ("1376315146;1;2926;;5.0;1048576;524288;0;0;10;12", 3),
    ("1376315146;1;2926;-1;5.0;1048576;524288;0;0;10;12", 3),
    ("1376315146.5;1;2926;1;5.0;1048576;524288;0;0;10;12", 3),
    ("1376314846;1;2926;1;5.0;1048576;524288;0;0;10;12", 3),  # repeated timestamp
    ("1376315146;1;2926;1;5.0;1048576;nan;0;0;10;12", 3),
]


def test_criterion_8_trace_round_trip():
    series = synth_workload(2024, 100, DAY)
    exact = sum(parse_trace(serialize_trace(s), s.vm_id) == s for s in series)
    text_stable = sum(serialize_trace(parse_trace(serialize_trace(s), s.vm_id)) == serialize_trace(s)
                      for s in series)
    head = ";".join(HEADER)
    located = 0
    for row, line in MALFORMED:
        try:
            parse_trace("\n".join([head, GOOD, row, GOOD.replace("846", "999")]) + "\n")
        except TraceFormatError as exc:
            located += exc.line == line and f"line {line}" in str(exc)
    ok = exact == 100 and text_stable == 100 and located == len(MALFORMED)
    verdict(8, ok, f"{exact}/100 files round-trip exactly, {located}/{len(MALFORMED)} malformed "
                   f"fixtures report the right line")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
