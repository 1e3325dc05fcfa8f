"""Command-line front end: ``thermodc run | compare | gen-workload | default-config``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .config import ConfigError, RunConfig, SynthSection, load_config, with_overrides
from .engine import InfeasibleStart, PlanError, RunResult, run, write_intervals_csv
from .policies import Policy
from .workload import TraceFormatError, synth_workload, write_trace_dir

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("thermodc")


def _run_policy(cfg: RunConfig, policy_cfg, seed: int | None = None) -> RunResult:
    setup = cfg.setup()
    return run(setup, cfg.workloads(seed), Policy(policy_cfg.policy_config(), setup.models))


def _write_run(result: RunResult, out: Path, config_echo: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_intervals_csv(result.intervals, out / "intervals.csv")
    metrics.write_summary(result.summary, out / "summary.json", config_echo)


def _summary_line(name: str, s: metrics.RunSummary) -> str:
    return (f"{name}: total={s.total_energy_kwh:.3f} kWh it={s.it_energy_kwh:.3f} kWh "
            f"cooling={s.cooling_energy_kwh:.3f} kWh pue={s.mean_pue:.4f} "
            f"migrations={s.total_migrations} overload={s.overload_interval_fraction:.4f} "
            f"inlet_violations={s.inlet_violation_count}")


def cmd_run(args) -> int:
    cfg = with_overrides(load_config(args.config), args.seed, args.policy)
    result = _run_policy(cfg, cfg.policy)
    _write_run(result, Path(args.out), cfg.echo())
    if not args.quiet:
        print(_summary_line(cfg.policy.criterion, result.summary))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = with_overrides(load_config(args.config), args.seed, args.policy)
    out = Path(args.out)
    seeds = list(cfg.run.seeds) if cfg.run.seeds else [cfg.run.seed]
    names = list(cfg.compare.policies)
    base = cfg.compare.baseline

    per_seed: dict[int, dict[str, metrics.ComparisonReport]] = {}
    runs: dict[str, metrics.RunSummary] = {}
    for seed in seeds:
        summaries = {}
        for name in names:
            pcfg = cfg.compare.policies[name]
            if args.policy is not None:
                pcfg = pcfg.model_copy(update={"criterion": args.policy})
            result = _run_policy(cfg, pcfg, seed)
            run_dir = out / name if len(seeds) == 1 else out / name / f"seed{seed}"
            echo = cfg.echo()
            echo["policy"] = pcfg.model_dump(mode="json")
            echo["run"]["seed"] = seed
            _write_run(result, run_dir, echo)
            summaries[name] = result.summary
            runs[name if len(seeds) == 1 else f"{name}@{seed}"] = result.summary
        per_seed[seed] = {n: metrics.compare(summaries[n], summaries[base]) for n in names}

    reports = {n: metrics.mean_report([per_seed[s][n] for s in seeds]) for n in names}
    doc = metrics.ComparisonDoc(base, runs, reports, per_seed if len(seeds) > 1 else {})
    (out / "comparison.json").write_text(metrics.dumps(doc.to_dict(cfg.echo())), encoding="utf-8")

    if not args.quiet:
        print(f"{'policy':<16}{'total':>10}{'IT':>10}{'cooling':>10}{'dPUE':>9}{'dmig':>7}  (vs {base})")
        for n in names:
            r = reports[n]
            print(f"{n:<16}{metrics.fmt_pct(r.total_energy_pct):>10}{metrics.fmt_pct(r.it_energy_pct):>10}"
                  f"{metrics.fmt_pct(r.cooling_energy_pct):>10}{r.delta_pue:>+9.4f}{r.delta_migrations:>+7.0f}")
    return EXIT_OK


def cmd_gen_workload(args) -> int:
    synth = SynthSection()
    duration, seed = 86400, 42
    if args.config is not None:
        cfg = load_config(args.config)
        synth = cfg.workload.synth or synth
        duration, seed = cfg.run.duration_s, cfg.run.seed
    updates = {}
    if args.n_vms is not None:
        updates["n_vms"] = args.n_vms
    if args.flavor_mix is not None:
        try:
            updates["flavor_mix"] = tuple(float(x) for x in args.flavor_mix.split(","))
        except ValueError:
            raise ConfigError([f"--flavor-mix: expected comma-separated numbers, got {args.flavor_mix!r}"])
    if updates:
        try:
            synth = SynthSection.model_validate({**synth.model_dump(), **updates})
        except Exception as exc:
            raise ConfigError([str(exc)]) from None
    duration = args.duration_s if args.duration_s is not None else duration
    seed = args.seed if args.seed is not None else seed
    try:
        series = synth_workload(seed, synth.n_vms, duration, synth.flavor_mix,
                                synth.burst_params(), synth.params())
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    files = write_trace_dir(series, args.out)
    if not args.quiet:
        print(f"wrote {len(files)} traces to {args.out}")
    return EXIT_OK


def cmd_default_config(args) -> int:
    doc = RunConfig().echo()
    doc["workload"]["synth"] = SynthSection().model_dump(mode="json")
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermodc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override run.seed")
        sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("run", help="simulate one policy")
    common(sp)
    sp.add_argument("--policy", default=None, help="override policy.criterion")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="simulate every configured policy on the same workload")
    common(sp)
    sp.add_argument("--policy", default=None, help="force one criterion on every configured policy")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("gen-workload", help="write synthetic traces in Bitbrains format")
    common(sp, config_required=False)
    sp.add_argument("--n-vms", type=int, default=None)
    sp.add_argument("--duration-s", type=int, default=None)
    sp.add_argument("--flavor-mix", default=None, help="weights, e.g. 3,2,1")
    sp.set_defaults(func=cmd_gen_workload)

    sp = sub.add_parser("default-config", help="print the default configuration")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_default_config)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if getattr(args, "quiet", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.problems:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleStart, PlanError, TraceFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
