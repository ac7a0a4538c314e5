"""Command-line driver: single solves, Monte Carlo sweeps, hotspot load
curves and exhaustive-search comparisons, all written as CSV."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bandwidth import BandwidthInstance, optimal_bandwidth, recover_bw_integer, solve_bw_relaxed
from .config import ConfigError, ExperimentConfig, load_config
from .hotspot import load_stage, solve_hotspot
from .model import evaluate
from .oracles import (EnumerationLimit, baseline_no_migration, baseline_radio_oriented, exhaustive_assignment,
                      exhaustive_bandwidth)
from .pipeline import solve_jmh
from .scenario import generate

EXIT_OK, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2

SWEEP_COLUMNS = ["axis_value", "scheme", "mean_utility", "stderr", "mean_sum_rate", "mean_cost",
                 "mean_migrated_pct", "mean_gap_to_ub"]
SCHEMES = ["no_migration", "proposed", "radio_oriented", "upper_bound"]
AXES = {"users": "n_users", "degradation": "degradation", "vmax": "v_max", "lambda": "cost_weight",
        "users_rb": "n_users"}


@dataclass(frozen=True)
class Outcome:
    """One scheme's result on one trial; ``sum_rate`` and ``cost`` are unweighted."""

    utility: float
    sum_rate: float = float("nan")
    cost: float = float("nan")
    migrated_pct: float = float("nan")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "" if np.isnan(x) else format(float(x), ".12g")


def _migrated(assignment, initial) -> float:
    return 100.0 * float(assignment.migrated(initial).mean())


def _rb_outcome(bi: BandwidthInstance, assignment) -> Outcome:
    alloc = optimal_bandwidth(bi, assignment)
    inst = bi.with_bandwidth(alloc.b)
    obj = evaluate(inst, assignment)
    return Outcome(obj.utility, obj.sum_rate, obj.total_cost, _migrated(assignment, bi.initial))


def run_trial(cfg: ExperimentConfig, seed: int) -> tuple:
    """All schemes on one generated instance; returns ``(outcomes, converged)``."""
    scenario = generate(cfg.scenario, seed)
    inst = scenario.instance
    if cfg.scenario.orthogonal_rb:
        bi = BandwidthInstance.from_scenario(scenario)
        relaxed = solve_bw_relaxed(bi, cfg.solver)
        assignment, alloc, _ = recover_bw_integer(bi, relaxed.fractional)
        out = {
            "proposed": _rb_outcome(bi, assignment),
            "upper_bound": Outcome(max(relaxed.fractional.upper_bound, bi.value(assignment, alloc.b))),
            "no_migration": _rb_outcome(bi, baseline_no_migration(inst)[0]),
            "radio_oriented": _rb_outcome(bi, baseline_radio_oriented(inst)[0]),
        }
        return out, relaxed.converged and relaxed.fractional.converged
    assignment, report, _ = solve_jmh(inst, cfg.solver)
    out = {"proposed": Outcome(report.utility, report.sum_rate, report.total_cost, report.migrated_pct),
           "upper_bound": Outcome(report.upper_bound)}
    for name, baseline in (("no_migration", baseline_no_migration), ("radio_oriented", baseline_radio_oriented)):
        a, _ = baseline(inst)
        obj = evaluate(inst, a)
        out[name] = Outcome(obj.utility, obj.sum_rate, obj.total_cost, _migrated(a, inst.initial))
    return out, report.converged


def _trial_job(args):
    cfg, seed = args
    return run_trial(cfg, seed)


def run_trials(cfg: ExperimentConfig, seed: int, trials: int, workers: int = 1) -> list:
    """Trial i uses seed ``seed + i``; results come back in trial order."""
    jobs = [(cfg, seed + i) for i in range(trials)]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_trial_job, jobs))
    return [_trial_job(job) for job in jobs]


def summarize(axis_value, results: list) -> list:
    """Per-scheme means and standard errors over trials, as CSV rows."""
    rows = []
    for scheme in SCHEMES:
        vals = [r[0][scheme] for r in results]
        util = np.array([v.utility for v in vals])
        ub = np.array([r[0]["upper_bound"].utility for r in results])
        stderr = float(util.std(ddof=1) / np.sqrt(util.size)) if util.size > 1 else 0.0
        gap = (ub - util) / np.abs(ub)
        rows.append([axis_value, scheme, util.mean(), stderr,
                     np.mean([v.sum_rate for v in vals]), np.mean([v.cost for v in vals]),
                     np.mean([v.migrated_pct for v in vals]), gap.mean()])
    return rows


def write_csv(path, header: list, rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _with_lambda(cfg: ExperimentConfig, lam) -> ExperimentConfig:
    if lam is None:
        return cfg
    return replace(cfg, scenario=replace(cfg.scenario, cost_weight=lam),
                   hotspot=replace(cfg.hotspot, cost_weight=lam))


def _parse_values(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--values", f"expected comma-separated numbers, got {text!r}") from None


def _parse_range(text: str, default: tuple) -> range:
    if text is None:
        lo, hi = default
    else:
        try:
            lo, hi = (int(v) for v in text.split(":"))
        except ValueError:
            raise ConfigError("--k-range", f"expected LO:HI, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise ConfigError("--k-range", "need 0 <= LO <= HI")
    return range(lo, hi + 1)


def cmd_solve(args, cfg: ExperimentConfig) -> int:
    cfg = replace(cfg, scenario=replace(cfg.scenario, trials=1))
    outcomes, converged = run_trial(cfg, args.seed)
    prop, ub = outcomes["proposed"], outcomes["upper_bound"].utility
    lines = [f"seed {args.seed}: K={cfg.scenario.n_users} N={cfg.scenario.n_bs} "
             f"lambda={cfg.scenario.cost_weight:g}",
             f"utility           {prop.utility:.6e}",
             f"sum offload rate  {prop.sum_rate:.6e}",
             f"weighted cost     {cfg.scenario.cost_weight * prop.cost:.6e}",
             f"upper bound       {ub:.6e}",
             f"gap to bound      {(ub - prop.utility) / abs(ub):.3e}",
             f"migrated users    {prop.migrated_pct:.1f}%",
             f"converged         {converged}"]
    if args.oracle:
        scenario = generate(cfg.scenario, args.seed)
        if cfg.scenario.orthogonal_rb:
            best = exhaustive_bandwidth(BandwidthInstance.from_scenario(scenario))[2]
        else:
            best = exhaustive_assignment(scenario.instance)[1]
        lines.append(f"exhaustive optimum {best:.6e} (gap {(best - prop.utility) / abs(best):.3e})")
    for name in ("no_migration", "radio_oriented"):
        lines.append(f"{name:<17} {outcomes[name].utility:.6e}")
    print("\n".join(lines))
    if args.out:
        write_csv(args.out, SWEEP_COLUMNS, summarize(args.seed, [(outcomes, converged)]))
    if not converged and not args.allow_nonconverged:
        print("solver did not converge (use --allow-nonconverged to accept)", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    if args.axis not in AXES:
        raise ConfigError("--axis", f"unknown axis {args.axis!r}; choose from {', '.join(AXES)}")
    values = _parse_values(args.values)
    if not values:
        raise ConfigError("--values", "no values given")
    trials = args.trials if args.trials is not None else cfg.scenario.trials
    if trials < 1:
        raise ConfigError("--trials", "must be at least 1")
    rows = []
    all_converged = True
    for value in sorted(set(values)):
        field = AXES[args.axis]
        v = int(value) if field == "n_users" else value
        changes = {field: v, "trials": trials}
        if args.axis == "users_rb":
            changes["orthogonal_rb"] = True
        try:
            scenario = replace(cfg.scenario, **changes)
        except ValueError as exc:
            raise ConfigError(args.axis, str(exc)) from None
        results = run_trials(replace(cfg, scenario=scenario), args.seed, trials, args.workers)
        all_converged &= all(r[1] for r in results)
        rows.extend(summarize(v, results))
    text = write_csv(args.out, SWEEP_COLUMNS, rows)
    if not args.out:
        sys.stdout.write(text)
    if not all_converged and not args.allow_nonconverged:
        print("some trials did not converge (use --allow-nonconverged to accept)", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_hotspot(args, cfg: ExperimentConfig) -> int:
    hs = cfg.hotspot
    rows = []
    for K in _parse_range(args.k_range, (hs.k_min, hs.k_max)):
        loads, report = solve_hotspot(hs.instance(K), cfg.solver)
        stage = load_stage(loads, report.one_sided, report.k_star)
        rows.append([K, report.regime, stage, report.utility, ";".join(str(int(v)) for v in loads),
                     ";".join(format(v, ".6g") for v in report.one_sided), report.k_star])
    header = ["n_users", "regime", "stage", "utility", "loads", "one_sided_loads", "k_star"]
    text = write_csv(args.out, header, rows)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(args, cfg: ExperimentConfig) -> int:
    trials = args.trials if args.trials is not None else 1
    rows = []
    for i in range(trials):
        seed = args.seed + i
        scenario = generate(cfg.scenario, seed)
        outcomes, _ = run_trial(cfg, seed)
        if cfg.scenario.orthogonal_rb:
            best = exhaustive_bandwidth(BandwidthInstance.from_scenario(scenario))[2]
        else:
            best = exhaustive_assignment(scenario.instance)[1]
        prop = outcomes["proposed"].utility
        rows.append([seed, prop, best, outcomes["upper_bound"].utility, (best - prop) / abs(best)])
    text = write_csv(args.out, ["seed", "proposed", "exhaustive", "upper_bound", "rel_gap"], rows)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jmh", description="Joint migration and handover optimizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (defaults if omitted)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--lambda", dest="lam", type=float, help="override the cost weight")
        p.add_argument("--allow-nonconverged", action="store_true",
                       help="exit 0 even if the solver flags non-convergence")

    p = sub.add_parser("solve", help="solve one generated instance")
    common(p)
    p.add_argument("--oracle", action="store_true", help="also run exhaustive search")
    p = sub.add_parser("sweep", help="Monte Carlo sweep over one parameter")
    common(p)
    p.add_argument("--axis", required=True, help="users | degradation | vmax | lambda | users_rb")
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("hotspot", help="hotspot utility and loads versus the number of users")
    common(p)
    p.add_argument("--k-range", help="LO:HI inclusive (default from config)")
    p = sub.add_parser("oracle", help="proposed versus exhaustive search on small instances")
    common(p)
    p.add_argument("--trials", type=int)
    return parser


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "hotspot": cmd_hotspot, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _with_lambda(load_config(args.config), args.lam)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
