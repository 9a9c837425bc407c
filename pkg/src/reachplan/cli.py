"""Command-line front end: run scenarios (single or sweep), emit trace CSVs,
metrics JSON, and a summary report; export tidy per-figure plot data.

Exit codes: 0 success, 2 planner abort during a run, 3 configuration error.
Sweep runs execute in a process pool; ``PLANNER_THREADS`` caps the pool size.
"""

from __future__ import annotations

import argparse
import csv
import json
import multiprocessing as mp
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from reachplan.planner import PlannerConfig
from reachplan.sim import (
    SCENARIOS,
    VARIANTS,
    Scenario,
    compute_metrics,
    highway_cutin,
    read_trace_csv,
    run_closed_loop,
    write_trace_csv,
)

VARIANT_ALIASES = {
    "proposed": "proposed",
    "det": "deterministic_barrier",
    "deterministic_barrier": "deterministic_barrier",
    "worst": "worst_case_barrier",
    "worst_case_barrier": "worst_case_barrier",
}

_CONFIG_FIELDS = {f.name for f in fields(PlannerConfig)}


class ConfigError(Exception):
    pass


def _load_scenario(spec: str) -> Scenario:
    if spec in SCENARIOS:
        return SCENARIOS[spec]()
    path = Path(spec)
    if not path.exists():
        raise ConfigError(
            f"scenario {spec!r} is neither a library name "
            f"({', '.join(sorted(SCENARIOS))}) nor an existing file")
    try:
        return Scenario.from_json(path.read_text())
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"{path}: malformed scenario: {e}") from e


def _parse_sweep(expr: str):
    """``key=a:b:step`` -> (key, [values]); endpoint inclusive."""
    try:
        key, rng = expr.split("=", 1)
        lo, hi, step = (float(x) for x in rng.split(":"))
    except ValueError as e:
        raise ConfigError(f"bad sweep expression {expr!r}, "
                          f"expected key=a:b:step") from e
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad sweep range in {expr!r}")
    n = int(round((hi - lo) / step)) + 1
    vals = [lo + i * step for i in range(n) if lo + i * step <= hi + 1e-9]
    return key.strip(), vals


def _sweep_scenario(base: Scenario, key: str, value: float) -> Scenario:
    if key == "headway":
        if base.name != "highway_cutin":
            raise ConfigError("headway sweep applies to the highway_cutin "
                              "scenario only")
        return highway_cutin(headway=value, duration=base.duration)
    raise ConfigError(f"unknown scenario sweep key {key!r}")


def _run_one(scenario_json: str, config_dict: dict, variant: str, seed: int,
             out_dir: str, run_id: str, debug_residuals: bool) -> dict:
    """Worker: one closed-loop run, all files written under out_dir."""
    scenario = Scenario.from_json(scenario_json)
    config = PlannerConfig(**config_dict)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    res = run_closed_loop(scenario, config, variant, seed=seed,
                          collect_plans=debug_residuals)
    trace, metrics = res[0], res[1]
    plans = res[2] if debug_residuals else None

    header = "\n".join([
        f"run_id: {run_id}",
        f"variant: {variant}",
        f"seed: {seed}",
        "config: " + json.dumps(config_dict, sort_keys=True),
        "scenario: " + json.dumps(json.loads(scenario_json), sort_keys=True),
    ])
    trace_path = out / f"trace_{run_id}.csv"
    write_trace_csv(trace, str(trace_path), header_comment=header)

    # metrics are recomputed from the emitted file so that re-reading the
    # trace reproduces metrics.json exactly
    metrics = compute_metrics(read_trace_csv(str(trace_path)), config.dt)
    (out / f"metrics_{run_id}.json").write_text(metrics.to_json())

    if debug_residuals and plans is not None:
        with open(out / f"residuals_{run_id}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "converged", "iterations",
                        "kinematic", "obstacle", "consensus",
                        "consensus_deriv", "inequality"])
            for step, p in enumerate(plans):
                if p is None or not p.residual_history:
                    w.writerow([step, 0, 0, "", "", "", "", ""])
                    continue
                h = p.residual_history[-1]
                w.writerow([step, int(p.converged), p.iterations,
                            *(f"{h[k]:.9e}" for k in
                              ("kinematic", "obstacle", "consensus",
                               "consensus_deriv", "inequality"))])

    d = asdict(metrics)
    d["run_id"] = run_id
    d["variant"] = variant
    d["seed"] = seed
    return d


def _write_report(rows: list[dict], path: Path) -> None:
    by_variant: dict[str, list[dict]] = {}
    for r in rows:
        by_variant.setdefault(r["variant"], []).append(r)
    lines = [
        "# Run summary",
        "",
        "| variant | runs | collisions | P_c | min d_min [m] | mean v [m/s] "
        "| mean solve [ms] | fallbacks |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for variant in VARIANTS:
        rs = by_variant.get(variant)
        if not rs:
            continue
        n = len(rs)
        ncol = sum(1 for r in rs if r["collided"])
        lines.append(
            f"| {variant} | {n} | {ncol} | {ncol / n:.3f} "
            f"| {min(r['d_min'] for r in rs):.3f} "
            f"| {np.mean([r['v_mean'] for r in rs]):.2f} "
            f"| {np.mean([r['t_solve_mean'] for r in rs]) * 1e3:.1f} "
            f"| {sum(r['n_fallbacks'] for r in rs)} |")
    lines += ["", "## Runs", "",
              "| run | collided | d_min [m] | v_mean [m/s] | solve [ms] |",
              "|---|---|---|---|---|"]
    for r in sorted(rows, key=lambda r: r["run_id"]):
        lines.append(f"| {r['run_id']} | {r['collided']} | {r['d_min']:.3f} "
                     f"| {r['v_mean']:.2f} | {r['t_solve_mean'] * 1e3:.1f} |")
    path.write_text("\n".join(lines) + "\n")


def cmd_run(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
        if args.variant not in VARIANT_ALIASES:
            raise ConfigError(f"unknown variant {args.variant!r}, expected "
                              f"one of {sorted(VARIANT_ALIASES)}")
        variant = VARIANT_ALIASES[args.variant]
        config = PlannerConfig()

        jobs = []  # (scenario, config, variant, seed, run_id)
        sweeps = [("", None)]
        if args.sweep:
            key, vals = _parse_sweep(args.sweep)
            sweeps = [(key, v) for v in vals]
        for key, val in sweeps:
            sc, cfg = scenario, config
            tag = ""
            if key:
                if key in _CONFIG_FIELDS:
                    field_type = type(getattr(config, key))
                    cfg = replace(config, **{key: field_type(val)})
                else:
                    sc = _sweep_scenario(scenario, key, val)
                tag = f"_{key}{val:g}"
            for rep in range(args.repeat):
                seed = args.seed + rep
                run_id = f"{sc.name}_{args.variant}{tag}_seed{seed}"
                jobs.append((sc.to_json(), asdict(cfg), variant, seed,
                             args.out, run_id, args.debug_residuals))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3

    try:
        if len(jobs) == 1:
            rows = [_run_one(*jobs[0])]
        else:
            workers = int(os.environ.get("PLANNER_THREADS", 0)) or os.cpu_count() or 1
            workers = min(workers, len(jobs))
            # spawn + single-threaded BLAS: parallelism comes from the pool,
            # nested BLAS threads would oversubscribe the cores
            os.environ.setdefault("OMP_NUM_THREADS", "1")
            os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
            ctx = mp.get_context("spawn")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                rows = list(pool.map(_run_one, *zip(*jobs)))
    except Exception as e:  # noqa: BLE001 - any planner abort maps to exit 2
        print(f"planner abort: {type(e).__name__}: {e}", file=sys.stderr)
        return 2

    out = Path(args.out)
    _write_report(rows, out / "report.md")
    (out / "metrics.json").write_text(json.dumps(rows, indent=2))
    for r in rows:
        flag = "COLLIDED" if r["collided"] else "ok"
        print(f"{r['run_id']}: {flag} d_min={r['d_min']:.3f} "
              f"v_mean={r['v_mean']:.2f} solve={r['t_solve_mean'] * 1e3:.1f}ms")
    return 0


def cmd_export(args) -> int:
    src = Path(args.trace_dir)
    traces = sorted(src.glob("trace_*.csv"))
    if not traces:
        print(f"no trace_*.csv files in {src}", file=sys.stderr)
        return 3
    out = Path(args.out or src)
    out.mkdir(parents=True, exist_ok=True)

    def writer(name, cols):
        f = open(out / name, "w", newline="")
        w = csv.writer(f)
        w.writerow(cols)
        return f, w

    f_traj, w_traj = writer("trajectories.csv", ["run", "t", "actor", "x", "y"])
    f_speed, w_speed = writer("speed.csv", ["run", "t", "v"])
    f_acc, w_acc = writer("accel.csv", ["run", "t", "ax", "ay", "a_bound"])
    f_dmin, w_dmin = writer("dmin.csv", ["run", "t", "d_min"])
    f_vol, w_vol = writer("intent_volume.csv", ["run", "t", "hv_id",
                                                "volume", "triggered"])
    a_bound = PlannerConfig().a_max
    for path in traces:
        run = path.stem[len("trace_"):]
        for rec in read_trace_csv(str(path)):
            w_traj.writerow([run, f"{rec.t:.6f}", "ev",
                             f"{rec.ev_state[0]:.9f}", f"{rec.ev_state[1]:.9f}"])
            for i in range(rec.hv_states.shape[0]):
                w_traj.writerow([run, f"{rec.t:.6f}", f"hv{i}",
                                 f"{rec.hv_states[i, 0]:.9f}",
                                 f"{rec.hv_states[i, 1]:.9f}"])
            w_speed.writerow([run, f"{rec.t:.6f}", f"{rec.ev_state[4]:.9f}"])
            w_acc.writerow([run, f"{rec.t:.6f}", f"{rec.ev_state[5]:.9f}",
                            f"{rec.ev_state[6]:.9f}", f"{a_bound:.9f}"])
            w_dmin.writerow([run, f"{rec.t:.6f}", f"{rec.d_min:.9f}"])
            for i, vol in enumerate(rec.intent_volumes):
                w_vol.writerow([run, f"{rec.t:.6f}", i, f"{vol:.9f}",
                                int(rec.triggers[i])])
    for f in (f_traj, f_speed, f_acc, f_dmin, f_vol):
        f.close()
    print(f"exported plot data for {len(traces)} trace(s) to {out}")
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="reachplan",
        description="Contingency planning with learned reachable-set barriers")
    sub = p.add_subparsers(dest="cmd", required=True)

    pr = sub.add_parser("run", help="run one scenario or a sweep")
    pr.add_argument("--scenario", required=True,
                    help="library name or scenario JSON path")
    pr.add_argument("--variant", default="proposed",
                    help="proposed | det | worst (or full names)")
    pr.add_argument("--seed", type=int, default=1)
    pr.add_argument("--out", default="runs")
    pr.add_argument("--sweep", default="",
                    help="key=a:b:step, e.g. headway=4.5:5.5:0.1 or N_s=5:20:5")
    pr.add_argument("--repeat", type=int, default=1)
    pr.add_argument("--debug-residuals", action="store_true")
    pr.set_defaults(func=cmd_run)

    pe = sub.add_parser("export_plot_data",
                        help="tidy per-figure CSVs from a trace directory")
    pe.add_argument("trace_dir")
    pe.add_argument("--out", default="")
    pe.set_defaults(func=cmd_export)

    args = p.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
