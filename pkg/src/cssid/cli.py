"""Command-line front end: simulate, identify, montecarlo, bias, validate.

Every subcommand reads/writes flat files (scenario JSON, trajectory CSV,
estimate JSON, summary CSV).  Floats are serialized with 17 significant
digits, so a file round trip reproduces in-process results bit for bit.
Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures (with a
single machine-readable JSON error line on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import harness, simulator
from .estimators import build_regression


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cssid",
        description="Constrained least-squares identification of state-space models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a scenario record to CSV")
    p_sim.add_argument("--scenario", required=True,
                       help="scenario JSON path or builtin name "
                            f"({', '.join(simulator.BUILTIN_SCENARIOS)})")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_sim.add_argument("--kind", choices=["id", "val"], default="id")
    p_sim.add_argument("--out", required=True, help="output directory")

    p_id = sub.add_parser("identify", help="fit an estimator on a simulated record")
    p_id.add_argument("--method", required=True,
                      help="ls | cls | rcls-relaxed | rcls | rwls | rwcls")
    p_id.add_argument("--data", required=True,
                      help="directory written by 'simulate' (trajectory.csv + scenario.json)")
    p_id.add_argument("--mu", type=float, default=None, help="relaxation weight")
    p_id.add_argument("--lambda", dest="lam", type=float, default=None,
                      help="forgetting factor")
    p_id.add_argument("--constraint", choices=["known", "uncertain"], default="known")
    p_id.add_argument("--out", required=True, help="estimate JSON path")

    p_mc = sub.add_parser("montecarlo", help="run a Monte Carlo validation study")
    p_mc.add_argument("--scenario", required=True)
    p_mc.add_argument("--runs", type=int, required=True)
    p_mc.add_argument("--methods", required=True,
                      help="comma list, options after colons: "
                           "ls,cls,rcls-relaxed:mu=5e4:constraint=uncertain")
    p_mc.add_argument("--base-seed", type=int, default=None)
    p_mc.add_argument("--n-id", type=int, default=None)
    p_mc.add_argument("--n-val", type=int, default=None)
    p_mc.add_argument("--out", required=True, help="output directory")

    p_bias = sub.add_parser("bias", help="empirical LS bias study")
    p_bias.add_argument("--scenario", required=True)
    p_bias.add_argument("--runs", type=int, required=True)
    p_bias.add_argument("--base-seed", type=int, default=None)
    p_bias.add_argument("--out", required=True, help="report CSV path")

    p_val = sub.add_parser("validate", help="free-run an estimate on validation data")
    p_val.add_argument("--estimate", required=True, help="estimate JSON path")
    p_val.add_argument("--scenario", required=True)
    p_val.add_argument("--n-val", type=int, default=None)
    p_val.add_argument("--out", required=True, help="result JSON path")
    return parser


def _load_scenario_arg(arg: str) -> simulator.ScenarioSpec:
    return simulator.load_scenario(arg)


def _cmd_simulate(args) -> int:
    spec = _load_scenario_arg(args.scenario)
    if args.seed is not None:
        spec = simulator.with_seed(spec, args.seed)
    traj = simulator.simulate_scenario(spec, kind=args.kind)
    os.makedirs(args.out, exist_ok=True)
    simulator.save_trajectory_csv(traj, os.path.join(args.out, "trajectory.csv"))
    simulator.save_scenario(spec, os.path.join(args.out, "scenario.json"))
    print(f"wrote {os.path.join(args.out, 'trajectory.csv')} "
          f"({traj.N} steps, n={traj.n}, p={traj.p})")
    return 0


def _cmd_identify(args) -> int:
    spec = simulator.load_scenario(os.path.join(args.data, "scenario.json"))
    traj = simulator.load_trajectory_csv(os.path.join(args.data, "trajectory.csv"))
    reg = build_regression(traj)
    ms = harness.MethodSpec(name=args.method, mu=args.mu, lam=args.lam,
                            constraint=args.constraint)
    est, _ = harness.fit_method(reg, ms, spec,
                                harness._draw_theta0(spec, spec.seed))
    harness.save_estimate(est, args.out)
    print(f"wrote {args.out} (method={est.method})")
    return 0


def _cmd_montecarlo(args) -> int:
    spec = _load_scenario_arg(args.scenario)
    methods = [harness.parse_method_spec(tok) for tok in args.methods.split(",") if tok]
    config = harness.MonteCarloConfig(
        scenario=spec, runs=args.runs, methods=methods,
        base_seed=args.base_seed, N_id=args.n_id, N_val=args.n_val,
    )
    if spec.mode_windows is not None:
        summary = harness.monte_carlo_tv(config)
    else:
        summary = harness.monte_carlo(config)
    os.makedirs(args.out, exist_ok=True)
    summary_path = os.path.join(args.out, "summary.csv")
    harness.summary_to_csv(summary, summary_path)
    harness.histograms_to_csv(summary, os.path.join(args.out, "histograms.csv"))
    print(f"wrote {summary_path} ({summary.runs} runs, "
          f"{len(summary.labels)} methods)")
    if int(summary.failures.sum()):
        print(f"warning: {int(summary.failures.sum())} estimator failures", file=sys.stderr)
    return 0


def _cmd_bias(args) -> int:
    spec = _load_scenario_arg(args.scenario)
    study = harness.bias_study(spec, args.runs, base_seed=args.base_seed)
    harness.bias_to_csv(study, args.out)
    print(f"wrote {args.out} ({study.n_flagged} of {len(study.component)} "
          "components flagged)")
    return 0


def _cmd_validate(args) -> int:
    est = harness.load_estimate(args.estimate)
    spec = _load_scenario_arg(args.scenario)
    n_val = args.n_val or harness.DEFAULT_VALIDATION_STEPS
    val_traj = simulator.simulate_scenario(
        replace(spec, N=n_val), kind="val",
        seed=spec.seed + simulator.VALIDATION_SEED_OFFSET, with_noise=False)
    xh = harness.free_run(est, val_traj.x[0], n_val, val_traj.u)
    per_state = harness.rmse(val_traj.x[1:], xh[1:])
    result = {
        "method": est.method,
        "scenario": spec.name,
        "n_val": n_val,
        "rmse": per_state.tolist(),
        "constraint_residual": est.constraint_residual,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.out} (rmse={np.array2string(per_state, precision=4)})")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "identify": _cmd_identify,
    "montecarlo": _cmd_montecarlo,
    "bias": _cmd_bias,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
