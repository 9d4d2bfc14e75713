"""Command-line interface: sweep runner, single-shot optimizer, validation suite."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .channels import generate_channels, place_users
from .experiment import VARIANTS, cell_seed, parse_config, run_sweep, summarize
from .metrics import MODE_RELAXED, MODE_UNIT_MODULUS, per_bs_power
from .optimizer import OptimizerFailure, OptimizerOptions, run
from .validate import run_validation


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris-cellfree",
        description="Joint active/passive precoding simulator for RIS-aided "
                    "cell-free downlink networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the distance sweep from a config file")
    p_run.add_argument("--config", required=True, help="experiment config file")
    p_run.add_argument("--output", help="results CSV path (overrides config)")
    p_run.add_argument("--seed", type=int, help="override the root seed")
    p_run.add_argument("--trials", type=int, help="override trials per sweep point")
    p_run.add_argument("--workers", type=int, default=1,
                       help="parallel worker processes (default 1)")

    p_single = sub.add_parser("single", help="run one optimization with iteration trace")
    p_single.add_argument("--config", required=True)
    p_single.add_argument("--l-m", type=float, help="user-cluster distance (default: l_start_m)")
    p_single.add_argument("--variant", default="ideal-ris", choices=VARIANTS)
    p_single.add_argument("--seed", type=int, help="override the root seed")
    p_single.add_argument("--trial", type=int, default=0, help="trial index for the cell seed")

    p_val = sub.add_parser("validate", help="run the invariant suite on tiny instances")
    p_val.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    spec = parse_config(args.config)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed,
                       scenario=replace(spec.scenario, rng_seed=args.seed))
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    if args.output is not None:
        spec = replace(spec, output_path=args.output)
    if spec.output_path is None:
        print("error: no output path (use --output or the 'output' config key)",
              file=sys.stderr)
        return 2

    records, failures = run_sweep(spec, workers=max(1, args.workers),
                                  log=lambda msg: print(msg, flush=True))
    print()
    print(summarize(records), end="")
    print(f"\nwrote {len(records)} records to {spec.output_path}")
    if failures:
        print(f"{len(failures)} cell(s) failed:", file=sys.stderr)
        for msg in failures:
            print(f"  {msg}", file=sys.stderr)
        return 1
    return 0


def _cmd_single(args) -> int:
    spec = parse_config(args.config)
    seed_root = args.seed if args.seed is not None else spec.seed
    l_m = args.l_m if args.l_m is not None else spec.l_start
    seed = cell_seed(seed_root, 0, args.trial)

    scenario = replace(spec.scenario, user_circle_center=(l_m, 0.0), rng_seed=seed,
                       num_ris=0 if args.variant == "no-ris" else spec.scenario.num_ris)
    rng = np.random.default_rng(seed)
    positions = place_users(scenario, rng)
    channels = generate_channels(scenario, positions, rng)
    mode = MODE_UNIT_MODULUS if args.variant == "continuous-phase" else MODE_RELAXED
    options = OptimizerOptions(phase_mode=mode, trace=True)

    print(f"variant={args.variant}  L={l_m:g} m  seed={seed}")
    try:
        result = run(scenario, channels, options, rng)
    except OptimizerFailure as exc:
        print(f"optimizer failed: {exc}", file=sys.stderr)
        for i, value in enumerate(exc.wsr_trace, start=1):
            print(f"  iter {i:3d}  wsr={value:.6f}")
        return 1

    header = (f"{'iter':>4}  {'wsr':>12}  {'f(rho)':>12}  {'f(W)':>12}  "
              f"{'f(theta)':>12}  {'act':>4}  {'pas':>5}")
    print(header)
    for rec in result.records:
        print(f"{rec.iteration:>4}  {rec.wsr:>12.6f}  {rec.surrogate_after_rho:>12.6f}  "
              f"{rec.surrogate_after_active:>12.6f}  {rec.surrogate_after_passive:>12.6f}  "
              f"{rec.active_iterations:>4}  {rec.passive_iterations:>5}")
    powers = per_bs_power(result.precoder)
    print(f"\nfinal wsr = {result.wsr_trace[-1]:.6f} bit/s/Hz after "
          f"{result.iterations_used} iterations (converged={result.converged})")
    print("per-BS power:", " ".join(f"{p:.6f}" for p in powers))
    return 0


def _cmd_validate(args) -> int:
    results = run_validation(args.seed)
    width = max(len(name) for name, _, _ in results)
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name:<{width}}  {detail}")
        failed += 0 if ok else 1
    print(f"\n{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "single":
        return _cmd_single(args)
    return _cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
