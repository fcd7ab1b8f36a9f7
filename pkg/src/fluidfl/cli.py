"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis
from .config import parse_config_file
from .errors import ConfigError, FluidError
from .experiment import (resolve_out_dir, run_experiment, sweep_straggler_ratio,
                         sweep_threshold)
from .figures import (render_ratio_figure, render_run_figures,
                      render_threshold_figure)
from .gradcheck import run_gradcheck

GRADCHECK_TOLERANCE = 1e-4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="experiment config file")
    parser.add_argument("--seed", help="comma-separated seeds overriding the config")
    parser.add_argument("--out", help="output directory (beats FLUID_OUT_DIR)")
    parser.add_argument("--strategy",
                        help="comma-separated strategies overriding the config")
    parser.add_argument("--rate", help="comma-separated forced sub-model rates")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip rendering PNG figures")


def _load_config(args):
    config = parse_config_file(args.config)
    overrides = {}
    if args.seed:
        overrides["seeds"] = tuple(int(s) for s in args.seed.split(","))
    if args.strategy:
        overrides["strategies"] = tuple(s.strip()
                                        for s in args.strategy.split(","))
    if args.rate:
        overrides["forced_rates"] = tuple(float(r) for r in args.rate.split(","))
    return config.override(**overrides) if overrides else config


def _cmd_run(args) -> int:
    config = _load_config(args)
    out = resolve_out_dir(config, args.out)
    result = run_experiment(config, out)
    if not args.no_figures:
        render_run_figures(out, result.results)
    for group in result.summary["groups"]:
        print(f"{group['strategy']} r={group['rate']}: "
              f"accuracy {group['mean_final_accuracy']:.4f} "
              f"+/- {group['std_final_accuracy']:.4f}, "
              f"total time {group['mean_total_time']:.2f} s")
    print(f"wrote {len(result.metrics_files)} metrics files to {out}")
    return 0


def _cmd_sweep_threshold(args) -> int:
    config = _load_config(args)
    out = resolve_out_dir(config, args.out)
    thresholds = [float(t) for t in args.th.split(",")]
    table = sweep_threshold(config, thresholds, out)
    if not args.no_figures:
        render_threshold_figure(out, table)
    for row in table:
        print(f"th={row['threshold']:g}: fraction {row['invariant_fraction']:.4f}, "
              f"accuracy {row['mean_final_accuracy']:.4f}")
    return 0


def _cmd_sweep_ratio(args) -> int:
    config = _load_config(args)
    out = resolve_out_dir(config, args.out)
    ratios = [float(r) for r in args.ratios.split(",")]
    table = sweep_straggler_ratio(config, ratios, out)
    if not args.no_figures:
        render_ratio_figure(out, table)
    for row in table:
        print(f"ratio={row['ratio']:g} {row['strategy']}: "
              f"accuracy {row['mean_final_accuracy']:.4f}")
    return 0


def _cmd_bound_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    for _ in range(args.instances):
        g, k, eps = analysis.sample_bounded_instance(rng, args.m, args.k,
                                                     args.eps)
        check = analysis.probability_mass_bound(g, k, eps)
        p = analysis.keep_probabilities(g, k, check.rate)
        expected = analysis.expected_second_moment(g, p)
        estimate = analysis.empirical_second_moment(
            g, p, args.trials, rng.integers(2 ** 32))
        sigma = analysis.estimator_sigma(g, p, args.trials)
        print(json.dumps({
            "m": int(g.size), "k": int(k), "eps": float(eps),
            "rate": check.rate, "sum_p": check.sum_p, "bound": check.bound,
            "holds": bool(check.holds), "mc_estimate": estimate,
            "expected_second_moment": expected, "three_sigma": 3.0 * sigma,
            "mc_within_3_sigma": bool(abs(estimate - expected) <= 3.0 * sigma),
        }, sort_keys=True))
    return 0


def _cmd_gradcheck(args) -> int:
    errors = run_gradcheck(args.models, args.seed)
    for i, err in enumerate(errors):
        print(f"model {i}: max relative error {err:.3e}")
    worst = max(errors)
    ok = worst < GRADCHECK_TOLERANCE
    print(f"gradcheck: {'PASS' if ok else 'FAIL'} "
          f"({len(errors)} models, worst {worst:.3e}, "
          f"tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluidfl",
        description="Deterministic federated-learning simulator with "
                    "straggler-adaptive dropout")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured experiment grid")
    _add_common(run)
    run.set_defaults(fn=_cmd_run)

    th = sub.add_parser("sweep-threshold", help="sweep the drop threshold")
    _add_common(th)
    th.add_argument("--th", required=True, help="comma-separated thresholds")
    th.set_defaults(fn=_cmd_sweep_threshold)

    ratio = sub.add_parser("sweep-ratio", help="sweep the straggler ratio")
    _add_common(ratio)
    ratio.add_argument("--ratios", required=True,
                       help="comma-separated straggler fractions in (0, 1)")
    ratio.set_defaults(fn=_cmd_sweep_ratio)

    bound = sub.add_parser("bound-check",
                           help="check the retained-mass bound on random "
                                "top-heavy gradient vectors")
    bound.add_argument("--m", type=int, default=None, help="vector length")
    bound.add_argument("--k", type=int, default=None, help="always-kept prefix")
    bound.add_argument("--eps", type=float, default=None, help="slack factor")
    bound.add_argument("--trials", type=int, default=100_000)
    bound.add_argument("--seed", type=int, default=0)
    bound.add_argument("--instances", type=int, default=1)
    bound.set_defaults(fn=_cmd_bound_check)

    grad = sub.add_parser("gradcheck",
                          help="compare analytic gradients to finite differences")
    grad.add_argument("--models", type=int, default=20)
    grad.add_argument("--seed", type=int, default=0)
    grad.set_defaults(fn=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FluidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
