"""Command-line entry points.

Exit codes: 0 success, 2 bad arguments or configuration, 3 solver
non-convergence (including a non-stationary reference run).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import gallery
from .average import ALGORITHMS, ReferenceNotStationary, run_algorithm
from .core import RmdpInstance
from .harness import ConfigError, ExperimentConfig, run_experiment
from .robust_dp import NonConvergenceError, adversarial_policy_iteration, robust_value_iteration, strategy_iteration

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def fmt(x) -> str:
    return f"{float(x):.12g}"


def fmt_vec(xs) -> str:
    return " ".join(fmt(x) for x in np.ravel(xs))


def load_instance(ident: str, uncertainty: str | None, radius: float, normalized: bool = False) -> RmdpInstance:
    """Instance from a JSON file or a gallery id, optionally with a uniform uncertainty set."""
    if Path(ident).suffix == ".json":
        try:
            instance = RmdpInstance.load(ident)
        except OSError as exc:
            raise ConfigError(f"cannot read instance file {ident}: {exc}") from exc
    else:
        name = ident.split(":")[0]
        norm = normalized if gallery._ALIASES.get(name, name) in ("machine", "forest", "healthcare") else None
        instance = gallery.parse_id(ident, normalized=norm)
    if uncertainty is not None:
        instance = gallery.with_uncertainty(instance, uncertainty, radius, exact_fallback=True)
    return instance


def _cmd_solve_discounted(args) -> int:
    instance = load_instance(args.instance, args.uncertainty, args.radius, args.normalized)
    if args.method == "strategy":
        report = strategy_iteration(instance, args.gamma, tol=args.tol)
    else:
        report = robust_value_iteration(instance, args.gamma, tol=args.tol)
    if not report.converged:
        raise NonConvergenceError(f"{args.method} iteration stopped at residual {report.residual:.3e}")
    print(f"instance {instance.name}")
    print(f"return {fmt(instance.initial_distribution @ report.value)}")
    print(f"value {fmt_vec(report.value)}")
    print(f"policy {' '.join(str(a) for a in report.policy.actions)}")
    print(f"iterations {report.iterations}")
    return EXIT_OK


def _cmd_solve_average(args) -> int:
    instance = load_instance(args.instance, args.uncertainty, args.radius, args.normalized)
    trace = run_algorithm(instance, args.algorithm, args.iters)
    print(f"estimate {fmt(trace.final_estimate)}")
    print(f"gain {fmt_vec(trace.final_gain)}")
    print(f"policy {' '.join(str(a) for a in trace.final_policy.actions)}")
    if args.trace:
        Path(args.trace).write_text(trace.to_csv())
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_file(args.config).with_overrides(
        instance=args.instance,
        uncertainty=args.uncertainty,
        radius=args.radius,
        T=args.T,
        T_ref=args.T_ref,
        num_seeds=args.num_seeds,
        seed_offset=args.seed_offset,
        output=args.output,
        workers=args.workers,
    )
    result = run_experiment(config)
    for run in result.runs:
        print(f"seed {run.seed} reference {fmt(run.reference)} spread {fmt(run.stationarity_spread)}")
        for algorithm, errs in run.errors.items():
            print(f"  {algorithm} final_error {fmt(errs[-1])}")
    print(f"csv {result.csv_path}")
    print(f"summary {result.summary_path}")
    print(f"reference {result.reference_path}")
    return EXIT_OK


def _gallery_fig2(args) -> int:
    gamma = 0.75 if args.gamma is None else args.gamma
    instance = gallery.fig2_alpha_beta()
    value, kernel = adversarial_policy_iteration(instance, [0] * instance.num_states, gamma, tol=1e-13)
    alpha = instance.uncertainty[0][0].alpha_of(kernel[0, 0])
    print(f"gamma {fmt(gamma)}")
    print(f"worst_alpha {fmt(alpha)}")
    print(f"normalized_value {fmt((1 - gamma) * value[0])}")
    return EXIT_OK


def _gallery_big_match(args) -> int:
    step = args.grid_step or 0.01
    markov = max(abs(gallery.markovian_pistar_average(p) - 0.5) for p in gallery._grid(step))
    maxmin, minmax = gallery.stationary_duality_gap(step)
    print(f"markovian_value_max_deviation {fmt(markov)}")
    print(f"stationary_maxmin {fmt(maxmin)}")
    print(f"stationary_minmax {fmt(minmax)}")
    return EXIT_OK


def _gallery_no_blackwell(args) -> int:
    print("k gamma_k winner_k margin_k gamma_prime_k winner_prime_k margin_prime_k")
    for k, (g, gp, w, wp, m, mp) in enumerate(gallery.no_blackwell_flip_points(args.k_max), start=1):
        print(f"{k} {fmt(g)} {w} {fmt(m)} {fmt(gp)} {wp} {fmt(mp)}")
    return EXIT_OK


def _gallery_smex(args) -> int:
    step = args.grid_step or 0.01
    print("epsilon worst_average")
    for eps in (0.5, 0.1, 0.01, 0.0):
        print(f"{fmt(eps)} {fmt(gallery.smex_worst_case(eps, step))}")
    return EXIT_OK


def _gallery_srect(args) -> int:
    gamma = 0.9 if args.gamma is None else args.gamma
    x_grid, value = gallery.srect_grid_maxmin(gamma, args.grid_step or 1e-3)
    print(f"gamma {fmt(gamma)}")
    print(f"xstar {fmt(gallery.srect_no_blackwell_xstar(gamma))}")
    print(f"grid_argmax {fmt(x_grid)}")
    print(f"grid_maxmin {fmt(value)}")
    return EXIT_OK


GALLERY = {
    "fig2": _gallery_fig2,
    "big-match": _gallery_big_match,
    "no-blackwell": _gallery_no_blackwell,
    "smex": _gallery_smex,
    "srect-no-blackwell": _gallery_srect,
}


def _cmd_gallery(args) -> int:
    return GALLERY[args.name](args)


def _cmd_export(args) -> int:
    instance = load_instance(args.id, args.uncertainty, args.radius, args.normalized)
    instance.save(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--uncertainty", choices=("singleton", "box", "ell2"), help="uniform set attached to every pair")
    p.add_argument("--radius", type=float, default=0.05)
    p.add_argument("--normalized", action="store_true", help="rescale benchmark rewards to [0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmdp", description="Robust MDP solvers and experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-discounted", help="optimal worst-case discounted value")
    p.add_argument("--instance", required=True, help="gallery id or instance JSON file")
    _instance_flags(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--method", choices=("strategy", "value"), default="strategy")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=_cmd_solve_discounted)

    p = sub.add_parser("solve-average", help="optimal worst-case gain")
    p.add_argument("--instance", required=True, help="gallery id or instance JSON file")
    _instance_flags(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--trace", help="write the per-iteration trace CSV here")
    p.set_defaults(func=_cmd_solve_average)

    p = sub.add_parser("experiment", help="convergence-error experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--instance")
    p.add_argument("--uncertainty", choices=("singleton", "box", "ell2"))
    p.add_argument("--radius", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--T-ref", dest="T_ref", type=int)
    p.add_argument("--num-seeds", type=int)
    p.add_argument("--seed-offset", type=int)
    p.add_argument("--output")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("gallery", help="numbers behind the counterexamples")
    p.add_argument("name", choices=tuple(GALLERY))
    p.add_argument("--gamma", type=float)
    p.add_argument("--grid-step", type=float)
    p.add_argument("--k-max", type=int, default=4)
    p.set_defaults(func=_cmd_gallery)

    p = sub.add_parser("export-instance", help="write an instance as JSON")
    p.add_argument("--id", required=True)
    _instance_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NonConvergenceError, ReferenceNotStationary) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
