"""Command-line front end for the experiment harness and self-checks.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 experiment
failure.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from ._validation import InvalidArgumentError
from .experiments import (
    ExperimentError,
    SweepSpec,
    export_results,
    load_scenario,
    pattern_errors,
    run_beampatterns,
    run_dynamic,
    run_rho_sweep,
)
from .gradients import fd_oracle, grad_lagrangian_smooth, relative_error, smooth_lagrangian
from .prox import prox_elementwise, prox_group_rows
from .scenario import SystemConfig, radar_covariance, random_scene, sample_channel
from .solver import DualState

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_EXPERIMENT = 0, 1, 2, 3
GRAD_TOL = 1e-5
PROX_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _rho_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser():
    parser = _Parser(prog="healthbf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out=True):
        p.add_argument("--config", help="scenario JSON file (defaults reproduce the "
                                        "reference scenario)")
        p.add_argument("--seed", type=int, help="base seed override")
        if out:
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--format", choices=("csv", "json"), default="csv")
        return p

    for name, text in (("sweep", "PGDA Monte-Carlo sweep over rho_s"),
                       ("select", "GPGDA antenna-selection sweep over rho_s")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--rho-s", type=_rho_list, help="comma-separated rho_s grid")
        p.add_argument("--runs", type=int, help="runs per rho_s value")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--traces", action="store_true", help="also write per-run traces")
    p = common(sub.add_parser("dynamic", help="three-stage rising rate requirement"))
    p.add_argument("--traces", action="store_true")
    p = common(sub.add_parser("beampattern", help="masked/unmasked beampattern exports"))
    p.add_argument("--rho-s", type=_rho_list)
    p.add_argument("--solver", choices=("pgda", "gpgda"), default="gpgda")
    p = sub.add_parser("gradcheck", help="analytic gradient vs finite differences")
    p.add_argument("--runs", type=int, default=20, help="number of random instances")
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("proxcheck", help="prox operators vs brute-force optimality")
    p.add_argument("--runs", type=int, default=1000, help="number of random samples")
    p.add_argument("--seed", type=int, default=0)
    return parser


def gradcheck(n_instances=20, seed=0):
    """Largest relative error of the Lagrangian gradient over random instances."""
    rng = np.random.default_rng(seed)
    n_tx, m, k = 6, 3, 2
    fr = rng.dirichlet(np.ones(m + 1))
    cfg = SystemConfig(n_tx=n_tx, n_rx=n_tx, n_users=m, n_targets=k, frame_len=n_tx,
                       bw_fraction_radar=float(fr[0]),
                       bw_fractions_users=tuple(fr[1:] / fr[1:].sum() * (1 - fr[0])),
                       rate_min=(0.01,) * m, rate_max=(20.0,) * m)
    worst = 0.0
    for _ in range(n_instances):
        H = sample_channel(rng, n_tx, m)
        R = radar_covariance(random_scene(rng, k), n_tx, cfg.spacing, cfg.wavelength)
        W = (rng.standard_normal((n_tx, m)) + 1j * rng.standard_normal((n_tx, m))) / 2
        duals = DualState(rng.uniform(0, 0.1, m), rng.uniform(0, 0.1, m), rng.uniform(0, 0.1))
        g = grad_lagrangian_smooth(W, R, H, duals, cfg)
        num = fd_oracle(lambda X: smooth_lagrangian(X, R, H, duals, cfg), W)
        worst = max(worst, relative_error(g, num))
    return worst


def _brute_objective(X, W, kappa):
    return np.sum(kappa * np.abs(X)) + 0.5 * np.sum(np.abs(X - W) ** 2)


def _brute_group_objective(X, W, tau):
    return np.sum(tau * np.linalg.norm(X, axis=1)) + 0.5 * np.sum(np.abs(X - W) ** 2)


def proxcheck(n_samples=1000, seed=0):
    """Count samples where a random perturbation beats the prox output.

    The prox minimizes a strictly convex objective, so any perturbed point
    must score at least as high; a violation beyond rounding is a failure.
    """
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(n_samples):
        W = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        kappa = rng.uniform(0, 2, W.shape)
        tau = rng.uniform(0, 3, W.shape[0])
        P = prox_elementwise(W, kappa)
        G = prox_group_rows(W, tau)
        d = (rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape))
        d *= 10.0 ** rng.uniform(-6, 0)
        if _brute_objective(P + d, W, kappa) < _brute_objective(P, W, kappa) - PROX_TOL:
            failures += 1
        if _brute_group_objective(G + d, W, tau) < _brute_group_objective(G, W, tau) - PROX_TOL:
            failures += 1
    return failures


def _log(msg):
    print(msg, file=sys.stderr)


def _run(args):
    if args.command == "gradcheck":
        err = gradcheck(args.runs, args.seed)
        print(f"gradcheck: max relative error {err:.3e} over {args.runs} instances")
        return EXIT_OK if err < GRAD_TOL else EXIT_VERIFY
    if args.command == "proxcheck":
        bad = proxcheck(args.runs, args.seed)
        print(f"proxcheck: {bad} optimality violations over {args.runs} samples")
        return EXIT_OK if bad == 0 else EXIT_VERIFY

    scenario = load_scenario(args.config)
    start = time.perf_counter()
    if args.command in ("sweep", "select"):
        solver = "pgda" if args.command == "sweep" else "gpgda"
        spec = SweepSpec.from_scenario(scenario, solver, args.rho_s, args.runs, args.seed)
        result = run_rho_sweep(scenario, spec, n_jobs=args.jobs, keep_results=args.traces)
        files = export_results(result, args.out, args.format, scenario, traces=args.traces)
        for row in result.rows:
            print(f"rho_s={row.rho_s:g} se={row.mean_se:.4f} mi={row.mean_mi:.3f} "
                  f"density={row.mean_density:.1f}% reliability={row.mean_reliability:.1f}% "
                  f"power={row.mean_constraint_power:.4f} failed={row.n_failed}")
    elif args.command == "dynamic":
        stages = run_dynamic(scenario, seed=args.seed)
        files = export_results(stages, args.out, args.format, scenario, traces=args.traces)
        for st in stages:
            print(f"stage {st.stage}: mean rate {st.metrics.mean_rate / 1e9:.4f} Gbps, "
                  f"radar MI {st.metrics.radar_mi:.3f}")
    else:
        curves = run_beampatterns(scenario, args.rho_s, seed=args.seed, solver=args.solver)
        files = export_results(curves, args.out, args.format, scenario)
        for rho, err in pattern_errors(curves):
            print(f"rho_s={rho:g} mean abs deviation from ideal pattern {err:.4f}")
    _log(f"wrote {len(files)} files to {args.out} in {time.perf_counter() - start:.1f}s")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _run(args)
    except FileNotFoundError as exc:
        _log(f"healthbf: error: file not found: {exc.filename}")
        return EXIT_USAGE
    except (InvalidArgumentError, ValueError, KeyError, TypeError) as exc:
        _log(f"healthbf: error: invalid configuration: {exc}")
        return EXIT_USAGE
    except ExperimentError as exc:
        _log(f"healthbf: experiment failed: {exc}")
        return EXIT_EXPERIMENT
    except OSError as exc:
        _log(f"healthbf: I/O error: {exc}")
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
