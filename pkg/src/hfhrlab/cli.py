"""Command-line interface: sample, couple, constants, wasserstein, experiment.

Exit codes: 0 success, 2 configuration error, 3 certificate failure,
4 numerical divergence.  The default output directory can be set through
the HFHRLAB_OUT environment variable.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .constants import (
    acceleration_report,
    alpha_smallness_bound,
    case_study_constants,
    contraction_rate,
    multiwell_lambda_star,
)
from .coupling import build_profile, run_coupled_ensemble, estimate_contraction, ProfileError
from .experiments import (
    generate_classification_data,
    generate_linreg_data,
    load_config,
    load_dataset_csv,
    run_experiment,
)
from .integrators import (
    DivergenceError,
    SamplerParams,
    log_schedule,
    run_ensemble,
)
from .metrics import w2_assignment, w2_exact_1d, w2_sliced
from .potentials import (
    ClassificationPotential,
    GaussianPotential,
    LinearRegressionPotential,
    MultiWellPotential,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATE = 3
EXIT_DIVERGENCE = 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _default_out():
    return os.environ.get("HFHRLAB_OUT", "out")


def _build_case_model(args):
    # the model keeps its certified dissipativity pair; a requested --lam is
    # applied to the ledger formulas separately (they are defined on (0, 1/4])
    gamma = args.gamma
    if args.case == "mw":
        lam_max = 1.0 / (4.0 + gamma * gamma)
        lam = args.lam if (args.lam is not None and args.lam <= lam_max) else None
        return MultiWellPotential(args.d, gamma, lam=lam)
    if args.case == "gaussian":
        return GaussianPotential(args.d, gamma)
    if args.case == "lr":
        if args.dataset:
            raise CliError("lr case takes --synthetic (CSV regression input not supported)")
        if not args.synthetic:
            raise CliError("lr case requires --synthetic N to generate the design")
        X, y = generate_linreg_data(n=args.synthetic, seed=args.seed)
        return LinearRegressionPotential(X, y, sigma=0.4, iota=args.iota or 0.1,
                                         p=1.2, eps=1e-3, gamma=gamma)
    if args.case == "bc":
        if args.dataset:
            X, yl, _, _ = load_dataset_csv(args.dataset, 0.7, args.seed)
        elif args.synthetic:
            X, yl = generate_classification_data(args.synthetic, args.d, args.seed)
        else:
            raise CliError("bc case requires --dataset CSV or --synthetic N")
        return ClassificationPotential(X, yl, iota=args.iota or 0.05,
                                       t0=args.t0, gamma=gamma)
    raise CliError(f"unknown case {args.case!r}")


def cmd_constants(args):
    model = _build_case_model(args)
    try:
        ledger = acceleration_report(model, lam=args.lam, kappa_adjust=args.kappa_adjust,
                                     case=args.case)
        payload = ledger.to_dict()
        if args.case in ("mw", "lr", "bc"):
            extra = case_study_constants(args.case, model=model, gamma=args.gamma,
                                         lam=args.lam, d=args.d)
            payload["case_constants"] = {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in extra.items()
            }
        if args.scan_lambda and args.case == "mw":
            payload["lambda_star"] = multiwell_lambda_star(args.gamma)
    except (ValueError, RuntimeError) as exc:
        raise CliError(f"certificate failure: {exc}", EXIT_CERTIFICATE)
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    if not args.quiet:
        _print_ledger_table(payload)
    return EXIT_OK


def _print_ledger_table(payload):
    keys = ["mu_min", "mu_max", "c1", "J1", "alpha0", "c_imp", "delta",
            "C_lambda", "alpha1", "c0", "active_branch", "kappa",
            "alpha_metric_acc", "alpha_branch_acc", "alpha_global",
            "kappa_global"]
    width = max(len(k) for k in keys)
    print("--- ledger ---", file=sys.stderr)
    for k in keys:
        v = payload.get(k)
        if isinstance(v, float):
            print(f"{k:<{width}}  {v:.6g}", file=sys.stderr)
        elif v is not None:
            print(f"{k:<{width}}  {v}", file=sys.stderr)


def cmd_sample(args):
    model = _build_case_model(args)
    params = SamplerParams(alpha=args.alpha, gamma=args.gamma, eta=args.eta,
                           steps=args.steps, chains=args.chains, seed=args.seed)
    schedule = log_schedule(args.steps, args.snapshots)
    record = run_ensemble(model, params, sampler=args.sampler, recorder=schedule)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.sampler}_snapshots.csv"
    record.to_csv(path)
    print(f"wrote {path} ({len(record.steps)} snapshots, {args.chains} chains)")
    return EXIT_OK


def _couple_once(model, args, alpha, out):
    consts = model.constants
    rate = contraction_rate(consts.lam, alpha, args.gamma, consts.L,
                            model.dim, consts.A, args.kappa_adjust)
    bound = alpha_smallness_bound(args.gamma, consts.L, rate.eta0,
                                  args.kappa_adjust)
    if alpha > bound:
        raise CliError(
            f"alpha = {alpha:g} violates the smallness condition "
            f"(bound {bound:.6g})"
        )
    try:
        profile = build_profile(model, alpha=alpha,
                                kappa_adjust=args.kappa_adjust)
    except ProfileError as exc:
        raise CliError(str(exc), EXIT_CERTIFICATE)
    record = run_coupled_ensemble(
        model, profile, pairs=args.pairs, steps=args.steps, eta=args.eta,
        alpha=alpha, seed=args.seed, kappa_adjust=args.kappa_adjust,
        identical_start=args.identical,
    )
    path = out / f"couple_a{alpha:g}.csv"
    record.to_csv(path)
    fitted, _ = estimate_contraction(record)
    return path, fitted, profile.rate_c


def cmd_couple(args):
    model = _build_case_model(args)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    if args.compare_alphas:
        alphas = [float(a) for a in args.compare_alphas.split(",")]
        print(f"{'alpha':>8}  {'fitted':>12}  {'theoretical':>12}  {'ratio':>8}")
        for alpha in alphas:
            _, fitted, theo = _couple_once(model, args, alpha, out)
            ratio = fitted / theo if theo > 0 else float("inf")
            print(f"{alpha:>8g}  {fitted:>12.6g}  {theo:>12.6g}  {ratio:>8.3f}")
        return EXIT_OK
    path, fitted, theoretical = _couple_once(model, args, args.alpha, out)
    ratio = fitted / theoretical if theoretical > 0 else float("inf")
    print(f"wrote {path}")
    print(f"fitted rate      {fitted:.6g}")
    print(f"theoretical c    {theoretical:.6g}")
    print(f"ratio            {ratio:.3f}")
    return EXIT_OK


def cmd_wasserstein(args):
    a = np.loadtxt(args.a, delimiter=",", skiprows=args.skip_header)
    b = np.loadtxt(args.b, delimiter=",", skiprows=args.skip_header)
    if args.method == "exact1d":
        value = w2_exact_1d(a, b)
    elif args.method == "assignment":
        value = w2_assignment(a, b)
    else:
        value = w2_sliced(a, b, n_proj=args.n_proj, seed=args.seed)
    print(f"{value!r}")
    return EXIT_OK


def cmd_experiment(args):
    try:
        config = load_config(args.config)
    except FileNotFoundError as exc:
        raise CliError(str(exc))
    except Exception as exc:
        raise CliError(f"config parse error in {args.config}: {exc}")
    if args.seed is not None:
        config.seed = args.seed
    out = args.out or config.output_dir or _default_out()
    report = run_experiment(config, output_dir=out)
    for label, rows in report.results.items():
        final = rows[-1]
        print(f"{label}: final metric {final[1]:.6g} at step {final[0]}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {Path(out) / 'run.json'}")
    return EXIT_OK


def _add_case_arguments(p, need_sampler=False):
    p.add_argument("--case", required=True,
                   choices=["mw", "gaussian", "lr", "bc"])
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=None,
                   help="dissipativity rate; defaults to the case's certified value")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", default=None, help="CSV input (bc case)")
    p.add_argument("--synthetic", type=int, default=None,
                   help="generate a synthetic dataset of this size (lr / bc)")
    p.add_argument("--iota", type=float, default=None)
    p.add_argument("--t0", type=float, default=2.0)
    p.add_argument("--kappa-adjust", type=float, default=0.5)
    if need_sampler:
        p.add_argument("--sampler", choices=["hfhr", "klmc", "ula"], default="hfhr")
        p.add_argument("--eta", type=float, default=1e-3)
        p.add_argument("--steps", type=int, default=1000)
        p.add_argument("--chains", type=int, default=100)
        p.add_argument("--snapshots", type=int, default=50)
    p.add_argument("--out", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hfhrlab",
        description="HFHR / kinetic Langevin sampling laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run an ensemble and dump snapshots")
    _add_case_arguments(p, need_sampler=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("couple", help="coupled-pair contraction experiment")
    _add_case_arguments(p)
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--identical", action="store_true",
                   help="start both copies from the same points")
    p.add_argument("--compare-alphas", default=None,
                   help="comma-separated alpha grid; print a rate table")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("constants", help="emit the constants ledger as JSON")
    _add_case_arguments(p)
    p.add_argument("--scan-lambda", action="store_true",
                   help="include the feasibility threshold lambda_star (mw)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("wasserstein", help="distance between two CSV clouds")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--method", choices=["sliced", "assignment", "exact1d"],
                   default="sliced")
    p.add_argument("--n-proj", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-header", type=int, default=0)
    p.set_defaults(func=cmd_wasserstein)

    p = sub.add_parser("experiment", help="run a config-driven experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
