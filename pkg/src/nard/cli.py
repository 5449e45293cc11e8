"""Command-line interface: ``nard simulate | fit | eval | bench``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings

import numpy as np

from . import SOLVERS, __version__
from .errors import DataError, EmptyModelError, NardError, NumericalError, ParameterError
from .glasso import GlassoConfig, kfold_splits, select_lambda
from .io import RunManifest, W_SUPPORT_TOL, load_matrix, load_model, save_matrix, save_model
from .kernels import KernelSpec, Polynomial, RbfRandomFeatures, expand
from .model import METHODS, Dataset, FitConfig, Flat, Gamma, HyperpriorConfig, InverseWishart
from .synth import STREAMS, SynthSpec, generate, jaccard, support, tpr_fpr

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
CV_DEFAULT = "1e-3,1,20"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def parse_alpha_prior(text):
    if text == "flat":
        return Flat()
    if text.startswith("gamma:"):
        a, b = _floats(text[6:], 2, "gamma:a,b")
        return Gamma(a, b)
    raise ParameterError(f"alpha prior must be 'flat' or 'gamma:a,b', got {text!r}")


def parse_v_prior(text, m):
    """``flat`` or ``invwishart:nu[,scale]`` with ``psi = scale * I`` (scale defaults to 1)."""
    if text == "flat":
        return Flat()
    if text.startswith("invwishart:"):
        vals = [v for v in text[11:].split(",") if v]
        if len(vals) not in (1, 2):
            raise ParameterError("expected invwishart:nu or invwishart:nu,scale")
        nums = _floats(",".join(vals), len(vals), "invwishart:nu[,scale]")
        scale = nums[1] if len(nums) == 2 else 1.0
        return InverseWishart(scale * np.eye(m), nums[0])
    raise ParameterError(f"V prior must be 'flat' or 'invwishart:nu[,scale]', got {text!r}")


def parse_kernel(text, seed=0):
    if text in ("none", ""):
        return KernelSpec(None)
    if text.startswith("poly:"):
        vals = text[5:].split(",")
        degree = int(_floats(vals[0], 1, "poly:deg")[0])
        bias = True
        if len(vals) > 1:
            if vals[1] not in ("bias", "nobias"):
                raise ParameterError("poly option must be 'bias' or 'nobias'")
            bias = vals[1] == "bias"
        return KernelSpec(Polynomial(degree, bias))
    if text.startswith("rbf:"):
        gamma, dim = _floats(text[4:], 2, "rbf:gamma,D")
        if dim != int(dim):
            raise ParameterError("rbf feature count must be an integer")
        return KernelSpec(RbfRandomFeatures(gamma, int(dim), seed))
    raise ParameterError(f"kernel must be none, poly:deg[,bias|nobias] or rbf:gamma,D; got {text!r}")


def parse_grid(text):
    lo, hi, k = _floats(text, 3, "LO,HI,K")
    if not 0 < lo < hi or k < 2 or k != int(k):
        raise ParameterError("grid needs 0 < LO < HI and an integer K >= 2")
    return np.logspace(np.log10(lo), np.log10(hi), int(k))


def _floats(text, count, form):
    parts = text.split(",")
    if len(parts) != count:
        raise ParameterError(f"expected {form}, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ParameterError(f"expected {form}, got {text!r}") from None


def _ints(text):
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not out or min(out) < 1:
        raise ParameterError("sizes must be positive integers")
    return out


def build_parser():
    p = _Parser(prog="nard", description="Sparse multi-output regression with a sparse output precision.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="generate a synthetic benchmark instance")
    s.add_argument("--d", type=int, default=100)
    s.add_argument("--m", type=int, default=20)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--sparsity", type=float, default=0.1, help="edge probability of the precision graph")
    s.add_argument("--w-sparsity", type=float, default=0.1, help="fraction of relevant features")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")

    f = sub.add_parser("fit", help="fit a model")
    f.add_argument("--x", required=True, help="features CSV, d x N")
    f.add_argument("--y", required=True, help="responses CSV, m x N")
    f.add_argument("--method", choices=METHODS, default="nard")
    f.add_argument("--alpha-prior", default="flat", help="flat | gamma:a,b")
    f.add_argument("--v-prior", default="flat", help="flat | invwishart:nu[,scale]")
    lam = f.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, default=None, help="graphical-lasso penalty")
    lam.add_argument("--cv-lambda", nargs="?", const=CV_DEFAULT, default=None, metavar="LO,HI,K",
                     help=f"choose the penalty by 5-fold CV on a log grid (default {CV_DEFAULT})")
    f.add_argument("--kernel", default="none", help="none | poly:deg[,bias|nobias] | rbf:gamma,D")
    f.add_argument("--epsilon", type=float, default=1e-4)
    f.add_argument("--max-iter", type=int, default=1000)
    f.add_argument("--prune-threshold", type=float, default=1e12)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="model JSON path")

    e = sub.add_parser("eval", help="score a model against ground truth")
    e.add_argument("--model", required=True)
    e.add_argument("--truth", required=True, help="directory written by simulate")
    e.add_argument("--other", default=None, help="second model to compare supports with")
    e.add_argument("--report", required=True)

    b = sub.add_parser("bench", help="per-iteration timing table")
    b.add_argument("--sizes", default="500,2000,4000", help="comma-separated feature counts d")
    b.add_argument("--m", type=int, default=100)
    b.add_argument("--n", type=int, default=500)
    b.add_argument("--method", default="nard,surrogate", help="comma-separated methods")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--iters", type=int, default=3, help="iterations timed per fit (after a first, untimed one)")
    b.add_argument("--lambda", dest="lam", type=float, default=0.1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="-", help="CSV path ('-' for standard output)")
    return p


def _write_manifest(manifest, path):
    manifest.output_paths.append(path)
    manifest.finish().write(path)


def cmd_simulate(args, argv):
    spec = SynthSpec(d=args.d, m=args.m, n=args.n, graph_sparsity=args.sparsity, w_sparsity=args.w_sparsity,
                     seed=args.seed)
    manifest = RunManifest.start("simulate", argv, {"synth": spec.to_dict(), "streams": STREAMS})
    gt = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    for name, mat in (("x", gt.x), ("y", gt.y), ("w_true", gt.w_true), ("omega_true", gt.omega_true)):
        path = os.path.join(args.out, f"{name}.csv")
        save_matrix(path, mat)
        manifest.output_paths.append(path)
    _write_manifest(manifest, os.path.join(args.out, "manifest.json"))
    return EXIT_OK


def cv_select(data, config, hyper, grid, seed):
    """Cross-validated penalty.

    A pilot fit at the geometric middle of the grid supplies ``mu`` and
    ``K``. On each training fold the precision is fit to the covariance
    update ``[R R^T + mu K mu^T] / n`` and scored on the held-out residual
    covariance ``R R^T / n``, with ``R = Y - mu X``.
    """
    mid = float(np.exp(np.mean(np.log(grid))))
    pilot = SOLVERS[config.method](data, FitConfig(lam=mid, epsilon=config.epsilon, max_iter=config.max_iter,
                                                   prune_threshold=config.prune_threshold,
                                                   method=config.method, seed=config.seed), hyper)
    act = pilot.alpha.active
    if act.size == 0:
        raise EmptyModelError("pilot fit for cross-validation pruned every feature")
    mu = pilot.w[:, act]
    k = pilot.alpha.finite()

    def train_cov(split):
        r = split.y - mu @ split.x[act]
        return (r @ r.T + (mu * k) @ mu.T) / split.n

    def test_cov(split):
        r = split.y - mu @ split.x[act]
        return r @ r.T / split.n

    folds = kfold_splits(data, 5, seed=[int(seed), STREAMS["cv"]])
    return select_lambda(folds, grid, train_cov, test_cov, GlassoConfig())


def cmd_fit(args, argv):
    x = load_matrix(args.x)
    y = load_matrix(args.y)
    data = Dataset(x, y)
    hyper = HyperpriorConfig(alpha_prior=parse_alpha_prior(args.alpha_prior),
                             v_prior=parse_v_prior(args.v_prior, data.m))
    kernel = parse_kernel(args.kernel, args.seed)
    data = expand(data, kernel)
    base = dict(epsilon=args.epsilon, max_iter=args.max_iter, prune_threshold=args.prune_threshold,
                method=args.method, seed=args.seed)
    cv = None
    if args.cv_lambda is not None:
        grid = parse_grid(args.cv_lambda)
        lam = cv_select(data, FitConfig(lam=1.0, **base), hyper, grid, args.seed)
        cv = {"grid": grid, "selected": lam, "folds": 5}
    else:
        lam = 0.1 if args.lam is None else args.lam
    config = FitConfig(lam=lam, **base)
    manifest = RunManifest.start("fit", argv, {
        "fit": {k: getattr(config, k) for k in ("lam", "epsilon", "max_iter", "prune_threshold", "method", "seed")},
        "alpha_prior": args.alpha_prior,
        "v_prior": args.v_prior,
        "kernel": args.kernel,
        "glasso": vars(GlassoConfig(lam=lam)),
        "cv": cv,
        "shape": {"d": data.d, "m": data.m, "n": data.n},
    })
    manifest.input_paths += [args.x, args.y]
    state = SOLVERS[config.method](data, config, hyper)
    manifest.output_paths.append(args.out)
    save_model(state, args.out, manifest.finish())
    return EXIT_OK


def _rates(est, truth, offdiag):
    tpr, fpr = tpr_fpr(est, truth, offdiag=offdiag)
    return {"tpr": tpr, "fpr": fpr, "jaccard": jaccard(est, truth, offdiag=offdiag),
            "n_true": int(np.sum(truth) - (np.trace(truth) if offdiag else 0)),
            "n_est": int(np.sum(est) - (np.trace(est) if offdiag else 0))}


def _supports(state):
    return support(state.w, W_SUPPORT_TOL), support(state.omega, 0.0, precision=True)


def cmd_eval(args, argv):
    state, _ = load_model(args.model)
    w_true = load_matrix(os.path.join(args.truth, "w_true.csv"))
    omega_true = load_matrix(os.path.join(args.truth, "omega_true.csv"))
    w_est, om_est = _supports(state)
    if om_est.shape != omega_true.shape:
        raise DataError(f"model has m={om_est.shape[0]} outputs but the truth has {omega_true.shape[0]}")
    report = {
        "model": args.model,
        "truth": args.truth,
        "method": state.method,
        "Omega": _rates(om_est, support(omega_true, 0.0, precision=True), True),
        "conventions": {"tpr_without_positives": 1.0, "fpr_without_negatives": 0.0,
                        "w_support_tol": W_SUPPORT_TOL, "omega_support": "off-diagonal, exact zeros"},
    }
    if w_est.shape == w_true.shape:
        report["W"] = _rates(w_est, support(w_true, 0.0), False)
        report["W_features"] = _rates(w_est.any(axis=0), w_true.any(axis=0), False)
    else:
        report["W"] = None
        report["note"] = "W lives in an expanded feature space; W metrics skipped"
    if args.other:
        other, _ = load_model(args.other)
        w_o, om_o = _supports(other)
        report["compare"] = {"other": args.other, "method": other.method,
                             "jaccard_omega": jaccard(om_est, om_o, offdiag=True),
                             "jaccard_w": jaccard(w_est, w_o) if w_o.shape == w_est.shape else None}
    manifest = RunManifest.start("eval", argv, {})
    manifest.input_paths += [args.model, args.truth] + ([args.other] if args.other else [])
    manifest.output_paths.append(args.report)
    report["manifest"] = manifest.finish().to_dict()
    with open(args.report, "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def time_per_iteration(data, method, lam, iters):
    """Mean seconds per iteration of ``method``, excluding setup.

    Runs ``iters + 1`` iterations (objective tracking off) and times the
    span between the end of the first and the end of the last, so that
    one-off work such as the initial factorizations is not counted.
    Returns ``(iterations timed, seconds per iteration)``.
    """
    config = FitConfig(lam=lam, epsilon=1e-300, max_iter=iters + 1, method=method)
    stamps = []
    kwargs = {"callback": lambda t, info: stamps.append(time.perf_counter())}
    if method != "sequential":
        kwargs["track_mlf"] = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        SOLVERS[method](data, config, **kwargs)
    if method == "sequential":
        stamps = stamps[1:]
    if len(stamps) < 2:
        raise NumericalError(f"{method} stopped before two iterations could be timed")
    n = len(stamps) - 1
    return n, (stamps[-1] - stamps[0]) / n


def cmd_bench(args, argv):
    sizes = _ints(args.sizes)
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ParameterError(f"unknown method {m!r}; choose from {METHODS}")
    if args.repeats < 1 or args.iters < 1:
        raise ParameterError("repeats and iters must be >= 1")
    rows = []
    for d in sizes:
        gt = generate(SynthSpec(d=d, m=args.m, n=args.n, seed=args.seed))
        data = Dataset(gt.x, gt.y)
        for method in methods:
            for r in range(args.repeats):
                it, sec = time_per_iteration(data, method, args.lam, args.iters)
                rows.append({"method": method, "d": d, "m": args.m, "n": args.n, "repeat": r,
                             "iterations": it, "seconds_per_iter": f"{sec:.6g}"})
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        writer = csv.DictWriter(out, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    if args.out != "-":
        manifest = RunManifest.start("bench", argv, vars(args))
        _write_manifest(manifest, args.out + ".manifest.json")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "eval": cmd_eval, "bench": cmd_bench}


def run_cli(argv=None) -> int:
    """Run one command and return its exit code; messages go to standard error."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, argv)
    except ParameterError as exc:
        print(f"nard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"nard: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, EmptyModelError, np.linalg.LinAlgError) as exc:
        print(f"nard: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NardError as exc:
        print(f"nard: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
