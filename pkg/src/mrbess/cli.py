"""Command-line front end: ``mrbess {fit,tune,simulate,bench}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import io
from .model import (SolverConfig, compute_metrics, denormalize_coefficients,
                    validate_and_normalize)
from .simulation import (SimulationSpec, Tuner, default_threads, generate,
                         run_benchmark)
from .solver import solve_fixed
from .tuning import tune_gic, tune_grid_gic, tune_validation

log = logging.getLogger("mrbess")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _solver_flags(p):
    p.add_argument("--tol", type=float, default=1e-5,
                   help="stopping tolerance on ||C_new - C_old||_F (default: %(default)g)")
    p.add_argument("--max-iter", type=int, default=100,
                   help="iteration cap per fixed solve (default: %(default)s)")
    p.add_argument("--pinv", action="store_true",
                   help="use a truncated pseudo-inverse for singular Gram matrices "
                        "instead of failing")


def _tune_flags(p, smax_default=20):
    p.add_argument("--smax", type=int, default=smax_default,
                   help="largest row sparsity searched (default: %(default)s)")
    p.add_argument("--rmax", type=int, default=10,
                   help="largest rank searched (default: %(default)s)")
    p.add_argument("--tune-mode", choices=("gic", "grid", "cv"), default="gic",
                   help="gic = two-stage GIC search, grid = full GIC grid, "
                        "cv = validation split (default: %(default)s)")
    p.add_argument("--train-fraction", type=float, default=0.8,
                   help="training share for --tune-mode cv (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0,
                   help="random seed (default: %(default)s)")


def _data_flags(p):
    p.add_argument("--x", required=True, help="CSV file with the n x p design")
    p.add_argument("--y", required=True, help="CSV file with the n x q responses")
    p.add_argument("--header", action="store_true", help="skip one header row")
    p.add_argument("--center", action="store_true",
                   help="subtract column means of X and Y before fitting")
    p.add_argument("--keep-normalized", action="store_true",
                   help="report C on the internal sqrt(n)-normalized column scale")


def _out_flags(p):
    p.add_argument("--out", help="output path (JSON report, or CSV with --format csv); "
                                 "JSON goes to stdout when omitted")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="output format (default: %(default)s)")


def _sim_flags(p):
    p.add_argument("--n", type=int, default=100, help="sample size (default: %(default)s)")
    p.add_argument("--p", type=int, default=200, help="predictors (default: %(default)s)")
    p.add_argument("--q", type=int, default=100, help="responses (default: %(default)s)")
    p.add_argument("--sstar", type=int, default=10, help="true row sparsity (default: %(default)s)")
    p.add_argument("--rstar", type=int, default=3, help="true rank (default: %(default)s)")
    p.add_argument("--snr", type=float, default=0.5, help="signal-to-noise ratio (default: %(default)s)")
    p.add_argument("--noise", choices=("AR", "SC"), default="AR",
                   help="noise covariance (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mrbess", description="Sparse reduced-rank regression "
                     "by primal-dual active-set iteration.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fixed rank and sparsity fit on CSV data")
    _data_flags(p)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--sparsity", type=int, required=True)
    _solver_flags(p)
    _out_flags(p)

    p = sub.add_parser("tune", help="tune sparsity and rank on CSV data")
    _data_flags(p)
    _tune_flags(p)
    _solver_flags(p)
    _out_flags(p)

    p = sub.add_parser("simulate", help="generate one synthetic dataset, tune and score it")
    _sim_flags(p)
    _tune_flags(p)
    _solver_flags(p)
    _out_flags(p)

    p = sub.add_parser("bench", help="replicated benchmark producing a summary table")
    _sim_flags(p)
    _tune_flags(p)
    _solver_flags(p)
    p.add_argument("--reps", type=int, default=20, help="replications (default: %(default)s)")
    p.add_argument("--methods", default="gic,cv",
                   help="comma-separated tuners: gic, grid, cv, fixed:R:S "
                        "(default: %(default)s)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $MRBESS_THREADS or CPU count)")
    _out_flags(p)
    return parser


def _violations(a) -> list[str]:
    bad = []

    def need(cond, msg):
        if not cond:
            bad.append(msg)

    need(a.tol > 0, "--tol must be > 0")
    need(a.max_iter >= 1, "--max-iter must be >= 1")
    if a.command == "fit":
        need(a.rank >= 1, "--rank must be >= 1")
        need(a.sparsity >= 1, "--sparsity must be >= 1")
    if a.command in ("tune", "simulate", "bench"):
        need(a.smax >= 1, "--smax must be >= 1")
        need(a.rmax >= 1, "--rmax must be >= 1")
        need(0 < a.train_fraction < 1, "--train-fraction must lie in (0, 1)")
    if a.command in ("simulate", "bench"):
        need(a.n >= 3, "--n must be >= 3")
        need(a.p >= 2, "--p must be >= 2")
        need(a.q >= 1, "--q must be >= 1")
        need(1 <= a.rstar <= a.sstar <= a.p, "need 1 <= --rstar <= --sstar <= --p")
        need(a.rstar <= min(a.n, a.q), "--rstar must be <= min(--n, --q)")
        need(a.snr > 0, "--snr must be > 0")
    if a.command == "bench":
        need(a.reps >= 1, "--reps must be >= 1")
        need(a.threads is None or a.threads >= 1, "--threads must be >= 1")
        for m in a.methods.split(","):
            try:
                _tuner(m, a)
            except ValueError as exc:
                bad.append(f"--methods: {exc}")
    if a.format == "csv" and not a.out:
        bad.append("--format csv requires --out")
    return bad


def parse_args(argv=None) -> argparse.Namespace:
    """Parse and validate; raises UsageError listing every violated constraint."""
    args = build_parser().parse_args(argv)
    bad = _violations(args)
    if bad:
        raise UsageError("; ".join(bad))
    return args


def _tuner(text, a) -> Tuner:
    text = text.strip().replace(":", ",", 2).replace("fixed,", "fixed:", 1)
    return Tuner.parse(text, s_max=a.smax, r_max=a.rmax,
                       train_fraction=a.train_fraction, tol=a.tol,
                       max_iter=a.max_iter)


def _base_config(a, rank=1, sparsity=1) -> SolverConfig:
    return SolverConfig(rank=rank, sparsity=sparsity, tol=a.tol, max_iter=a.max_iter,
                        gram_policy="pseudo_inverse" if a.pinv else "error_on_singular")


def _tune(ds, a):
    base = _base_config(a)
    smax = min(a.smax, ds.p)
    rmax = min(a.rmax, ds.n, ds.q)
    if a.tune_mode == "gic":
        return tune_gic(ds, smax, rmax, base)
    if a.tune_mode == "grid":
        return tune_grid_gic(ds, smax, rmax, base)
    return tune_validation(ds, smax, rmax, a.train_fraction, a.seed, base)


def _config_echo(a) -> dict:
    return {k: v for k, v in vars(a).items() if k not in ("verbose",)}


def _sidecar(out, suffix) -> Path | None:
    if not out:
        return None
    out = Path(out)
    return out.with_name(f"{out.stem}_{suffix}.csv")


def _emit(a, report, C):
    if a.format == "csv":
        io.write_report({"C": C}, "csv", a.out)
        return
    C_path = _sidecar(a.out, "C")
    if report.get("fit") is not None:
        if C_path is not None:
            io.write_matrix_csv(C_path, C)
        report["fit"]["C_path"] = None if C_path is None else str(C_path)
    text = io.write_report(report, "json", a.out)
    if not a.out:
        print(text)


def _cmd_fit_or_tune(a, t0):
    X = io.read_csv_matrix(a.x, a.header)
    Y = io.read_csv_matrix(a.y, a.header)
    ds = validate_and_normalize(X, Y, center=a.center)
    trace = None
    if a.command == "fit":
        fit = solve_fixed(ds, _base_config(a, a.rank, a.sparsity))
    else:
        rep = _tune(ds, a)
        fit, trace = rep.fit, io.tune_section(rep)
    C = fit.C if a.keep_normalized else denormalize_coefficients(fit.C, ds.col_scales)
    report = {"command": a.command, "config": _config_echo(a),
              "fit": io.fit_section(fit), "tune_trace": trace, "metrics": None}
    report["timing_s"] = time.perf_counter() - t0
    _emit(a, report, C)


def _spec(a, reps=1) -> SimulationSpec:
    return SimulationSpec(n=a.n, p=a.p, q=a.q, s_star=a.sstar, r_star=a.rstar,
                          snr=a.snr, noise_kind=a.noise, replications=reps,
                          base_seed=a.seed)


def _cmd_simulate(a, t0):
    spec = _spec(a)
    data = generate(spec, a.seed)
    ds = validate_and_normalize(data.X, data.Y)
    t_fit = time.perf_counter()
    rep = _tune(ds, a)
    C = denormalize_coefficients(rep.fit.C, ds.col_scales)
    metrics = compute_metrics(C, data.C_star, data.X, time.perf_counter() - t_fit)
    for name, M in (("X", data.X), ("Y", data.Y), ("Cstar", data.C_star)):
        path = _sidecar(a.out, name)
        if path is not None:
            io.write_matrix_csv(path, M)
    report = {"command": "simulate", "config": _config_echo(a),
              "fit": io.fit_section(rep.fit), "tune_trace": io.tune_section(rep),
              "metrics": metrics.as_dict(), "omega": data.omega}
    report["timing_s"] = time.perf_counter() - t0
    _emit(a, report, C)


def _cmd_bench(a, t0):
    spec = _spec(a, a.reps)
    tuners = [_tuner(m, a) for m in a.methods.split(",")]
    threads = a.threads or default_threads()
    table = run_benchmark(spec, tuners, threads=threads)
    if a.format == "csv":
        io.write_benchmark(table, a.out, "csv")
        return
    report = {"command": "bench", "config": _config_echo(a), "fit": None,
              "tune_trace": None, "metrics": None, "table": table.csv_rows(),
              "failed_replications": table.failed_replications,
              "timing_s": time.perf_counter() - t0}
    text = io.write_report(report, "json", a.out)
    if not a.out:
        print(text)


def main(argv=None) -> int:
    t0 = time.perf_counter()
    try:
        a = parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if a.command in ("fit", "tune"):
            _cmd_fit_or_tune(a, t0)
        elif a.command == "simulate":
            _cmd_simulate(a, t0)
        else:
            _cmd_bench(a, t0)
    except Exception as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
