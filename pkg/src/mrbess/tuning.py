"""Tuning of (sparsity, rank): two-stage GIC search, full GIC grid, validation split."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .criteria import gic, gic_penalty
from .model import Dataset, FitResult, GramPolicy, SolverConfig
from .solver import fit_arrays, solve_fixed

log = logging.getLogger(__name__)

__all__ = ["gic", "gic_penalty", "GicRecord", "ValidationRecord", "TuneReport",
           "tune_gic", "tune_grid_gic", "tune_validation"]


@dataclass(frozen=True)
class GicRecord:
    """One evaluated (s, r) cell.

    ``r_effective`` is the rank of the fit (min(r_nominal, s)); ``r_penalty``
    is the rank charged in the penalty, which equals ``r_effective`` except in
    the sparsity sweep of :func:`tune_gic`, where it is held at r_max.
    """
    s: int
    r_nominal: int
    r_effective: int
    loss: float
    penalty: float
    gic: float
    iterations: int = 0
    status: str = ""
    r_penalty: int = -1

    def __post_init__(self):
        if self.r_penalty < 0:
            object.__setattr__(self, "r_penalty", self.r_effective)


@dataclass(frozen=True)
class ValidationRecord:
    s: int
    r: int
    error: float
    iterations: int = 0
    status: str = ""


@dataclass(frozen=True)
class TuneReport:
    method: str
    s_hat: int
    r_hat: int
    fit: FitResult
    stage1: tuple = ()
    stage2: tuple = ()
    grid: tuple = ()
    n_fits: int = 0

    def records(self):
        return (*self.stage1, *self.stage2, *self.grid)


@dataclass(frozen=True)
class _Defaults:
    tol: float = 1e-5
    max_iter: int = 100
    gram_policy: GramPolicy = GramPolicy.ERROR_ON_SINGULAR


def _cfg(base, rank, sparsity) -> SolverConfig:
    base = base or _Defaults()
    return SolverConfig(rank=rank, sparsity=sparsity, tol=base.tol,
                        max_iter=base.max_iter, gram_policy=base.gram_policy)


def _check_limits(dataset: Dataset, s_max: int, r_max: int) -> None:
    n, p, q = dataset.n, dataset.p, dataset.q
    problems = []
    if not 1 <= s_max <= p:
        problems.append(f"s_max = {s_max} must lie in [1, p = {p}]")
    if not 1 <= r_max <= min(n, q):
        problems.append(f"r_max = {r_max} must lie in [1, min(n, q) = {min(n, q)}]")
    if s_max > int(np.sum(~dataset.zero_columns)):
        problems.append(f"s_max = {s_max} exceeds the number of nonzero columns")
    if problems:
        raise ValueError("; ".join(problems))


def _gic_cell(dataset, s, r, config, r_penalty=None):
    """Fit one (s, r) cell; a failed fit scores +inf instead of raising."""
    n, p, q = dataset.n, dataset.p, dataset.q
    r_eff = min(r, s)
    r_pen = r_eff if r_penalty is None else r_penalty
    pen = gic_penalty(n, p, q, s, r_pen)
    try:
        fit = solve_fixed(dataset, _cfg(config, r, s))
    except (np.linalg.LinAlgError, ValueError) as exc:
        log.warning("cell (s=%d, r=%d) failed: %s", s, r, exc)
        return GicRecord(s, r, r_eff, np.inf, pen, np.inf, 0, "failed", r_pen), None
    return GicRecord(s, r, r_eff, fit.loss, pen, fit.loss + pen,
                     fit.iterations, fit.status, r_pen), fit


def _argmin(values) -> int:
    # np.argmin keeps the first minimizer, i.e. the smaller index on ties
    return int(np.argmin(np.asarray(values, dtype=float)))


def tune_gic(dataset: Dataset, s_max: int, r_max: int,
             config: SolverConfig | None = None) -> TuneReport:
    """Two-stage coordinate search: sparsity at rank r_max, then rank at that sparsity.

    The sparsity sweep charges r_max in the penalty for every s (the fit
    itself is capped at rank min(r_max, s)), so the rank term is constant
    across that sweep and only the row count is traded against the loss.
    """
    _check_limits(dataset, s_max, r_max)
    stage1 = [_gic_cell(dataset, s, r_max, config, r_penalty=r_max)[0]
              for s in range(1, s_max + 1)]
    if all(np.isinf(rec.gic) for rec in stage1):
        raise RuntimeError("every stage-1 fit failed")
    s_hat = stage1[_argmin([rec.gic for rec in stage1])].s

    cells = [_gic_cell(dataset, s_hat, r, config) for r in range(1, r_max + 1)]
    stage2 = [rec for rec, _ in cells]
    if all(np.isinf(rec.gic) for rec in stage2):
        raise RuntimeError(f"every stage-2 fit at s = {s_hat} failed")
    i = _argmin([rec.gic for rec in stage2])
    r_hat = stage2[i].r_nominal
    # the stage-2 fit at r_hat is the final fit: the solver is deterministic
    fit = replace(cells[i][1], gic=stage2[i].gic)
    return TuneReport("gic", s_hat, r_hat, fit, tuple(stage1), tuple(stage2),
                      n_fits=s_max + r_max)


def tune_grid_gic(dataset: Dataset, s_max: int, r_max: int,
                  config: SolverConfig | None = None) -> TuneReport:
    """Exhaustive GIC minimization over all (s, r) with r <= min(r_max, s)."""
    _check_limits(dataset, s_max, r_max)
    grid, fits = [], []
    for s in range(1, s_max + 1):
        for r in range(1, min(r_max, s) + 1):
            rec, fit = _gic_cell(dataset, s, r, config)
            grid.append(rec)
            fits.append(fit)
    if all(np.isinf(rec.gic) for rec in grid):
        raise RuntimeError("every grid cell failed")
    i = _argmin([rec.gic for rec in grid])
    fit = replace(fits[i], gic=grid[i].gic)
    return TuneReport("grid", grid[i].s, grid[i].r_nominal, fit,
                      grid=tuple(grid), n_fits=len(grid))


def split_rows(n: int, train_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def tune_validation(dataset: Dataset, s_max: int, r_max: int,
                    train_fraction: float = 0.8, seed=0,
                    config: SolverConfig | None = None) -> TuneReport:
    """Pick (s, r) by held-out prediction error on a seeded row split, then refit on all rows."""
    _check_limits(dataset, s_max, r_max)
    train, val = split_rows(dataset.n, train_fraction, seed)
    if train.size < s_max or val.size == 0:
        raise ValueError(
            f"infeasible split: {train.size} training rows for s_max = {s_max}, "
            f"{val.size} validation rows")
    r_max = min(r_max, train.size)
    Xt, Yt = dataset.X[train], dataset.Y[train]
    Xv, Yv = dataset.X[val], dataset.Y[val]
    exclude = dataset.zero_columns
    grid = []
    for s in range(1, s_max + 1):
        for r in range(1, min(r_max, s) + 1):
            try:
                fit = fit_arrays(Xt, Yt, _cfg(config, r, s), exclude=exclude)
            except (np.linalg.LinAlgError, ValueError) as exc:
                log.warning("validation cell (s=%d, r=%d) failed: %s", s, r, exc)
                grid.append(ValidationRecord(s, r, np.inf, 0, "failed"))
                continue
            A = fit.active_set
            err = float(np.sum((Yv - Xv[:, A] @ fit.C[A]) ** 2) / Yv.size)
            grid.append(ValidationRecord(s, r, err, fit.iterations, fit.status))
    if all(np.isinf(rec.error) for rec in grid):
        raise RuntimeError("every validation cell failed")
    best = grid[_argmin([rec.error for rec in grid])]
    fit = solve_fixed(dataset, _cfg(config, best.r, best.s))
    return TuneReport("validation", best.s, best.r, fit, grid=tuple(grid),
                      n_fits=len(grid) + 1)
