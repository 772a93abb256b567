"""Primal-dual active-set solver for fixed rank and row sparsity."""

from __future__ import annotations

import warnings

import numpy as np

from .criteria import gic
from .model import (Dataset, FitResult, IterationRecord, IterationTrace,
                    SolverConfig)
from .rrr import as_index_set, fix_signs, restricted_step, sacrifices


SCREEN_RTOL = 1e-12


class InitPaddingWarning(RuntimeWarning):
    """Screening found fewer than s columns with a positive score."""


def select_active(delta, s: int) -> np.ndarray:
    """Indices of the s largest entries of ``delta``, smaller index first on ties.

    Returned sorted ascending.
    """
    delta = np.asarray(delta, dtype=float)
    if not 1 <= s <= delta.size:
        raise ValueError(f"s = {s} must lie in [1, {delta.size}]")
    order = np.argsort(-delta, kind="stable")
    return np.sort(order[:s])


def _zero_columns(X: np.ndarray) -> np.ndarray:
    return ~np.any(X != 0, axis=0)


def _screen(X, Y, r, s, exclude):
    _, _, Vt = np.linalg.svd(Y, full_matrices=False)
    V0 = fix_signs(Vt[:r].T)
    delta = np.linalg.norm(X.T @ (Y @ V0), axis=1)
    # numerically-zero scores fall back to index order
    top = delta.max() if delta.size else 0.0
    delta[delta <= SCREEN_RTOL * top] = 0.0
    delta[exclude] = -np.inf
    A = select_active(delta, s)
    return A, bool(np.any(delta[A] <= 0))


def init_active_set(X, Y, r: int, s: int, exclude=None) -> np.ndarray:
    """Screening start: top-s rows of X^T Y V0 by norm, V0 the top-r right
    singular vectors of Y. Zero columns (or ``exclude``) are never chosen."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    if not 1 <= r <= min(n, Y.shape[1]):
        raise ValueError(f"r = {r} must lie in [1, min(n, q)]")
    exclude = _zero_columns(X) if exclude is None else np.asarray(exclude, bool)
    if s > int(np.sum(~exclude)):
        raise ValueError(
            f"s = {s} exceeds the number of selectable (nonzero) columns")
    A, padded = _screen(X, Y, r, s, exclude)
    if padded:
        warnings.warn(
            "fewer than s columns have a positive screening score; padded "
            "with the smallest-index remaining columns", InitPaddingWarning,
            stacklevel=2)
    return A


def _key(A: np.ndarray) -> tuple:
    return tuple(int(j) for j in A)


def fit_arrays(X, Y, config: SolverConfig, init=None, exclude=None) -> FitResult:
    """Run the fixed-(r, s) iteration on raw arrays.

    ``init`` overrides the screening start; ``exclude`` marks columns that may
    never enter the active set (defaults to identically-zero columns).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    q = Y.shape[1]
    config.check_against(n, p, q)
    s = config.sparsity
    exclude = _zero_columns(X) if exclude is None else np.asarray(exclude, bool)
    if s > int(np.sum(~exclude)):
        raise ValueError(
            f"sparsity {s} exceeds the number of selectable (nonzero) columns")
    r = min(config.rank, s)

    padded = False
    if init is None:
        A, padded = _screen(X, Y, r, s, exclude)
    else:
        A = as_index_set(init, p)
        if A.size != s:
            raise ValueError(f"initial active set has size {A.size}, expected {s}")

    C_prev = np.zeros((p, q))
    visited = {_key(A): 0}
    iterates = []
    records = []
    status = "max_iter"
    chosen = None
    for k in range(config.max_iter):
        step = restricted_step(X, Y, A, r, config.gram_policy)
        delta = sacrifices(step.state)
        delta[exclude] = -np.inf
        A_next = select_active(delta, s)
        dc = float(np.linalg.norm(step.C - C_prev))
        iterates.append((A, step))
        records.append(IterationRecord(hash(_key(A)), dc, step.loss))
        if dc <= config.tol:
            status = "tol_converged"
            break
        if np.array_equal(A_next, A):
            status = "active_set_fixed_point"
            break
        seen = visited.get(_key(A_next))
        if seen is not None:
            status = "cycle_detected"
            cycle = iterates[seen:]
            chosen = min(range(len(cycle)), key=lambda i: cycle[i][1].loss) + seen
            break
        visited[_key(A_next)] = k + 1
        A, C_prev = A_next, step.C

    A, step = iterates[-1 if chosen is None else chosen]
    try:
        crit = gic(step.loss, n, p, q, s, r)
    except ValueError:
        crit = float("nan")
    return FitResult(
        C=step.C, B=step.state.B, V=step.state.V, active_set=A, rank=r,
        sparsity=s, loss=step.loss, gic=crit, iterations=len(iterates),
        converged=status in ("tol_converged", "active_set_fixed_point"),
        cycled=status == "cycle_detected", status=status,
        trace=IterationTrace(tuple(records), status),
        rank_capped=r < config.rank, rank_deficient=step.deficient,
        init_padded=padded)


def solve_fixed(dataset: Dataset, config: SolverConfig, init=None) -> FitResult:
    """Fit with fixed rank and sparsity on a normalized dataset."""
    return fit_arrays(dataset.X, dataset.Y, config, init=init,
                      exclude=dataset.zero_columns)
