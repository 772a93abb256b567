"""Reduced-rank regression restricted to a row support, and the primal-dual update.

Every solver iteration reduces to: factor the Gram matrix of the active
columns once, take the top-r right factors of the projected response, solve
for the active rows of B and form the dual rows on the inactive set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import null_space

from .model import GramPolicy, SingularGramError

COND_LIMIT = 1e12
PINV_RTOL = 1e-12
EIG_RTOL = 1e-12


class RankDeficiencyWarning(RuntimeWarning):
    """Fewer positive eigenvalues than the requested rank."""


@dataclass(frozen=True)
class PrimalDualState:
    B: np.ndarray
    Gamma: np.ndarray
    V: np.ndarray
    active_set: np.ndarray


class RestrictedFit(NamedTuple):
    C: np.ndarray
    B: np.ndarray
    V: np.ndarray
    loss: float
    eigenvalues: np.ndarray  # descending eigenvalues of Y^T P_A Y / n


def as_index_set(A, p: int | None = None) -> np.ndarray:
    A = np.unique(np.asarray(A, dtype=np.intp).ravel())
    if A.size == 0:
        raise ValueError("active set must be non-empty")
    if A[0] < 0 or (p is not None and A[-1] >= p):
        raise ValueError(f"active set indices out of range [0, {p})")
    return A


class _Gram:
    """Eigen-factorization of X_A^T X_A with the condition check applied."""

    def __init__(self, XA: np.ndarray, policy=GramPolicy.ERROR_ON_SINGULAR):
        policy = GramPolicy(policy)
        w, U = np.linalg.eigh(XA.T @ XA)
        wmax = w[-1]
        cond = wmax / w[0] if w[0] > 0 else np.inf
        self.cond = cond
        if cond >= COND_LIMIT:
            if policy is GramPolicy.ERROR_ON_SINGULAR:
                raise SingularGramError(XA.shape[1], cond)
            keep = w > PINV_RTOL * wmax if wmax > 0 else np.zeros_like(w, bool)
            w, U = w[keep], U[:, keep]
        self.w = w
        self.U = U

    def inverse(self) -> np.ndarray:
        return (self.U / self.w) @ self.U.T

    def solve(self, M: np.ndarray) -> np.ndarray:
        return self.U @ ((self.U.T @ M) / self.w[:, None])

    def whiten(self, M: np.ndarray) -> np.ndarray:
        # D^{-1/2} U^T M: same right singular structure as G^{-1/2} M
        return (self.U.T @ M) / np.sqrt(self.w)[:, None]


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (first index on ties)."""
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _eig_projected(XtY_A: np.ndarray, gram: _Gram, route: str = "auto"):
    """Descending eigenpairs of Y^T P_A Y from X_A^T Y and the Gram factor."""
    q = XtY_A.shape[1]
    k = gram.w.size
    if route == "auto":
        route = "factor" if k < q else "gram"
    if route == "factor":
        M = gram.whiten(XtY_A)
        _, sv, Vt = np.linalg.svd(M, full_matrices=False)
        return sv ** 2, Vt.T
    if route == "gram":
        S = XtY_A.T @ gram.solve(XtY_A)
        d, vecs = np.linalg.eigh((S + S.T) / 2)
        return d[::-1], vecs[:, ::-1]
    raise ValueError(f"unknown eigen route {route!r}")


def _select_factors(d: np.ndarray, vecs: np.ndarray, r: int, q: int):
    top = d[0] if d.size else 0.0
    k_pos = int(np.sum(d > EIG_RTOL * top)) if top > 0 else 0
    if r <= k_pos:
        return fix_signs(vecs[:, :r]), False
    kept = vecs[:, :k_pos]
    basis = np.eye(q) if k_pos == 0 else null_space(kept.T)
    V = np.hstack([kept, basis[:, :r - k_pos]])
    return fix_signs(V), True


def _right_factors(XtY_A, gram, r, route="auto"):
    q = XtY_A.shape[1]
    d, vecs = _eig_projected(XtY_A, gram, route)
    V, deficient = _select_factors(d, vecs, r, q)
    return V, np.clip(d, 0.0, None), deficient


def _check_rank(r: int, size: int, n: int, q: int) -> None:
    if r < 1 or r > min(size, q, n):
        raise ValueError(
            f"rank {r} must lie in [1, min(|A|, q, n)] = [1, {min(size, q, n)}]")


def restricted_gram_inverse(X, A, policy=GramPolicy.ERROR_ON_SINGULAR) -> np.ndarray:
    """Inverse (or truncated pseudo-inverse) of X_A^T X_A."""
    X = np.asarray(X, dtype=float)
    A = as_index_set(A, X.shape[1])
    return _Gram(X[:, A], policy).inverse()


def top_r_right_factors(X, Y, A, r: int, route: str = "auto",
                        policy=GramPolicy.ERROR_ON_SINGULAR) -> np.ndarray:
    """Top-r eigenvectors (q x r) of Y^T P_A Y, with the deterministic sign convention.

    ``route="factor"`` takes right singular vectors of the whitened |A| x q
    factor; ``route="gram"`` eigen-decomposes the q x q matrix directly.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    A = as_index_set(A, X.shape[1])
    _check_rank(r, A.size, X.shape[0], Y.shape[1])
    XA = X[:, A]
    V, _, deficient = _right_factors(XA.T @ Y, _Gram(XA, policy), r, route)
    if deficient:
        warnings.warn(
            f"fewer than {r} positive eigenvalues on an active set of size "
            f"{A.size}; completed from the null eigenspace",
            RankDeficiencyWarning, stacklevel=2)
    return V


def _primal_dual(X, Y, A, V, gram, XtY_A):
    n, p = X.shape
    B = np.zeros((p, V.shape[1]))
    B[A] = gram.solve(XtY_A @ V)
    resid = Y @ V - X[:, A] @ B[A]
    Gamma = X.T @ resid / n
    Gamma[A] = 0.0
    return PrimalDualState(B=B, Gamma=Gamma, V=V, active_set=A)


def primal_dual_update(X, Y, A, V, policy=GramPolicy.ERROR_ON_SINGULAR) -> PrimalDualState:
    """Restricted least squares on A for the primal rows, scaled residual
    correlations on the complement for the dual rows."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    V = np.asarray(V, dtype=float)
    A = as_index_set(A, X.shape[1])
    XA = X[:, A]
    return _primal_dual(X, Y, A, V, _Gram(XA, policy), XA.T @ Y)


def sacrifices(state: PrimalDualState) -> np.ndarray:
    """Row norms of B + Gamma."""
    return np.linalg.norm(state.B + state.Gamma, axis=1)


class _Step(NamedTuple):
    state: PrimalDualState
    C: np.ndarray
    loss: float
    eigenvalues: np.ndarray
    deficient: bool


def restricted_step(X, Y, A, r, policy=GramPolicy.ERROR_ON_SINGULAR) -> _Step:
    """One full kernel evaluation on active set A (sorted index array)."""
    n = X.shape[0]
    XA = X[:, A]
    gram = _Gram(XA, policy)
    XtY_A = XA.T @ Y
    V, d, deficient = _right_factors(XtY_A, gram, r)
    state = _primal_dual(X, Y, A, V, gram, XtY_A)
    C = state.B @ V.T
    R = Y - XA @ C[A]
    loss = float(np.sum(R * R) / (2 * n))
    return _Step(state, C, loss, d / n, deficient)


def rrr_restricted_fit(X, Y, A, r: int,
                       policy=GramPolicy.ERROR_ON_SINGULAR) -> RestrictedFit:
    """Closed-form rank-r regression using only the columns in A."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    A = as_index_set(A, X.shape[1])
    _check_rank(r, A.size, X.shape[0], Y.shape[1])
    step = restricted_step(X, Y, A, r, policy)
    return RestrictedFit(step.C, step.state.B, step.state.V, step.loss,
                         step.eigenvalues)
