import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from mrbess.model import SingularGramError
from mrbess.rrr import (PrimalDualState, RankDeficiencyWarning, fix_signs,
                        primal_dual_update, restricted_gram_inverse,
                        rrr_restricted_fit, sacrifices, top_r_right_factors)

from conftest import orthogonal_design, random_instance


def projector(XA):
    return XA @ np.linalg.inv(XA.T @ XA) @ XA.T


def dense_eig(X, Y, A):
    """Independent oracle: explicit Y^T P_A Y and a dense symmetric eigensolve."""
    P = projector(X[:, A])
    d, U = np.linalg.eigh(Y.T @ P @ Y)
    return d[::-1], U[:, ::-1]


# --- Gram inverse -------------------------------------------------------------

def test_gram_inverse_orthogonal_design(rng):
    X = orthogonal_design(rng, 30, 6)
    np.testing.assert_allclose(restricted_gram_inverse(X, [0, 2, 5]), np.eye(3) / 30,
                               atol=1e-14)


def test_gram_inverse_single_column(rng):
    x = rng.standard_normal((25, 1))
    x *= 5 / np.linalg.norm(x)
    np.testing.assert_allclose(restricted_gram_inverse(x, [0]), [[1 / 25]], rtol=1e-12)


def test_gram_inverse_multiplies_back(rng):
    X = rng.standard_normal((40, 9))
    A = [1, 3, 4, 6, 8]
    G = X[:, A].T @ X[:, A]
    np.testing.assert_allclose(restricted_gram_inverse(X, A) @ G, np.eye(5), atol=1e-8)


def test_singular_gram_errors_or_pseudo_inverts(rng):
    X = rng.standard_normal((20, 4))
    X[:, 3] = X[:, 0] + X[:, 1]
    with pytest.raises(SingularGramError, match="size 4"):
        restricted_gram_inverse(X, [0, 1, 2, 3])
    G = X.T @ X
    Ginv = restricted_gram_inverse(X, [0, 1, 2, 3], policy="pseudo_inverse")
    np.testing.assert_allclose(Ginv, np.linalg.pinv(G, rcond=1e-12, hermitian=True),
                               atol=1e-10)


# --- right factors --------------------------------------------------------------

def test_exact_rank_one_response(rng):
    X = rng.standard_normal((30, 6))
    A = [0, 2, 3]
    G = rng.standard_normal((3, 1)) @ rng.standard_normal((1, 5))
    Y = X[:, A] @ G
    V = top_r_right_factors(X, Y, A, 1)
    _, _, Vt = np.linalg.svd(X[:, A] @ G)
    assert abs(abs(V[:, 0] @ Vt[0]) - 1) < 1e-10
    d, _ = dense_eig(X, Y, A)
    assert abs(d[1]) <= 1e-8 * d[0]


def test_full_rank_gives_orthonormal_basis(rng):
    X = orthogonal_design(rng, 20, 5)
    Y = rng.standard_normal((20, 4))
    V = top_r_right_factors(X, Y, range(5), 4)
    np.testing.assert_allclose(V.T @ V, np.eye(4), atol=1e-10)


@pytest.mark.parametrize("route", ["factor", "gram", "auto"])
def test_right_factors_match_dense_oracle(rng, route):
    X = rng.standard_normal((20, 4))
    Y = rng.standard_normal((20, 6))
    V = top_r_right_factors(X, Y, range(4), 2, route=route)
    _, U = dense_eig(X, Y, range(4))
    np.testing.assert_allclose(V, fix_signs(U[:, :2]), atol=1e-8)


def test_both_routes_agree(rng):
    for _ in range(20):
        X, Y, _, _ = random_instance(rng, n=40, p=12, q=7, s=5, r=3)
        A = np.sort(rng.choice(12, size=int(rng.integers(2, 10)), replace=False))
        r = int(rng.integers(1, min(len(A), 7) + 1))
        Vf = top_r_right_factors(X, Y, A, r, route="factor")
        Vg = top_r_right_factors(X, Y, A, r, route="gram")
        np.testing.assert_allclose(Vf, Vg, atol=1e-7)


def test_sign_convention():
    V = fix_signs(np.array([[0.6, -0.8], [-0.8, 0.6]]))
    assert V[1, 0] > 0 and V[0, 1] > 0
    tie = fix_signs(np.array([[-0.5], [0.5]]))
    assert tie[0, 0] == 0.5  # first index wins a magnitude tie


def test_rank_deficiency_completion(rng):
    X = rng.standard_normal((15, 4))
    Y = np.outer(X[:, 0], [1.0, 2.0, 0.0, 0.0, 1.0])
    with pytest.warns(RankDeficiencyWarning):
        V = top_r_right_factors(X, Y, [0, 1, 2], 3)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)
    direction = np.array([1.0, 2.0, 0.0, 0.0, 1.0]) / np.sqrt(6)
    assert abs(V[:, 0] @ direction) == pytest.approx(1.0, abs=1e-12)


def test_full_rank_request_does_not_warn(rng):
    X, Y, _, _ = random_instance(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        top_r_right_factors(X, Y, [0, 1, 2], 3)


def test_rank_too_large():
    with pytest.raises(ValueError, match="rank"):
        top_r_right_factors(np.eye(4), np.eye(4), [0, 1], 3)


# --- restricted fit ---------------------------------------------------------------

def test_full_rank_case_equals_least_squares(rng):
    X, Y, _, _ = random_instance(rng, n=30, p=8, q=3, s=3, r=2)
    A = [0, 1, 4, 6]
    fit = rrr_restricted_fit(X, Y, A, 3)
    ls, *_ = np.linalg.lstsq(X[:, A], Y, rcond=None)
    np.testing.assert_allclose(fit.C[A], ls, atol=1e-10)
    assert np.all(fit.C[[2, 3, 5, 7]] == 0)


def test_noiseless_oracle_recovers_truth(rng):
    X, Y, C, A = random_instance(rng, n=40, p=10, q=6, s=4, r=2, noise=0.0)
    fit = rrr_restricted_fit(X, Y, A, 2)
    np.testing.assert_allclose(fit.C, C, atol=1e-8)
    assert fit.loss == pytest.approx(0.0, abs=1e-16)


def test_restricted_fit_against_dense_formula(rng):
    X, Y, _, _ = random_instance(rng, n=35, p=10, q=6, s=4, r=2)
    A = [1, 2, 5, 7, 9]
    fit = rrr_restricted_fit(X, Y, A, 2)
    _, U = dense_eig(X, Y, A)
    V = U[:, :2]
    XA = X[:, A]
    C_oracle = np.zeros((10, 6))
    C_oracle[A] = np.linalg.solve(XA.T @ XA, XA.T @ Y @ V) @ V.T
    np.testing.assert_allclose(fit.C, C_oracle, atol=1e-10)
    np.testing.assert_allclose(fit.C, fit.B @ fit.V.T, atol=1e-12)
    resid = Y - X @ C_oracle
    assert fit.loss == pytest.approx(np.sum(resid ** 2) / 70, rel=1e-12)


def test_loss_trace_identity(rng):
    for _ in range(25):
        X, Y, _, _ = random_instance(rng)
        A = np.sort(rng.choice(20, size=int(rng.integers(1, 9)), replace=False))
        r = int(rng.integers(1, min(len(A), 4) + 1))
        fit = rrr_restricted_fit(X, Y, A, r)
        d, _ = dense_eig(X, Y, A)
        rhs = np.trace(Y.T @ Y) / (2 * 50) - 0.5 * np.sum(d[:r] / 50)
        assert fit.loss == pytest.approx(rhs, rel=1e-8)


def test_eigenvalues_descending_and_nonnegative(rng):
    X, Y, _, _ = random_instance(rng)
    d = rrr_restricted_fit(X, Y, range(8), 3).eigenvalues
    assert np.all(np.diff(d) <= 1e-10)
    assert np.all(d >= -1e-10)


def test_projection_idempotent(rng):
    X = rng.standard_normal((12, 5))
    P = projector(X[:, [0, 2, 3]])
    assert np.linalg.norm(P @ P - P) <= 1e-8


def test_loss_non_increasing_in_rank(rng):
    X, Y, _, _ = random_instance(rng, q=8)
    A = list(range(6))
    losses = [rrr_restricted_fit(X, Y, A, r).loss for r in range(1, 7)]
    assert all(b <= a + 1e-10 for a, b in zip(losses, losses[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_rotation_invariance(seed, r):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((9, r))
    V, _ = np.linalg.qr(rng.standard_normal((6, r)))
    Q = ortho_group.rvs(r, random_state=rng) if r > 1 else np.array([[-1.0]])
    np.testing.assert_allclose((B @ Q) @ (V @ Q).T, B @ V.T, atol=1e-10)


# --- primal-dual update -------------------------------------------------------------

def test_full_active_set_has_no_dual(rng):
    X, Y, _, _ = random_instance(rng, n=30, p=6, q=4, s=3, r=2)
    V = top_r_right_factors(X, Y, range(6), 2)
    st_ = primal_dual_update(X, Y, range(6), V)
    assert np.all(st_.Gamma == 0)


def test_orthogonal_design_dual(rng):
    X = orthogonal_design(rng, 40, 8)
    Y = rng.standard_normal((40, 5))
    A = [1, 4, 6]
    V = top_r_right_factors(X, Y, A, 2)
    st_ = primal_dual_update(X, Y, A, V)
    inactive = [0, 2, 3, 5, 7]
    np.testing.assert_allclose(st_.Gamma[inactive], X[:, inactive].T @ Y @ V / 40,
                               atol=1e-12)


def test_primal_dual_against_naive_formula(rng):
    X, Y, _, _ = random_instance(rng)
    A = [0, 3, 4, 9, 15]
    I = [j for j in range(20) if j not in A]
    V = top_r_right_factors(X, Y, A, 2)
    st_ = primal_dual_update(X, Y, A, V)
    XA = X[:, A]
    B_A = np.linalg.inv(XA.T @ XA) @ XA.T @ Y @ V
    np.testing.assert_allclose(st_.B[A], B_A, atol=1e-10)
    assert np.all(st_.B[I] == 0) and np.all(st_.Gamma[A] == 0)
    B = np.zeros((20, 2))
    B[A] = B_A
    np.testing.assert_allclose(st_.Gamma[I], X[:, I].T @ (Y @ V - X @ B) / 50, atol=1e-10)
    np.testing.assert_allclose(st_.V.T @ st_.V, np.eye(2), atol=1e-8)


# --- sacrifices -------------------------------------------------------------------

def test_sacrifice_examples():
    z = np.zeros((3, 2))
    assert np.all(sacrifices(PrimalDualState(z, z, np.eye(2), np.array([0]))) == 0)
    B = z.copy()
    B[0] = [3.0, 4.0]
    assert sacrifices(PrimalDualState(B, z, np.eye(2), np.array([0])))[0] == 5.0


def test_sacrifice_matches_row_norm_oracle(rng):
    X, Y, _, _ = random_instance(rng)
    A = [2, 5, 11]
    st_ = primal_dual_update(X, Y, A, top_r_right_factors(X, Y, A, 2))
    delta = sacrifices(st_)
    for j in range(20):
        row = st_.B[j] if j in A else st_.Gamma[j]
        assert delta[j] == pytest.approx(np.sqrt(np.sum(row ** 2)), abs=1e-12)
