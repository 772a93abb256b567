import numpy as np
import pytest


def random_instance(rng, n=50, p=20, q=8, s=4, r=2, noise=0.5):
    """Gaussian design and a row-sparse rank-r coefficient matrix on a random support."""
    X = rng.standard_normal((n, p))
    A = np.sort(rng.choice(p, size=s, replace=False))
    C = np.zeros((p, q))
    C[A] = rng.standard_normal((s, r)) @ rng.standard_normal((r, q))
    Y = X @ C + noise * rng.standard_normal((n, q))
    return X, Y, C, A


def orthogonal_design(rng, n, p):
    """X with X^T X = n I."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return Q * np.sqrt(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
