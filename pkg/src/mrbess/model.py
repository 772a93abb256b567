"""Domain types, input validation and column normalization."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


class GramPolicy(str, enum.Enum):
    ERROR_ON_SINGULAR = "error_on_singular"
    PSEUDO_INVERSE = "pseudo_inverse"


class SingularGramError(np.linalg.LinAlgError):
    """Raised when X_A^T X_A is too ill-conditioned to invert."""

    def __init__(self, size: int, cond: float):
        self.size = size
        self.cond = cond
        super().__init__(
            f"singular Gram matrix on an active set of size {size} "
            f"(condition number {cond:.3g})")


@dataclass(frozen=True)
class Dataset:
    """Design/response pair with X columns scaled to norm sqrt(n).

    ``col_scales[j]`` is the original column norm divided by sqrt(n); it is
    zero exactly for identically-zero columns, which stay zero in ``X``.
    When ``centered`` is set, ``x_mean``/``y_mean`` hold the subtracted means.
    """
    X: np.ndarray
    Y: np.ndarray
    col_scales: np.ndarray
    centered: bool = False
    x_mean: np.ndarray | None = None
    y_mean: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    @property
    def zero_columns(self) -> np.ndarray:
        return self.col_scales == 0


@dataclass(frozen=True)
class SolverConfig:
    """Settings of a single fixed-(rank, sparsity) solve.

    A rank above the sparsity is accepted and capped to it at solve time.
    """
    rank: int
    sparsity: int
    tol: float = 1e-5
    max_iter: int = 100
    gram_policy: GramPolicy = GramPolicy.ERROR_ON_SINGULAR

    def __post_init__(self):
        object.__setattr__(self, "gram_policy", GramPolicy(self.gram_policy))
        problems = []
        if int(self.rank) != self.rank or self.rank < 1:
            problems.append(f"rank must be an integer >= 1, got {self.rank}")
        if int(self.sparsity) != self.sparsity or self.sparsity < 1:
            problems.append(
                f"sparsity must be an integer >= 1, got {self.sparsity}")
        if not self.tol > 0:
            problems.append(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            problems.append(f"max_iter must be >= 1, got {self.max_iter}")
        if problems:
            raise ValueError("; ".join(problems))

    def check_against(self, n: int, p: int, q: int) -> None:
        if self.sparsity > p:
            raise ValueError(f"sparsity {self.sparsity} exceeds p = {p}")
        if self.rank > min(q, n):
            raise ValueError(
                f"rank {self.rank} exceeds min(q, n) = {min(q, n)}")


@dataclass(frozen=True)
class IterationRecord:
    active_set_hash: int
    delta_c: float
    loss: float


@dataclass(frozen=True)
class IterationTrace:
    records: tuple[IterationRecord, ...]
    status: str  # tol_converged | active_set_fixed_point | cycle_detected | max_iter

    STATUSES = ("tol_converged", "active_set_fixed_point", "cycle_detected",
                "max_iter")

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class FitResult:
    C: np.ndarray
    B: np.ndarray
    V: np.ndarray
    active_set: np.ndarray
    rank: int
    sparsity: int
    loss: float
    gic: float
    iterations: int
    converged: bool
    cycled: bool
    status: str = "max_iter"
    trace: IterationTrace | None = None
    rank_capped: bool = False
    rank_deficient: bool = False
    init_padded: bool = False

    def __post_init__(self):
        for name in ("C", "B", "V"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        a = np.array(self.active_set, dtype=np.intp)
        a.flags.writeable = False
        object.__setattr__(self, "active_set", a)


@dataclass(frozen=True)
class MetricsRecord:
    er_c: float
    er_xc: float
    fpr: float
    fnr: float
    est_rank: int
    wall_time_s: float = 0.0

    FIELDS = ("er_c", "er_xc", "fpr", "fnr", "est_rank", "wall_time_s")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


def validate_and_normalize(X_raw, Y, center: bool = False) -> Dataset:
    """Check shapes/finiteness and rescale every nonzero column of X to norm sqrt(n)."""
    X_raw = np.asarray(X_raw, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X_raw.ndim != 2 or Y.ndim != 2:
        raise ValueError("X and Y must be 2-dimensional")
    n = X_raw.shape[0]
    if Y.shape[0] != n:
        raise ValueError(
            f"dimension mismatch: X has {n} rows but Y has {Y.shape[0]}")
    if n < 3:
        raise ValueError(f"need n >= 3 observations, got {n}")
    if not (np.isfinite(X_raw).all() and np.isfinite(Y).all()):
        raise ValueError("X and Y must contain only finite values")

    x_mean = y_mean = None
    if center:
        x_mean = X_raw.mean(axis=0)
        y_mean = Y.mean(axis=0)
        X_raw = X_raw - x_mean
        Y = Y - y_mean

    zero = ~np.any(X_raw != 0, axis=0)
    norms = np.linalg.norm(X_raw, axis=0)
    scales = np.where(zero, 0.0, norms / np.sqrt(n))
    X = np.zeros_like(X_raw)
    X[:, ~zero] = X_raw[:, ~zero] / scales[~zero]
    return Dataset(
        X=_frozen(X), Y=_frozen(Y), col_scales=_frozen(scales),
        centered=bool(center),
        x_mean=None if x_mean is None else _frozen(x_mean),
        y_mean=None if y_mean is None else _frozen(y_mean))


def denormalize_coefficients(C_norm, col_scales) -> np.ndarray:
    """Map coefficients fitted on the normalized design back to raw column scale."""
    C_norm = np.asarray(C_norm, dtype=float)
    col_scales = np.asarray(col_scales, dtype=float)
    if C_norm.ndim != 2 or C_norm.shape[0] != col_scales.shape[0]:
        raise ValueError(
            f"shape mismatch: C has shape {C_norm.shape}, "
            f"col_scales has length {col_scales.shape[0]}")
    out = np.zeros_like(C_norm)
    nz = col_scales != 0
    out[nz] = C_norm[nz] / col_scales[nz, None]
    return out


def row_support(C: np.ndarray) -> np.ndarray:
    return np.any(np.asarray(C) != 0, axis=1)


def numerical_rank(C: np.ndarray, rtol: float = 1e-8) -> int:
    sv = np.linalg.svd(np.asarray(C, dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def compute_metrics(C_hat, C_star, X, elapsed_s: float = 0.0) -> MetricsRecord:
    """Estimation/prediction error and row-support FPR/FNR of ``C_hat``.

    A rate whose denominator is empty is reported as 0.
    """
    C_hat = np.asarray(C_hat, dtype=float)
    C_star = np.asarray(C_star, dtype=float)
    X = np.asarray(X, dtype=float)
    if C_hat.shape != C_star.shape or X.shape[1] != C_hat.shape[0]:
        raise ValueError(
            f"shape mismatch: C_hat {C_hat.shape}, C_star {C_star.shape}, "
            f"X {X.shape}")
    n, p = X.shape
    q = C_hat.shape[1]
    diff = C_hat - C_star
    er_c = float(np.sum(diff ** 2) / (p * q))
    er_xc = float(np.sum((X @ diff) ** 2) / (n * q))

    sel = row_support(C_hat)
    true = row_support(C_star)
    tp = int(np.sum(sel & true))
    fp = int(np.sum(sel & ~true))
    tn = int(np.sum(~sel & ~true))
    fn = int(np.sum(~sel & true))
    fpr = fp / (tn + fp) if tn + fp else 0.0
    fnr = fn / (tp + fn) if tp + fn else 0.0
    return MetricsRecord(er_c=er_c, er_xc=er_xc, fpr=fpr, fnr=fnr,
                         est_rank=numerical_rank(C_hat),
                         wall_time_s=float(elapsed_s))
