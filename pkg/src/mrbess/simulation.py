"""Synthetic sparse low-rank data, SNR control, and the replication harness."""

from __future__ import annotations

import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import (MetricsRecord, SolverConfig, compute_metrics,
                    denormalize_coefficients, validate_and_normalize)
from .tuning import tune_gic, tune_grid_gic, tune_validation
from .solver import solve_fixed

log = logging.getLogger(__name__)

NOISE_KINDS = ("AR", "SC")


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    p: int
    q: int
    s_star: int
    r_star: int
    snr: float
    d0: float = 5.0
    step: float = 5.0
    design_rho: float = 0.5
    noise_kind: str = "AR"
    noise_rho: float = 0.3
    replications: int = 20
    base_seed: int = 0

    def __post_init__(self):
        problems = []
        if min(self.n, self.p, self.q, self.s_star, self.r_star) < 1:
            problems.append("n, p, q, s_star, r_star must all be >= 1")
        if not self.r_star <= self.s_star <= self.p:
            problems.append(
                f"need r_star <= s_star <= p, got {self.r_star}, {self.s_star}, {self.p}")
        if self.r_star > min(self.n, self.q):
            problems.append(f"r_star = {self.r_star} exceeds min(n, q)")
        if not self.snr > 0:
            problems.append(f"snr must be positive, got {self.snr}")
        if not self.step > 0:
            problems.append("step must be positive so singular weights increase")
        if self.noise_kind not in NOISE_KINDS:
            problems.append(f"noise_kind must be one of {NOISE_KINDS}")
        if self.replications < 1:
            problems.append("replications must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def weights(self) -> np.ndarray:
        k = np.arange(1, self.r_star + 1)
        return self.d0 + self.step * k


def ar_cov(dim: int, rho: float) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def sc_cov(dim: int, rho: float) -> np.ndarray:
    S = np.full((dim, dim), rho)
    np.fill_diagonal(S, 1.0)
    return S


def gen_coefficient(spec: SimulationSpec, seed):
    """Return (C_star, A_star, D): C_star = B D A^T with support on the first s_star rows."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((spec.q, spec.r_star))
    mag = rng.uniform(0.3, 1.0, size=(spec.s_star, spec.r_star))
    sign = rng.choice([-1.0, 1.0], size=(spec.s_star, spec.r_star))
    B = np.zeros((spec.p, spec.r_star))
    B[:spec.s_star] = mag * sign
    A /= np.linalg.norm(A, axis=0)
    B /= np.linalg.norm(B, axis=0)
    D = np.diag(spec.weights)
    return B @ D @ A.T, np.arange(spec.s_star), D


def gen_design(spec: SimulationSpec, seed) -> np.ndarray:
    """Rows i.i.d. N(0, DesignCov) with DesignCov[i, j] = design_rho^|i-j|."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((spec.n, spec.p))
    if spec.design_rho == 0:
        return Z
    L = np.linalg.cholesky(ar_cov(spec.p, spec.design_rho))
    return Z @ L.T


def noise_cov(spec: SimulationSpec) -> np.ndarray:
    if spec.noise_kind == "AR":
        return ar_cov(spec.q, spec.noise_rho)
    return sc_cov(spec.q, spec.noise_rho)


def gen_noise_with_snr(XC_star, spec: SimulationSpec, seed):
    """Correlated Gaussian noise scaled so that eta_{r*} / ||E||_F == snr.

    eta_{r*} is the r*-th largest singular value of XC_star. Returns (E, omega)
    with omega the variance multiplier applied to the base covariance.
    """
    XC_star = np.asarray(XC_star, dtype=float)
    eta = np.linalg.svd(XC_star, compute_uv=False)[spec.r_star - 1]
    if eta <= 0:
        raise ValueError("signal XC_star has fewer than r_star positive singular values")
    L = np.linalg.cholesky(noise_cov(spec))
    rng = np.random.default_rng(seed)
    for _ in range(8):
        E_raw = rng.standard_normal(XC_star.shape) @ L.T
        norm = np.linalg.norm(E_raw)
        if norm > 0:
            break
    else:  # pragma: no cover - probability zero
        raise RuntimeError("could not draw a nonzero noise matrix")
    c = eta / (spec.snr * norm)
    return c * E_raw, c * c


def realized_snr(XC_star, E, r_star: int) -> float:
    eta = np.linalg.svd(np.asarray(XC_star), compute_uv=False)[r_star - 1]
    return float(eta / np.linalg.norm(E))


@dataclass(frozen=True)
class Replication:
    X: np.ndarray
    Y: np.ndarray
    C_star: np.ndarray
    A_star: np.ndarray
    E: np.ndarray
    omega: float
    seed: int


def generate(spec: SimulationSpec, seed: int) -> Replication:
    """Draw one replication; the three generators use independent child streams of ``seed``."""
    ss_coef, ss_design, ss_noise = np.random.SeedSequence(seed).spawn(3)
    C_star, A_star, _ = gen_coefficient(spec, ss_coef)
    X = gen_design(spec, ss_design)
    XC = X @ C_star
    E, omega = gen_noise_with_snr(XC, spec, ss_noise)
    return Replication(X, XC + E, C_star, A_star, E, omega, seed)


# --- tuners -----------------------------------------------------------------

@dataclass(frozen=True)
class Tuner:
    """One estimator run by the benchmark: fixed(r, s), gic, grid or validation."""
    kind: str
    rank: int | None = None
    sparsity: int | None = None
    s_max: int = 20
    r_max: int = 10
    train_fraction: float = 0.8
    tol: float = 1e-5
    max_iter: int = 100

    KINDS = ("fixed", "gic", "grid", "validation")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown tuner kind {self.kind!r}")
        if self.kind == "fixed" and (self.rank is None or self.sparsity is None):
            raise ValueError("fixed tuner needs rank and sparsity")

    @property
    def name(self) -> str:
        if self.kind == "fixed":
            return f"fixed(r={self.rank},s={self.sparsity})"
        return {"gic": "MrBeSS", "grid": "MrBeSS-grid",
                "validation": "MrBeSS-V"}[self.kind]

    @classmethod
    def parse(cls, text: str, **kw) -> "Tuner":
        """Parse ``gic``, ``grid``, ``validation``/``cv`` or ``fixed:R,S``."""
        text = text.strip().lower()
        m = re.fullmatch(r"fixed[:(]\s*(\d+)\s*,\s*(\d+)\s*\)?", text)
        if m:
            return cls("fixed", rank=int(m.group(1)), sparsity=int(m.group(2)), **kw)
        if text == "cv":
            text = "validation"
        return cls(text, **kw)

    def run(self, dataset, seed: int = 0):
        """Return (C in normalized scale, estimated fit) for one dataset."""
        base = SolverConfig(rank=1, sparsity=1, tol=self.tol, max_iter=self.max_iter)
        s_max = min(self.s_max, dataset.p)
        r_max = min(self.r_max, dataset.n, dataset.q)
        if self.kind == "fixed":
            cfg = SolverConfig(rank=self.rank, sparsity=self.sparsity,
                               tol=self.tol, max_iter=self.max_iter)
            return solve_fixed(dataset, cfg), None
        if self.kind == "gic":
            rep = tune_gic(dataset, s_max, r_max, base)
        elif self.kind == "grid":
            rep = tune_grid_gic(dataset, s_max, r_max, base)
        else:
            rep = tune_validation(dataset, s_max, r_max, self.train_fraction,
                                  seed, base)
        return rep.fit, rep


# --- benchmark ----------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    p: int
    replications: int
    failed: int
    mean: dict
    sd: dict


@dataclass
class BenchmarkTable:
    spec: SimulationSpec
    rows: list = field(default_factory=list)
    records: dict = field(default_factory=dict)  # method -> list of (seed, MetricsRecord)
    failed_replications: int = 0

    CSV_COLUMNS = ("method", "p", "ErC_x1000_mean", "ErC_x1000_sd",
                   "ErXC_x10_mean", "ErXC_x10_sd", "FPR_pct_mean", "FPR_pct_sd",
                   "FNR_pct_mean", "FNR_pct_sd", "time_s_mean", "time_s_sd",
                   "rank_mean", "rank_sd")
    # (column stem, metric field, display multiplier)
    SCALED = (("ErC_x1000", "er_c", 1000.0), ("ErXC_x10", "er_xc", 10.0),
              ("FPR_pct", "fpr", 100.0), ("FNR_pct", "fnr", 100.0),
              ("time_s", "wall_time_s", 1.0), ("rank", "est_rank", 1.0))

    def row(self, method: str) -> BenchmarkRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def csv_rows(self) -> list[dict]:
        out = []
        for r in self.rows:
            d = {"method": r.method, "p": r.p}
            for stem, fld, mult in self.SCALED:
                d[f"{stem}_mean"] = r.mean[fld] * mult
                d[f"{stem}_sd"] = r.sd[fld] * mult
            out.append(d)
        return out


def mean_sd(values) -> tuple[float, float]:
    """Order-independent mean and sample standard deviation (0 for one value)."""
    values = [float(v) for v in values]
    k = len(values)
    if k == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / k
    if k == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (k - 1)
    return mean, math.sqrt(var)


def run_replication(spec: SimulationSpec, tuners, rep: int) -> dict:
    """Generate replication ``rep`` and evaluate every tuner; failures map to None."""
    seed = spec.base_seed + rep
    data = generate(spec, seed)
    ds = validate_and_normalize(data.X, data.Y)
    out = {}
    for tuner in tuners:
        t0 = time.perf_counter()
        try:
            fit, _ = tuner.run(ds, seed=seed)
        except Exception as exc:  # a failing tuner must not abort the sweep
            log.warning("replication %d, %s failed: %s", rep, tuner.name, exc)
            out[tuner.name] = None
            continue
        elapsed = time.perf_counter() - t0
        C = denormalize_coefficients(fit.C, ds.col_scales)
        out[tuner.name] = compute_metrics(C, data.C_star, data.X, elapsed)
    return out


def default_threads() -> int:
    env = os.environ.get("MRBESS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_benchmark(spec: SimulationSpec, tuners, out=None, threads: int = 1) -> BenchmarkTable:
    """Run ``spec.replications`` seeded replications and aggregate per tuner.

    Replication ``rep`` (1-based) uses seed ``base_seed + rep``, so the table
    does not depend on ``threads``. If ``out`` is given the table is written
    as CSV (``.csv``) or JSON (anything else).
    """
    tuners = [t if isinstance(t, Tuner) else Tuner.parse(t) for t in tuners]
    reps = range(1, spec.replications + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda k: run_replication(spec, tuners, k), reps))
    else:
        results = [run_replication(spec, tuners, k) for k in reps]

    table = BenchmarkTable(spec)
    for rep, res in zip(reps, results):
        if all(v is None for v in res.values()):
            table.failed_replications += 1
            continue
        for name, rec in res.items():
            table.records.setdefault(name, []).append((spec.base_seed + rep, rec))

    for tuner in tuners:
        recs = [rec for _, rec in table.records.get(tuner.name, []) if rec is not None]
        failed = spec.replications - len(recs)
        mean, sd = {}, {}
        for fld in MetricsRecord.FIELDS:
            mean[fld], sd[fld] = mean_sd([getattr(r, fld) for r in recs])
        table.rows.append(BenchmarkRow(tuner.name, spec.p, len(recs), failed, mean, sd))

    if out is not None:
        from .io import write_benchmark
        write_benchmark(table, out, "csv" if str(out).endswith(".csv") else "json")
    return table
