"""Wasserstein-2 distances and the Gaussian stationary-law oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

__all__ = [
    "EmpiricalMeasure",
    "GaussianMeasure",
    "CouplingPlan",
    "w2_empirical_exact",
    "w2_empirical_bruteforce",
    "w2_gaussian",
    "lyapunov_stationary",
    "fit_gaussian",
    "sqrtm_psd",
    "w2_assignment",
    "covariance_standard_errors",
    "BRUTEFORCE_MAX_N",
]

BRUTEFORCE_MAX_N = 8
_PSD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Equal-weight point cloud; ``points`` has shape ``(N, d)``."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 1:
            raise ValueError(f"points must be an (N, d) array with N >= 1, got {p.shape}")
        object.__setattr__(self, "points", p)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class CouplingPlan:
    """Optimal pairing ``i -> perm[i]`` and its mean squared cost."""

    perm: np.ndarray
    cost: float


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (m.size, m.size):
            raise ValueError(f"covariance shape {c.shape} does not match mean of length {m.size}")
        scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
        if np.max(np.abs(c - c.T), initial=0.0) > _PSD_TOL * scale:
            raise ValueError("covariance is not symmetric")
        if np.linalg.eigvalsh(c)[0] < -_PSD_TOL * scale:
            raise ValueError("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)


def _pair(P, Q):
    P = P if isinstance(P, EmpiricalMeasure) else EmpiricalMeasure(P)
    Q = Q if isinstance(Q, EmpiricalMeasure) else EmpiricalMeasure(Q)
    if P.n != Q.n:
        raise ValueError(f"sample counts differ: {P.n} vs {Q.n}")
    if P.dim != Q.dim:
        raise ValueError(f"dimensions differ: {P.dim} vs {Q.dim}")
    return P, Q


def _plan_cost(P, Q, perm) -> float:
    return float(np.mean(np.sum((P.points - Q.points[perm]) ** 2, axis=1)))


def w2_empirical_exact(P, Q) -> tuple[float, CouplingPlan]:
    """Exact W2 between equal-size empirical measures by linear assignment.

    In one dimension the monotone (sorted) pairing is optimal and is used
    directly; otherwise the assignment problem on squared Euclidean costs is
    solved exactly.
    """
    P, Q = _pair(P, Q)
    if P.dim == 1:
        ip = np.argsort(P.points[:, 0], kind="stable")
        iq = np.argsort(Q.points[:, 0], kind="stable")
        perm = np.empty(P.n, dtype=np.intp)
        perm[ip] = iq
    else:
        cost = cdist(P.points, Q.points, "sqeuclidean")
        rows, perm = linear_sum_assignment(cost)
        perm = perm[np.argsort(rows)]
    c = _plan_cost(P, Q, perm)
    return math.sqrt(c), CouplingPlan(perm, c)


def w2_assignment(P, Q) -> tuple[float, CouplingPlan]:
    """Like :func:`w2_empirical_exact` but always through the assignment solver."""
    P, Q = _pair(P, Q)
    rows, perm = linear_sum_assignment(cdist(P.points, Q.points, "sqeuclidean"))
    perm = perm[np.argsort(rows)]
    c = _plan_cost(P, Q, perm)
    return math.sqrt(c), CouplingPlan(perm, c)


def w2_empirical_bruteforce(P, Q) -> float:
    """Minimum over all N! pairings; refuses ``N > 8``."""
    P, Q = _pair(P, Q)
    if P.n > BRUTEFORCE_MAX_N:
        raise ValueError(f"brute force limited to N <= {BRUTEFORCE_MAX_N}, got {P.n}")
    best = math.inf
    for perm in itertools.permutations(range(P.n)):
        best = min(best, _plan_cost(P, Q, np.array(perm)))
    return math.sqrt(best)


def sqrtm_psd(S) -> np.ndarray:
    """Symmetric square root with eigenvalues clamped at zero."""
    S = np.asarray(S, dtype=float)
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    w = np.where(w < _PSD_TOL * max(1.0, abs(w[-1]) if w.size else 1.0), 0.0, w)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def w2_gaussian(g1: GaussianMeasure, g2: GaussianMeasure) -> float:
    """Bures-Wasserstein closed form between two Gaussian measures."""
    if g1.mean.shape != g2.mean.shape:
        raise ValueError("Gaussian measures live in different dimensions")
    r2 = sqrtm_psd(g2.cov)
    cross = sqrtm_psd(r2 @ g1.cov @ r2)
    d2 = float(np.sum((g1.mean - g2.mean) ** 2)) + float(
        np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross)
    )
    return math.sqrt(max(d2, 0.0))


def lyapunov_stationary(A, B) -> np.ndarray:
    """Solve ``A S + S A^T + B B^T = 0`` for Hurwitz ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A must be square, got {A.shape}")
    spectral_abscissa = float(np.max(np.linalg.eigvals(A).real))
    if not spectral_abscissa < 0:
        raise ValueError(f"A is not Hurwitz (max Re eig = {spectral_abscissa:.3g})")
    S = solve_continuous_lyapunov(A, -(B @ B.T))
    return 0.5 * (S + S.T)


def fit_gaussian(P) -> GaussianMeasure:
    """Sample mean and unbiased, symmetrised sample covariance."""
    P = P if isinstance(P, EmpiricalMeasure) else EmpiricalMeasure(P)
    if P.n < 2:
        raise ValueError("fitting a Gaussian needs at least two points")
    mean = P.points.mean(axis=0)
    X = P.points - mean
    cov = X.T @ X / (P.n - 1)
    return GaussianMeasure(mean, 0.5 * (cov + cov.T))


def covariance_standard_errors(P) -> np.ndarray:
    """Entrywise standard errors of the sample covariance.

    Uses the empirical variance of the centred products ``(x_i - m_i)(x_j - m_j)``.
    """
    P = P if isinstance(P, EmpiricalMeasure) else EmpiricalMeasure(P)
    X = P.points - P.points.mean(axis=0)
    prod = X[:, :, None] * X[:, None, :]
    return prod.std(axis=0, ddof=1) / math.sqrt(P.n)
