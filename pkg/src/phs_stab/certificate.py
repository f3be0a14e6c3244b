"""Contraction-rate certificate for the linear part and the coefficients.

Given blocks ``A = [[-R0, D0], [D1, -R1]]`` and squared Lipschitz constants,
the certificate collects

    lambda_i  lower bounds of <R_i x, x> / |x|^2
    beta      upper bound of <D x, x> / |x|^2
    alpha   = min(lambda0, lambda1) - beta
    a       = alpha - sqrt(L_F)
    epsilon = 2 a - L_sigma - L_gamma

and flags the system stable when ``epsilon > 0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .coefficients import CoefficientSet
from .space import BlockOperator, assemble

__all__ = [
    "BETA_MODES",
    "StabilityCertificate",
    "DissipativityReport",
    "lambda_bound",
    "beta_bound",
    "certificate_from_constants",
    "compute_certificate",
    "verify_dissipativity",
]

BETA_MODES = ("sharp", "remark_bounded", "remark_skew")


def _sym(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def lambda_bound(R_block) -> float:
    """Smallest eigenvalue of the symmetric part of ``R_block``."""
    R = np.asarray(R_block, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"resistance block must be square, got shape {R.shape}")
    return float(np.linalg.eigvalsh(_sym(R))[0])


def beta_bound(D0, D1, mode: str = "sharp") -> float:
    """Upper bound ``beta`` with ``<D x, x> <= beta |x|^2``.

    ``sharp``
        top eigenvalue of the symmetric part of the off-diagonal ``D``.
    ``remark_bounded``
        ``(|D0| + |D1|) / 2`` in operator norms (Young's inequality).
    ``remark_skew``
        ``0``; requires ``D1 == -D0^T`` exactly.
    """
    D0 = np.atleast_2d(np.asarray(D0, dtype=float))
    D1 = np.atleast_2d(np.asarray(D1, dtype=float))
    if D1.shape != D0.T.shape:
        raise ValueError(f"D0 {D0.shape} and D1 {D1.shape} are not transposed shapes")
    if mode == "sharp":
        n0, n1 = D0.shape
        D = np.zeros((n0 + n1, n0 + n1))
        D[:n0, n0:] = D0
        D[n0:, :n0] = D1
        return float(np.linalg.eigvalsh(_sym(D))[-1])
    if mode == "remark_bounded":
        return 0.5 * (float(np.linalg.norm(D0, 2)) + float(np.linalg.norm(D1, 2)))
    if mode == "remark_skew":
        if not np.array_equal(D1, -D0.T):
            raise ValueError("remark_skew requires D1 == -D0^T exactly")
        return 0.0
    raise ValueError(f"unknown beta mode {mode!r}; expected one of {BETA_MODES}")


@dataclass(frozen=True)
class StabilityCertificate:
    lambda0: float
    lambda1: float
    beta: float
    alpha: float
    L_F: float
    L_sigma: float
    L_gamma: float
    a: float
    epsilon: float
    omega: float
    stable: bool
    beta_mode: str = "sharp"

    def to_dict(self) -> dict:
        return asdict(self)


def certificate_from_constants(lambda0, lambda1, beta, L_F=0.0, L_sigma=0.0, L_gamma=0.0,
                               beta_mode="sharp") -> StabilityCertificate:
    for name, v in (("L_F", L_F), ("L_sigma", L_sigma), ("L_gamma", L_gamma)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative, got {v}")
    alpha = min(lambda0, lambda1) - beta
    a = alpha - math.sqrt(L_F)
    epsilon = 2 * a - L_sigma - L_gamma
    return StabilityCertificate(
        lambda0=float(lambda0), lambda1=float(lambda1), beta=float(beta),
        alpha=float(alpha), L_F=float(L_F), L_sigma=float(L_sigma),
        L_gamma=float(L_gamma), a=float(a), epsilon=float(epsilon),
        omega=float(-alpha), stable=bool(epsilon > 0), beta_mode=beta_mode,
    )


def compute_certificate(blocks: BlockOperator, coeffs: CoefficientSet,
                        mode: str = "sharp") -> StabilityCertificate:
    if coeffs.space != blocks.space:
        raise ValueError("coefficients and operator use different decompositions")
    return certificate_from_constants(
        lambda_bound(blocks.R0),
        lambda_bound(blocks.R1),
        beta_bound(blocks.D0, blocks.D1, mode),
        coeffs.drift.L_F,
        coeffs.diffusion.L_sigma,
        coeffs.jump.L_gamma,
        beta_mode=mode,
    )


@dataclass(frozen=True)
class DissipativityReport:
    max_ratio: float
    bound: float
    tolerance: float
    n_pairs: int
    passed: bool
    worst_pair: tuple


def verify_dissipativity(blocks: BlockOperator, coeffs: CoefficientSet,
                         cert: StabilityCertificate, sampler, n_pairs: int,
                         rng: np.random.Generator | None = None,
                         tol: float = 1e-9) -> DissipativityReport:
    """Check ``<A(x-y) + F(x) - F(y), x-y> <= -a |x-y|^2`` on sampled pairs."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    x, y = sampler(rng, n_pairs)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    keep = np.any(x != y, axis=-1)
    x, y = x[keep], y[keep]
    A = assemble(blocks)
    d = x - y
    lhs = np.sum((d @ A.T + coeffs.drift(x) - coeffs.drift(y)) * d, axis=-1)
    ratio = lhs / np.sum(d * d, axis=-1)
    if len(ratio) == 0:
        return DissipativityReport(-math.inf, -cert.a, tol, 0, True, ())
    i = int(np.argmax(ratio))
    worst = float(ratio[i])
    return DissipativityReport(
        max_ratio=worst, bound=-cert.a, tolerance=tol, n_pairs=len(ratio),
        passed=bool(worst <= -cert.a + tol), worst_pair=(x[i].tolist(), y[i].tolist()),
    )
