"""Finite-dimensional model of a decomposed Hilbert space H = H0 (+) H1.

States are plain float arrays whose last axis has length ``n0 + n1`` and is
laid out as ``(x0-block, x1-block)``.  Leading axes are treated as batch
dimensions throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "SpaceDecomposition",
    "BlockOperator",
    "apply_matrix",
    "project",
    "assemble",
    "split",
    "semigroup_apply",
    "propagator",
    "build_damped_wave_chain",
]


@dataclass(frozen=True)
class SpaceDecomposition:
    """Truncation dimensions of the two orthogonal subspaces."""

    n0: int
    n1: int

    def __post_init__(self):
        for name in ("n0", "n1"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    def check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.n:
            raise ValueError(
                f"state has trailing dimension {x.shape[-1:] or '()'}, expected {self.n}"
            )
        return x

    def split(self, x):
        x = self.check(x)
        return x[..., : self.n0], x[..., self.n0 :]

    def join(self, x0, x1) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        if x0.shape[-1] != self.n0 or x1.shape[-1] != self.n1:
            raise ValueError("block lengths do not match the decomposition")
        return np.concatenate([x0, x1], axis=-1)


def apply_matrix(M, x) -> np.ndarray:
    """``M x`` over the last axis of a batched ``x`` (one 2-D BLAS product)."""
    x = np.asarray(x, dtype=float)
    return (x.reshape(-1, x.shape[-1]) @ M.T).reshape(x.shape[:-1] + (M.shape[0],))


def project(x, which: int, space: SpaceDecomposition) -> np.ndarray:
    """Orthogonal projection onto H0 (``which=0``) or H1 (``which=1``)."""
    x = space.check(x)
    if which not in (0, 1):
        raise ValueError(f"block index must be 0 or 1, got {which!r}")
    out = np.zeros_like(x)
    if which == 0:
        out[..., : space.n0] = x[..., : space.n0]
    else:
        out[..., space.n0 :] = x[..., space.n0 :]
    return out


def _as_matrix(name, value, shape):
    m = np.array(value, dtype=float)
    if m.ndim != 2 or m.shape != shape:
        raise ValueError(f"{name} has shape {m.shape}, expected {shape}")
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """The linear part ``A = D - R`` given blockwise.

    ``R0`` (n0 x n0) and ``R1`` (n1 x n1) are the resistive diagonal blocks,
    ``D0`` (n0 x n1) maps H1 into H0 and ``D1`` (n1 x n0) maps H0 into H1.
    """

    R0: np.ndarray
    R1: np.ndarray
    D0: np.ndarray
    D1: np.ndarray

    def __post_init__(self):
        r0 = np.asarray(self.R0, dtype=float)
        r1 = np.asarray(self.R1, dtype=float)
        if r0.ndim != 2 or r0.shape[0] != r0.shape[1]:
            raise ValueError(f"R0 must be square, got shape {r0.shape}")
        if r1.ndim != 2 or r1.shape[0] != r1.shape[1]:
            raise ValueError(f"R1 must be square, got shape {r1.shape}")
        n0, n1 = r0.shape[0], r1.shape[0]
        object.__setattr__(self, "R0", _as_matrix("R0", r0, (n0, n0)))
        object.__setattr__(self, "R1", _as_matrix("R1", r1, (n1, n1)))
        object.__setattr__(self, "D0", _as_matrix("D0", self.D0, (n0, n1)))
        object.__setattr__(self, "D1", _as_matrix("D1", self.D1, (n1, n0)))

    @property
    def space(self) -> SpaceDecomposition:
        return SpaceDecomposition(self.R0.shape[0], self.R1.shape[0])

    def assemble(self) -> np.ndarray:
        return assemble(self)

    def resistive_part(self) -> np.ndarray:
        """Block-diagonal ``R``."""
        n0, n = self.space.n0, self.space.n
        R = np.zeros((n, n))
        R[:n0, :n0] = self.R0
        R[n0:, n0:] = self.R1
        return R

    def coupling_part(self) -> np.ndarray:
        """Purely off-diagonal ``D``."""
        n0, n = self.space.n0, self.space.n
        D = np.zeros((n, n))
        D[:n0, n0:] = self.D0
        D[n0:, :n0] = self.D1
        return D

    def is_skew_coupled(self) -> bool:
        """Whether ``D1 == -D0^T`` holds exactly."""
        return bool(np.array_equal(self.D1, -self.D0.T))

    def to_dict(self) -> dict:
        return {
            "n0": self.space.n0,
            "n1": self.space.n1,
            "R0": self.R0.tolist(),
            "R1": self.R1.tolist(),
            "D0": self.D0.tolist(),
            "D1": self.D1.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BlockOperator":
        missing = [k for k in ("n0", "n1", "R0", "R1", "D0", "D1") if k not in doc]
        if missing:
            raise ValueError(f"block operator document lacks keys {missing}")
        space = SpaceDecomposition(doc["n0"], doc["n1"])
        n0, n1 = space.n0, space.n1
        return cls(
            R0=_as_matrix("R0", doc["R0"], (n0, n0)),
            R1=_as_matrix("R1", doc["R1"], (n1, n1)),
            D0=_as_matrix("D0", doc["D0"], (n0, n1)),
            D1=_as_matrix("D1", doc["D1"], (n1, n0)),
        )

    def __eq__(self, other):
        if not isinstance(other, BlockOperator):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("R0", "R1", "D0", "D1")
        )

    __hash__ = None


def assemble(blocks: BlockOperator) -> np.ndarray:
    """Dense ``A = [[-R0, D0], [D1, -R1]]``."""
    return np.block([[-blocks.R0, blocks.D0], [blocks.D1, -blocks.R1]])


def split(A, space: SpaceDecomposition) -> BlockOperator:
    """Inverse of :func:`assemble`."""
    A = np.asarray(A, dtype=float)
    if A.shape != (space.n, space.n):
        raise ValueError(f"matrix of shape {A.shape} does not fit {space}")
    n0 = space.n0
    return BlockOperator(
        R0=-A[:n0, :n0], R1=-A[n0:, n0:], D0=A[:n0, n0:], D1=A[n0:, :n0]
    )


def propagator(A, t: float) -> np.ndarray:
    """Dense ``exp(tA)`` via scaling and squaring."""
    if not t >= 0:
        raise ValueError(f"semigroup time must be non-negative, got {t!r}")
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"generator must be square, got shape {A.shape}")
    if t == 0:
        return np.eye(A.shape[0])
    return expm(t * A)


def semigroup_apply(A, t: float, x) -> np.ndarray:
    """``S(t) x = exp(tA) x``; ``x`` may carry leading batch axes."""
    S = propagator(A, t)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != S.shape[0]:
        raise ValueError(f"state length {x.shape[-1]} does not match generator {S.shape}")
    return apply_matrix(S, x)


def build_damped_wave_chain(m: int, r_q: float, r_p: float, k: float) -> BlockOperator:
    """Position/momentum chain with skew coupling and diagonal resistance.

    ``D0 = k K`` with ``K`` the lower bidiagonal difference matrix
    (1 on the diagonal, -1 below it) and ``D1 = -D0^T``.
    """
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ValueError(f"chain length must be a positive integer, got {m!r}")
    if r_q < 0 or r_p < 0:
        raise ValueError("damping coefficients must be non-negative")
    m = int(m)
    K = np.eye(m) - np.eye(m, k=-1)
    D0 = k * K
    return BlockOperator(
        R0=r_q * np.eye(m), R1=r_p * np.eye(m), D0=D0, D1=-D0.T
    )
