"""Nonlinear coefficients of the SPDE: drift, diffusion and jump maps.

All maps act on batched states (leading axes are broadcast).  Lipschitz
constants follow the squared convention everywhere::

    |F(x) - F(y)|^2                          <= L_F     |x - y|^2
    |(s(x) - s(y)) q_half|_HS^2              <= L_sigma |x - y|^2
    int |g(x, e) - g(y, e)|^2 mu(de)         <= L_gamma |x - y|^2

Built-in families compute their constants analytically; user maps declare
them and :func:`estimate_lipschitz` can be used to validate the declaration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .space import SpaceDecomposition, apply_matrix

__all__ = [
    "PortViolation",
    "MarkDistribution",
    "JumpMeasureSpec",
    "QWienerSpec",
    "DriftMap",
    "DiffusionMap",
    "JumpMap",
    "CoefficientSet",
    "Estimate",
    "LipschitzEstimate",
    "MomentReport",
    "zero_drift",
    "constant_drift",
    "linear_drift",
    "tanh_drift",
    "zero_diffusion",
    "constant_diffusion",
    "linear_diffusion",
    "zero_jump",
    "constant_jump",
    "additive_jump",
    "linear_jump",
    "tanh_jump",
    "no_jumps",
    "jump_compensator_mean",
    "estimate_lipschitz",
    "moment_check",
    "random_pair_sampler",
]

_PORT_ATOL = 0.0


class PortViolation(ValueError):
    """A port-flagged map produced a nonzero H0 component."""


class Estimate(NamedTuple):
    value: np.ndarray | float
    se: np.ndarray | float


def _lin(x, M):
    return apply_matrix(M, x)


def _opnorm(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


# --------------------------------------------------------------------------
# Jump measure and Wiener covariance
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MarkDistribution:
    """Normalised mark law ``mu / lambda_J`` on R^dim.

    ``kind`` is one of ``none``, ``uniform_pm`` (each coordinate +-c with
    probability 1/2), ``gaussian`` (independent N(mean, std^2) coordinates)
    or ``constant`` (a point mass).
    """

    kind: str
    dim: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("none", "uniform_pm", "gaussian", "constant"):
            raise ValueError(f"unknown mark distribution {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("mark dimension must be a positive integer")
        p = dict(self.params)
        if self.kind == "uniform_pm":
            p["c"] = self._vec(p.get("c", 1.0))
        elif self.kind == "gaussian":
            p["mean"] = self._vec(p.get("mean", 0.0))
            p["std"] = self._vec(p.get("std", 1.0))
            if np.any(p["std"] < 0):
                raise ValueError("gaussian mark std must be non-negative")
        elif self.kind == "constant":
            p["value"] = self._vec(p.get("value", 0.0))
        object.__setattr__(self, "params", p)

    def _vec(self, v) -> np.ndarray:
        v = np.broadcast_to(np.asarray(v, dtype=float), (self.dim,)).copy()
        v.setflags(write=False)
        return v

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        if self.kind == "uniform_pm":
            signs = rng.integers(0, 2, size=(k, self.dim)) * 2 - 1
            return signs * self.params["c"]
        if self.kind == "gaussian":
            z = rng.standard_normal((k, self.dim))
            return self.params["mean"] + self.params["std"] * z
        if self.kind == "constant":
            return np.broadcast_to(self.params["value"], (k, self.dim)).copy()
        return np.zeros((k, self.dim))

    def mean(self) -> np.ndarray:
        if self.kind == "gaussian":
            return np.array(self.params["mean"])
        if self.kind == "constant":
            return np.array(self.params["value"])
        return np.zeros(self.dim)

    def second_moment(self) -> np.ndarray:
        """Coordinatewise ``E[eta_i^2]``."""
        if self.kind == "uniform_pm":
            return self.params["c"] ** 2
        if self.kind == "gaussian":
            return self.params["mean"] ** 2 + self.params["std"] ** 2
        if self.kind == "constant":
            return self.params["value"] ** 2
        return np.zeros(self.dim)


@dataclass(frozen=True, eq=False)
class JumpMeasureSpec:
    """Finite-activity Levy measure ``mu = intensity * marks``."""

    intensity: float
    marks: MarkDistribution = field(default_factory=lambda: MarkDistribution("none"))

    def __post_init__(self):
        if not (np.isfinite(self.intensity) and self.intensity >= 0):
            raise ValueError(f"jump intensity must be finite and >= 0, got {self.intensity!r}")
        object.__setattr__(self, "intensity", float(self.intensity))

    @property
    def mark_dimension(self) -> int:
        return self.marks.dim

    def sample_marks(self, rng, k: int) -> np.ndarray:
        return self.marks.sample(rng, k)


def no_jumps() -> JumpMeasureSpec:
    return JumpMeasureSpec(0.0)


@dataclass(frozen=True, eq=False)
class QWienerSpec:
    """Trace-class Wiener covariance given by a factor, ``Q = q_half q_half^T``.

    ``q_half`` is ``u x m``: ``m`` independent standard Brownian motions are
    mapped into the ``u``-dimensional noise space on which the diffusion
    coefficient acts.
    """

    q_half: np.ndarray

    def __post_init__(self):
        q = np.array(self.q_half, dtype=float)
        if q.ndim != 2:
            raise ValueError(f"q_half must be a matrix, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("q_half must be finite")
        q.setflags(write=False)
        object.__setattr__(self, "q_half", q)

    @classmethod
    def identity(cls, n: int) -> "QWienerSpec":
        return cls(np.eye(n))

    @property
    def u(self) -> int:
        return self.q_half.shape[0]

    @property
    def m(self) -> int:
        return self.q_half.shape[1]

    @property
    def Q(self) -> np.ndarray:
        return self.q_half @ self.q_half.T


# --------------------------------------------------------------------------
# Maps
# --------------------------------------------------------------------------


def _check_port(space: SpaceDecomposition, out: np.ndarray, what: str, axis=-1):
    head = out[..., : space.n0] if axis == -1 else np.take(out, np.arange(space.n0), axis=axis)
    if np.any(np.abs(head) > _PORT_ATOL):
        raise PortViolation(f"port-flagged {what} produced a nonzero H0 component")


@dataclass(frozen=True, eq=False)
class DriftMap:
    """``F: H -> H`` with declared squared Lipschitz constant ``L_F``."""

    space: SpaceDecomposition
    fn: Callable[[np.ndarray], np.ndarray]
    L_F: float
    port_flag: bool = False
    family: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return self.family == "zero"

    def __call__(self, x) -> np.ndarray:
        x = self.space.check(x)
        out = np.asarray(self.fn(x), dtype=float)
        if self.port_flag:
            _check_port(self.space, out, "drift")
        return out


@dataclass(frozen=True, eq=False)
class DiffusionMap:
    """``sigma: H -> L(U, H)``, returning ``n x u`` matrices.

    ``apply_fn(x, dw)`` computes ``sigma(x) dw`` for batched ``dw`` without
    materialising the matrices; it defaults to an ``einsum`` over ``fn``.
    """

    space: SpaceDecomposition
    u: int
    fn: Callable[[np.ndarray], np.ndarray]
    L_sigma: float
    port_flag: bool = False
    family: str = "custom"
    params: dict = field(default_factory=dict)
    apply_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    @property
    def is_zero(self) -> bool:
        return self.family == "zero"

    def __call__(self, x) -> np.ndarray:
        x = self.space.check(x)
        out = np.asarray(self.fn(x), dtype=float)
        if out.shape[-2:] != (self.space.n, self.u):
            raise ValueError(
                f"diffusion returned shape {out.shape[-2:]}, expected {(self.space.n, self.u)}"
            )
        if self.port_flag:
            _check_port(self.space, out, "diffusion", axis=-2)
        return out

    def apply(self, x, dw) -> np.ndarray:
        if self.apply_fn is not None:
            out = self.apply_fn(x, dw)
            if self.port_flag:
                _check_port(self.space, out, "diffusion")
            return out
        return np.einsum("...ij,...j->...i", self(x), dw)


@dataclass(frozen=True, eq=False)
class JumpMap:
    """``gamma: H x E -> H`` with declared constant ``L_gamma``.

    Built-in families register closed forms: ``mean_fn(x, measure)`` for the
    compensator ``int gamma(x, e) mu(de)`` and ``sqdiff_fn(x, y, measure)``
    for ``int |gamma(x, e) - gamma(y, e)|^2 mu(de)``.
    """

    space: SpaceDecomposition
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    L_gamma: float
    port_flag: bool = False
    family: str = "custom"
    params: dict = field(default_factory=dict)
    mean_fn: Optional[Callable] = None
    sqdiff_fn: Optional[Callable] = None

    @property
    def is_zero(self) -> bool:
        return self.family == "zero"

    def __call__(self, x, eta) -> np.ndarray:
        x = self.space.check(x)
        out = np.asarray(self.fn(x, np.asarray(eta, dtype=float)), dtype=float)
        if self.port_flag:
            _check_port(self.space, out, "jump")
        return out


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Drift, diffusion, jump map, jump measure and Wiener covariance."""

    drift: DriftMap
    diffusion: DiffusionMap
    jump: JumpMap
    jump_measure: JumpMeasureSpec = field(default_factory=no_jumps)
    wiener: Optional[QWienerSpec] = None

    def __post_init__(self):
        spaces = {self.drift.space, self.diffusion.space, self.jump.space}
        if len(spaces) != 1:
            raise ValueError("drift, diffusion and jump maps live on different spaces")
        if self.wiener is None:
            object.__setattr__(self, "wiener", QWienerSpec.identity(self.diffusion.u))
        if self.wiener.u != self.diffusion.u:
            raise ValueError(
                f"q_half has {self.wiener.u} rows but the diffusion acts on u={self.diffusion.u}"
            )

    @property
    def space(self) -> SpaceDecomposition:
        return self.drift.space

    @classmethod
    def zero(cls, space: SpaceDecomposition) -> "CoefficientSet":
        return cls(zero_drift(space), zero_diffusion(space), zero_jump(space))

    def with_(self, **changes) -> "CoefficientSet":
        kw = dict(
            drift=self.drift,
            diffusion=self.diffusion,
            jump=self.jump,
            jump_measure=self.jump_measure,
            wiener=self.wiener,
        )
        kw.update(changes)
        return CoefficientSet(**kw)


# --------------------------------------------------------------------------
# Built-in families
# --------------------------------------------------------------------------


def _vec(space, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (space.n,):
        raise ValueError(f"{name} must have length {space.n}, got shape {v.shape}")
    return v


def _mat(v, shape, name):
    m = np.asarray(v, dtype=float)
    if m.shape != shape:
        raise ValueError(f"{name} has shape {m.shape}, expected {shape}")
    return m


def _port_rows(space, M, name, port):
    if port and np.any(np.asarray(M)[: space.n0] != 0):
        raise PortViolation(f"{name} has nonzero H0 rows but port=True")


def zero_drift(space: SpaceDecomposition) -> DriftMap:
    return DriftMap(space, lambda x: np.zeros_like(x), 0.0, True, "zero")


def constant_drift(space, c, port: bool = False) -> DriftMap:
    c = _vec(space, c, "c")
    _port_rows(space, c, "c", port)
    return DriftMap(space, lambda x: np.broadcast_to(c, x.shape).copy(), 0.0, port,
                    "constant", {"c": c})


def linear_drift(space, B, c=None, port: bool = False) -> DriftMap:
    """``F(x) = B x + c``; ``L_F = |B|_op^2``."""
    B = _mat(B, (space.n, space.n), "B")
    c = np.zeros(space.n) if c is None else _vec(space, c, "c")
    _port_rows(space, B, "B", port)
    _port_rows(space, c, "c", port)
    return DriftMap(space, lambda x: _lin(x, B) + c, _opnorm(B) ** 2, port,
                    "linear", {"B": B, "c": c})


def tanh_drift(space, M, W, b=None, port: bool = False) -> DriftMap:
    """Saturating drift ``F(x) = M tanh(W x + b)``; ``L_F = (|M| |W|)^2``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != space.n:
        raise ValueError(f"M must have {space.n} rows, got shape {M.shape}")
    h = M.shape[1]
    W = _mat(W, (h, space.n), "W")
    b = np.zeros(h) if b is None else _mat(b, (h,), "b")
    _port_rows(space, M, "M", port)
    return DriftMap(space, lambda x: _lin(np.tanh(_lin(x, W) + b), M),
                    (_opnorm(M) * _opnorm(W)) ** 2, port, "tanh",
                    {"M": M, "W": W, "b": b})


def _hs_sq(C, q_half):
    return float(np.sum((np.asarray(C) @ q_half) ** 2))


def zero_diffusion(space: SpaceDecomposition, u: Optional[int] = None) -> DiffusionMap:
    u = space.n if u is None else int(u)
    return DiffusionMap(
        space, u, lambda x: np.zeros(x.shape[:-1] + (space.n, u)), 0.0, True, "zero",
        apply_fn=lambda x, dw: np.zeros(np.broadcast_shapes(x.shape[:-1], dw.shape[:-1]) + (space.n,)),
    )


def constant_diffusion(space, C, port: bool = False) -> DiffusionMap:
    """Additive noise ``sigma(x) = C``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[0] != space.n:
        raise ValueError(f"C must have {space.n} rows, got shape {C.shape}")
    _port_rows(space, C, "C", port)
    u = C.shape[1]

    def apply(x, dw):
        shape = np.broadcast_shapes(x.shape[:-1], dw.shape[:-1]) + (space.n,)
        return np.broadcast_to(_lin(dw, C), shape)

    return DiffusionMap(space, u, lambda x: np.broadcast_to(C, x.shape[:-1] + C.shape).copy(),
                        0.0, port, "constant", {"C": C}, apply_fn=apply)


def linear_diffusion(space, G, C=None, q_half=None, port: bool = False) -> DiffusionMap:
    """Multiplicative noise ``sigma(x) = C + sum_k x_k G[k]``.

    ``G`` has shape ``(n, n, u)`` (one ``n x u`` matrix per state coordinate).
    The constant is the squared operator norm of ``x -> vec(sigma_lin(x) q_half)``,
    so it depends on ``q_half`` (identity when omitted).
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 3 or G.shape[:2] != (space.n, space.n):
        raise ValueError(f"G must have shape (n, n, u) with n={space.n}, got {G.shape}")
    u = G.shape[2]
    C = np.zeros((space.n, u)) if C is None else _mat(C, (space.n, u), "C")
    q = np.eye(u) if q_half is None else np.asarray(q_half, dtype=float)
    if q.shape[0] != u:
        raise ValueError("q_half rows must match the diffusion noise dimension")
    for k in range(space.n):
        _port_rows(space, G[k], f"G[{k}]", port)
    _port_rows(space, C, "C", port)
    # T[(i, j), k] = (G[k] q)[i, j]
    T = np.einsum("kiv,vj->ijk", G, q).reshape(-1, space.n)
    L = _opnorm(T) ** 2
    # sigma(x)[i, j] = C[i, j] + sum_k x_k G[k, i, j]
    Gt = np.transpose(G, (1, 2, 0))

    def fn(x):
        return C + np.einsum("ijk,...k->...ij", Gt, x)

    # Gm[k * u + j, i] = G[k, i, j], so sigma_lin(x) dw = vec(x outer dw) @ Gm
    Gm = np.transpose(G, (0, 2, 1)).reshape(space.n * u, space.n)
    has_c = bool(np.any(C))

    diag = None
    if u == space.n:
        g = np.einsum("kkk->k", G)
        if np.count_nonzero(G) == np.count_nonzero(g):
            diag = g

    def apply(x, dw):
        if diag is not None:
            out = diag * x * dw
            return out + _lin(dw, C) if has_c else out
        lead = np.broadcast_shapes(x.shape[:-1], dw.shape[:-1])
        x = np.broadcast_to(x, lead + x.shape[-1:])
        dw = np.broadcast_to(dw, lead + dw.shape[-1:])
        outer = (x[..., :, None] * dw[..., None, :]).reshape(x.shape[:-1] + (-1,))
        out = _lin(outer, Gm.T)
        return out + _lin(dw, C) if has_c else out

    return DiffusionMap(space, u, fn, L, port, "linear", {"G": G, "C": C}, apply_fn=apply)


def zero_jump(space: SpaceDecomposition) -> JumpMap:
    return JumpMap(
        space,
        lambda x, eta: np.zeros(np.broadcast_shapes(x.shape[:-1], eta.shape[:-1]) + (space.n,)),
        0.0, True, "zero",
        mean_fn=lambda x, mu: np.zeros_like(x),
        sqdiff_fn=lambda x, y, mu: np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1])),
    )


def constant_jump(space, c, port: bool = False) -> JumpMap:
    """``gamma(x, eta) = c``."""
    c = _vec(space, c, "c")
    _port_rows(space, c, "c", port)
    return JumpMap(
        space,
        lambda x, eta: np.broadcast_to(
            c, np.broadcast_shapes(x.shape[:-1], eta.shape[:-1]) + (space.n,)).copy(),
        0.0, port, "constant", {"c": c},
        mean_fn=lambda x, mu: np.broadcast_to(mu.intensity * c, x.shape).copy(),
        sqdiff_fn=lambda x, y, mu: np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1])),
    )


def additive_jump(space, B, port: bool = False) -> JumpMap:
    """State-independent ``gamma(x, eta) = B eta`` with ``B`` of shape ``n x d``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != space.n:
        raise ValueError(f"B must have {space.n} rows, got shape {B.shape}")
    _port_rows(space, B, "B", port)

    def fn(x, eta):
        shape = np.broadcast_shapes(x.shape[:-1], eta.shape[:-1]) + (space.n,)
        return np.broadcast_to(_lin(eta, B), shape).copy()

    return JumpMap(
        space, fn, 0.0, port, "additive", {"B": B},
        mean_fn=lambda x, mu: np.broadcast_to(mu.intensity * (B @ mu.marks.mean()), x.shape).copy(),
        sqdiff_fn=lambda x, y, mu: np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1])),
    )


def linear_jump(space, G, measure: JumpMeasureSpec, B=None, port: bool = False) -> JumpMap:
    """``gamma(x, eta) = eta_0 G x + B eta``; ``L_gamma = lambda_J E[eta_0^2] |G|_op^2``."""
    G = _mat(G, (space.n, space.n), "G")
    d = 1 if B is None else np.atleast_2d(B).shape[1]
    B = np.zeros((space.n, d)) if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != space.n:
        raise ValueError(f"B must have {space.n} rows, got shape {B.shape}")
    _port_rows(space, G, "G", port)
    _port_rows(space, B, "B", port)

    def fn(x, eta):
        return eta[..., :1] * _lin(x, G) + _lin(eta[..., : B.shape[1]], B)

    def mean_fn(x, mu):
        m = mu.marks.mean()
        return mu.intensity * (m[0] * _lin(x, G) + B @ m[: B.shape[1]])

    def sqdiff_fn(x, y, mu):
        s = mu.marks.second_moment()[0]
        return mu.intensity * s * np.sum(_lin(x - y, G) ** 2, axis=-1)

    L = measure.intensity * float(measure.marks.second_moment()[0]) * _opnorm(G) ** 2
    return JumpMap(space, fn, L, port, "linear", {"G": G, "B": B},
                   mean_fn=mean_fn, sqdiff_fn=sqdiff_fn)


def tanh_jump(space, M, W, measure: JumpMeasureSpec, b=None, port: bool = False) -> JumpMap:
    """``gamma(x, eta) = eta_0 M tanh(W x + b)``; ``L_gamma = lambda_J E[eta_0^2] (|M| |W|)^2``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != space.n:
        raise ValueError(f"M must have {space.n} rows, got shape {M.shape}")
    h = M.shape[1]
    W = _mat(W, (h, space.n), "W")
    b = np.zeros(h) if b is None else _mat(b, (h,), "b")
    _port_rows(space, M, "M", port)

    def fn(x, eta):
        return eta[..., :1] * _lin(np.tanh(_lin(x, W) + b), M)

    def mean_fn(x, mu):
        return mu.intensity * mu.marks.mean()[0] * _lin(np.tanh(_lin(x, W) + b), M)

    def sqdiff_fn(x, y, mu):
        s = mu.marks.second_moment()[0]
        d = _lin(np.tanh(_lin(x, W) + b) - np.tanh(_lin(y, W) + b), M)
        return mu.intensity * s * np.sum(d ** 2, axis=-1)

    L = measure.intensity * float(measure.marks.second_moment()[0]) * (_opnorm(M) * _opnorm(W)) ** 2
    return JumpMap(space, fn, L, port, "tanh", {"M": M, "W": W, "b": b},
                   mean_fn=mean_fn, sqdiff_fn=sqdiff_fn)


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def jump_compensator_mean(jump: JumpMap, measure: JumpMeasureSpec, x, n_mc: int = 4096,
                          rng: np.random.Generator | None = None) -> Estimate:
    """``int gamma(x, e) mu(de)`` with a standard error.

    Closed forms of built-in families are exact (standard error 0); other maps
    are integrated by Monte Carlo over ``n_mc`` marks drawn from ``rng``.
    """
    x = jump.space.check(x)
    if measure.intensity == 0:
        return Estimate(np.zeros_like(x), np.zeros_like(x))
    if jump.mean_fn is not None:
        return Estimate(np.asarray(jump.mean_fn(x, measure), dtype=float), np.zeros_like(x))
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    marks = measure.sample_marks(rng, n_mc)
    # (n_mc, ..., n)
    vals = jump(x[None, ...], marks.reshape((n_mc,) + (1,) * (x.ndim - 1) + (-1,)))
    lam = measure.intensity
    mean = lam * vals.mean(axis=0)
    se = lam * vals.std(axis=0, ddof=1) / np.sqrt(n_mc) if n_mc > 1 else np.full_like(mean, np.inf)
    return Estimate(mean, se)


class LipschitzEstimate(NamedTuple):
    estimate: float
    declared: float
    violation: bool
    n_used: int


def random_pair_sampler(space: SpaceDecomposition, scale: float = 1.0):
    """Pairs ``(x, y)`` with Gaussian coordinates of random magnitude."""

    def sample(rng: np.random.Generator, k: int):
        s = scale * np.exp(rng.uniform(-3, 2, size=(k, 1)))
        x = s * rng.standard_normal((k, space.n))
        y = x + s * rng.standard_normal((k, space.n)) * np.exp(rng.uniform(-4, 1, size=(k, 1)))
        return x, y

    return sample


def _sq_ratio(map_, x, y, measure, q_half, n_marks, rng):
    d2 = np.sum((x - y) ** 2, axis=-1)
    if isinstance(map_, DriftMap):
        num = np.sum((map_(x) - map_(y)) ** 2, axis=-1)
    elif isinstance(map_, DiffusionMap):
        q = np.eye(map_.u) if q_half is None else np.asarray(q_half, dtype=float)
        num = np.sum(((map_(x) - map_(y)) @ q) ** 2, axis=(-2, -1))
    elif isinstance(map_, JumpMap):
        if measure is None:
            raise ValueError("a jump measure is required to estimate L_gamma")
        if measure.intensity == 0:
            num = np.zeros_like(d2)
        elif map_.sqdiff_fn is not None:
            num = np.asarray(map_.sqdiff_fn(x, y, measure), dtype=float)
        else:
            marks = measure.sample_marks(rng, n_marks)[:, None, :]
            diff = map_(x[None], marks) - map_(y[None], marks)
            num = measure.intensity * np.mean(np.sum(diff ** 2, axis=-1), axis=0)
    else:
        raise TypeError(f"cannot estimate a Lipschitz constant for {type(map_).__name__}")
    return num, d2


def _declared(map_) -> float:
    for name in ("L_F", "L_sigma", "L_gamma"):
        if hasattr(map_, name):
            return float(getattr(map_, name))
    raise TypeError(type(map_).__name__)


def estimate_lipschitz(map_, sampler, n: int, *, rng=None, measure=None, q_half=None,
                       n_marks: int = 256, rtol: float = 1e-9) -> LipschitzEstimate:
    """Largest sampled squared difference ratio, compared with the declaration.

    ``sampler(rng, k)`` returns two ``(k, n)`` arrays of paired states.
    Coincident pairs are skipped.  ``violation`` is set when the estimate
    exceeds the declared constant by more than ``rtol`` (relative).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    x, y = sampler(rng, n)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    keep = np.any(x != y, axis=-1)
    x, y = x[keep], y[keep]
    declared = _declared(map_)
    if len(x) == 0:
        return LipschitzEstimate(0.0, declared, False, 0)
    num, d2 = _sq_ratio(map_, x, y, measure, q_half, n_marks, rng)
    est = float(np.max(num / d2))
    violation = est > declared + rtol * max(abs(declared), 1.0)
    return LipschitzEstimate(est, declared, bool(violation), len(x))


@dataclass
class MomentReport:
    """Monte-Carlo estimates of the two moment integrals of the jump map."""

    second_moment: float
    fourth_moment: float
    second_se: float
    fourth_se: float
    finite: bool
    diagnostic: str = ""


def moment_check(jump: JumpMap, measure: JumpMeasureSpec, x, n_mc: int = 4096,
                 rng: np.random.Generator | None = None) -> MomentReport:
    """Estimate ``int |gamma(0, e)|^2 mu(de)`` and ``int |gamma(x, e)|^4 mu(de)``."""
    if n_mc < 2:
        raise ValueError("n_mc must be >= 2")
    x = jump.space.check(x)
    lam = measure.intensity
    if lam == 0:
        return MomentReport(0.0, 0.0, 0.0, 0.0, True)
    rng = np.random.default_rng(0) if rng is None else rng
    marks = measure.sample_marks(rng, n_mc)
    with np.errstate(all="ignore"):
        s2 = np.sum(jump(np.zeros(jump.space.n)[None], marks) ** 2, axis=-1)
        s4 = np.sum(jump(x[None], marks) ** 2, axis=-1) ** 2
    finite = bool(np.all(np.isfinite(s2)) and np.all(np.isfinite(s4)))
    diag = "" if finite else "non-finite jump sample encountered"
    with np.errstate(all="ignore"):
        return MomentReport(
            float(lam * s2.mean()), float(lam * s4.mean()),
            float(lam * s2.std(ddof=1) / np.sqrt(n_mc)),
            float(lam * s4.std(ddof=1) / np.sqrt(n_mc)),
            finite, diag,
        )
