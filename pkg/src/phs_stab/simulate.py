"""Exponential-Euler time stepping of the mild solution.

One step of size ``h`` maps

    x  ->  S(h) [ x + F(x) h + sigma(x) dW + sum_j gamma(x, eta_j) - comp(x) h ]

where ``S(h) = exp(hA)`` and ``comp(x) = int gamma(x, e) mu(de)`` is the
compensator drift, so the jump term is a compensated (mean-zero) sum.  All
jumps of a step act on the state at the start of the step.

Ensembles are split into fixed chunks of paths and every path draws its noise
from its own stream, so results are bitwise independent of the number of
worker threads.  With ``substeps = K > 1`` each noise step ``dt`` is refined
into ``K`` steps of size ``dt / K`` using a Brownian bridge for the Wiener
increments and uniformly placed jump times, so refined and unrefined runs
share one noise realisation.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientSet, Estimate
from .noise import RngStream, auxiliary_generator, derive_stream
from .space import apply_matrix, propagator

__all__ = [
    "ABORT_NORM",
    "SimConfig",
    "SimulationAborted",
    "Trajectory",
    "Ensemble",
    "CoupledEnsemble",
    "step",
    "integrate",
    "integrate_ensemble",
    "integrate_coupled",
    "mean_square_gap",
    "energy",
    "mean_energy",
    "mean_state",
]

ABORT_NORM = 1e12
CHUNK_PATHS = 1024
BLOCK_STEPS = 256
COMPENSATOR_MARKS = 256


class SimulationAborted(RuntimeError):
    """A path left the finite region (non-finite or norm above ``ABORT_NORM``)."""


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_end: float
    n_paths: int = 1
    seed: int = 0
    record_every: int = 1
    substeps: int = 1
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end!r}")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        for name in ("n_paths", "record_every", "substeps"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_end / self.dt - 1e-9))

    def record_steps(self) -> np.ndarray:
        ks = np.arange(0, self.n_steps + 1, self.record_every)
        if ks[-1] != self.n_steps:
            ks = np.append(ks, self.n_steps)
        return ks

    def times(self) -> np.ndarray:
        return self.record_steps() * self.dt


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Recorded states of independent paths, shape ``(n_paths, n_times, n)``."""

    times: np.ndarray
    states: np.ndarray
    aborted: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return ~self.aborted

    def index(self, t: float) -> int:
        return _time_index(self.times, t)

    def at(self, t: float) -> np.ndarray:
        """States of the non-aborted paths at recorded time ``t``."""
        return self.states[self.valid, self.index(t)]


@dataclass(frozen=True, eq=False)
class CoupledEnsemble:
    """Synchronously coupled pairs: both components of a pair see the same noise."""

    times: np.ndarray
    x_states: np.ndarray
    y_states: np.ndarray
    aborted: np.ndarray

    @property
    def x(self) -> Ensemble:
        return Ensemble(self.times, self.x_states, self.aborted)

    @property
    def y(self) -> Ensemble:
        return Ensemble(self.times, self.y_states, self.aborted)

    @property
    def n_paths(self) -> int:
        return self.x_states.shape[0]


def _time_index(times, t) -> int:
    times = np.asarray(times)
    hits = np.flatnonzero(np.abs(times - t) <= 1e-9 * max(1.0, abs(t)))
    if hits.size == 0:
        raise ValueError(f"time {t!r} is not a recorded time")
    return int(hits[0])


# --------------------------------------------------------------------------
# Core update
# --------------------------------------------------------------------------


class _Compensator:
    """Evaluates ``int gamma(x, e) mu(de)``, closed form when registered."""

    def __init__(self, coeffs: CoefficientSet, seed: int):
        self.jump = coeffs.jump
        self.measure = coeffs.jump_measure
        self.active = self.measure.intensity > 0 and not self.jump.is_zero
        self.marks = None
        if self.active and self.jump.mean_fn is None:
            gen = auxiliary_generator(seed, 1)
            self.marks = self.measure.sample_marks(gen, COMPENSATOR_MARKS)

    def __call__(self, X):
        if self.marks is None:
            return self.jump.mean_fn(X, self.measure)
        marks = self.marks.reshape((len(self.marks),) + (1,) * (X.ndim - 1) + (-1,))
        return self.measure.intensity * self.jump(X[None], marks).mean(axis=0)


def _advance(X, S, coeffs, h, dW, ev_path, ev_marks, comp):
    """One exponential-Euler step for a batch ``X`` of shape ``(B, c, n)``.

    ``dW`` has shape ``(B, 1, u)`` (shared by the ``c`` coupled copies),
    ``ev_path`` indexes the paths that jump and ``ev_marks`` their marks.
    """
    inc = X.copy()
    if not coeffs.drift.is_zero:
        inc += coeffs.drift(X) * h
    if not coeffs.diffusion.is_zero:
        inc += coeffs.diffusion.apply(X, dW)
    if comp.active:
        inc -= comp(X) * h
        if ev_path.size:
            vals = coeffs.jump(X[ev_path], ev_marks[:, None, :])
            np.add.at(inc, ev_path, vals)
    return apply_matrix(S, inc)


def step(x, A, coeffs: CoefficientSet, dt: float, wiener_increment, jump_batch,
         *, S=None, compensator=None) -> np.ndarray:
    """Advance a single state by one step.

    ``wiener_increment`` lives in the noise space (already multiplied by
    ``q_half``); ``S`` may pass a precomputed ``exp(dt A)``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    x = coeffs.space.check(x)
    S = propagator(A, dt) if S is None else S
    comp = _Compensator(coeffs, 0) if compensator is None else compensator
    dW = np.asarray(wiener_increment, dtype=float).reshape(1, 1, -1)
    marks = np.asarray(jump_batch.marks, dtype=float).reshape(
        jump_batch.count, coeffs.jump_measure.mark_dimension)
    ev = np.zeros(jump_batch.count, dtype=np.intp)
    with np.errstate(all="ignore"):
        out = _advance(x.reshape(1, 1, -1), S, coeffs, dt, dW, ev, marks, comp)[0, 0]
        norm = float(np.sqrt(np.sum(out * out)))
    if not (math.isfinite(norm) and norm <= ABORT_NORM):
        raise SimulationAborted(f"state norm {norm:.3g} after step; path aborted")
    return out


# --------------------------------------------------------------------------
# Noise blocks
# --------------------------------------------------------------------------


def _draw_block(streams, nb, K, dt, coeffs):
    """Noise for ``nb`` base steps of every stream in the chunk.

    Returns fine Wiener increments ``(B, nb*K, u)`` and jump events sorted by
    fine-step index: ``(keys, paths, marks)``.
    """
    q = coeffs.wiener.q_half
    m = q.shape[1]
    B = len(streams)
    base = np.empty((B, nb, m))
    z = np.empty((B, nb, K, m)) if K > 1 else None
    measure = coeffs.jump_measure
    jumping = measure.intensity > 0 and not coeffs.jump.is_zero
    keys, paths, marks = [], [], []
    for b, st in enumerate(streams):
        st.wiener.standard_normal(out=base[b])
        if K > 1:
            st.substream("bridge").standard_normal(out=z[b])
        if jumping:
            gen = st.jump
            counts = gen.poisson(measure.intensity * dt, size=nb)
            total = int(counts.sum())
            if total:
                mk = measure.sample_marks(gen, total)
                key = np.repeat(np.arange(nb), counts) * K
                if K > 1:
                    key = key + st.substream("jump_time").integers(0, K, size=total)
                keys.append(key)
                paths.append(np.full(total, b, dtype=np.intp))
                marks.append(mk)
    base *= math.sqrt(dt)
    if K == 1:
        xi = base[:, :, None, :]
    else:
        # Brownian bridge refinement: the K fine increments sum to the base increment
        z -= z.mean(axis=2, keepdims=True)
        z *= math.sqrt(dt / K)
        z += base[:, :, None, :] / K
        xi = z
    dW = xi.reshape(B, nb * K, m) @ q.T
    if keys:
        keys = np.concatenate(keys)
        order = np.argsort(keys, kind="stable")
        events = (keys[order], np.concatenate(paths)[order], np.concatenate(marks)[order])
    else:
        d = measure.mark_dimension
        events = (np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp), np.zeros((0, d)))
    return dW, events


def _run_chunk(X0, S, coeffs, config, streams, comp):
    K = config.substeps
    h = config.dt / K
    n_steps = config.n_steps
    rec_steps = set(config.record_steps().tolist())
    X = np.array(X0, dtype=float)
    B = X.shape[0]
    aborted = np.zeros(B, dtype=bool)
    records = [X.copy()]
    with np.errstate(all="ignore"):
        for start in range(0, n_steps, BLOCK_STEPS):
            nb = min(BLOCK_STEPS, n_steps - start)
            dW, (keys, paths, marks) = _draw_block(streams, nb, K, config.dt, coeffs)
            bounds = np.searchsorted(keys, np.arange(nb * K + 1))
            for s in range(nb):
                for k in range(K):
                    f = s * K + k
                    lo, hi = bounds[f], bounds[f + 1]
                    X = _advance(X, S, coeffs, h, dW[:, f][:, None, :],
                                 paths[lo:hi], marks[lo:hi], comp)
                norm = np.sqrt(np.sum(X * X, axis=(1, 2)))
                bad = ~(norm <= ABORT_NORM) & ~aborted
                if bad.any():
                    aborted |= bad
                    X[bad] = np.nan
                if start + s + 1 in rec_steps:
                    records.append(X.copy())
    return np.stack(records, axis=1), aborted


def _simulate(X0, A, coeffs: CoefficientSet, config: SimConfig, streams):
    """Run ``len(streams)`` paths from ``X0`` of shape ``(P, c, n)``."""
    S = propagator(A, config.dt / config.substeps)
    comp = _Compensator(coeffs, config.seed)
    P = X0.shape[0]
    chunks = [(i, min(i + CHUNK_PATHS, P)) for i in range(0, P, CHUNK_PATHS)]

    def work(bounds):
        lo, hi = bounds
        return _run_chunk(X0[lo:hi], S, coeffs, config, streams[lo:hi], comp)

    workers = config.workers or os.cpu_count() or 1
    if workers == 1 or len(chunks) == 1:
        results = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, chunks))
    states = np.concatenate([r[0] for r in results], axis=0)
    aborted = np.concatenate([r[1] for r in results], axis=0)
    return config.times(), states, aborted


def _initial(x0, P, n):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (n,):
        return np.broadcast_to(x0, (P, n)).copy()
    if x0.shape == (P, n):
        return x0.copy()
    raise ValueError(f"initial state must have shape ({n},) or ({P}, {n}), got {x0.shape}")


def integrate(x0, A, coeffs: CoefficientSet, config: SimConfig,
              stream: RngStream | None = None) -> Trajectory:
    """Single path; raises :class:`SimulationAborted` if the path blows up."""
    n = coeffs.space.n
    x0 = coeffs.space.check(x0)
    stream = derive_stream(config.seed, 0) if stream is None else stream
    times, states, aborted = _simulate(_initial(x0, 1, n)[:, None, :], A, coeffs, config, [stream])
    if aborted[0]:
        bad = int(np.argmax(~np.isfinite(states[0, :, 0, 0])))
        raise SimulationAborted(f"path aborted before recorded time {times[bad]:g}")
    return Trajectory(times, states[0, :, 0])


def integrate_ensemble(x0, A, coeffs: CoefficientSet, config: SimConfig,
                       first_path: int = 0) -> Ensemble:
    """``config.n_paths`` independent paths; path ``i`` uses stream ``first_path + i``.

    ``x0`` is a single state or one initial state per path.
    """
    P, n = config.n_paths, coeffs.space.n
    X0 = _initial(x0, P, n)[:, None, :]
    streams = [derive_stream(config.seed, first_path + i) for i in range(P)]
    times, states, aborted = _simulate(X0, A, coeffs, config, streams)
    return Ensemble(times, states[:, :, 0], aborted)


def integrate_coupled(x0, y0, A, coeffs: CoefficientSet, config: SimConfig,
                      first_path: int = 0) -> CoupledEnsemble:
    P, n = config.n_paths, coeffs.space.n
    X0 = np.stack([_initial(x0, P, n), _initial(y0, P, n)], axis=1)
    streams = [derive_stream(config.seed, first_path + i) for i in range(P)]
    times, states, aborted = _simulate(X0, A, coeffs, config, streams)
    return CoupledEnsemble(times, states[:, :, 0], states[:, :, 1], aborted)


# --------------------------------------------------------------------------
# Observables
# --------------------------------------------------------------------------


def _mean_se(values) -> Estimate:
    values = np.asarray(values, dtype=float)
    k = values.shape[0]
    if k == 0:
        nan = np.full(values.shape[1:], np.nan)
        return Estimate(nan if nan.shape else float("nan"), nan if nan.shape else float("nan"))
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros_like(mean)
    if np.ndim(mean) == 0:
        return Estimate(float(mean), float(se))
    return Estimate(mean, se)


def energy(x) -> np.ndarray | float:
    """``H(x) = |x|^2 / 2`` along the last axis."""
    x = np.asarray(x, dtype=float)
    e = 0.5 * np.sum(x * x, axis=-1)
    return float(e) if np.ndim(e) == 0 else e


def mean_square_gap(ensemble: CoupledEnsemble, t: float) -> Estimate:
    i = _time_index(ensemble.times, t)
    ok = ~ensemble.aborted
    d = ensemble.x_states[ok, i] - ensemble.y_states[ok, i]
    return _mean_se(np.sum(d * d, axis=-1))


def mean_energy(ensemble: Ensemble, t: float) -> Estimate:
    return _mean_se(energy(ensemble.at(t)))


def mean_state(ensemble: Ensemble, t: float) -> Estimate:
    return _mean_se(ensemble.at(t))
