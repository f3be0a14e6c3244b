"""Reproducible sampling of Q-Wiener increments and compound-Poisson jumps.

Every path owns an :class:`RngStream`.  A stream is a bundle of Philox
(counter-based) generators keyed by ``(seed, path_index, substream tag)``,
so the draws of one path never depend on how many other paths exist or on
the order in which paths are processed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import JumpMeasureSpec, QWienerSpec

__all__ = [
    "SUBSTREAMS",
    "RngStream",
    "JumpBatch",
    "derive_stream",
    "auxiliary_generator",
    "sample_wiener_increment",
    "sample_jump_batch",
]

# Disjoint substream tags.  Wiener and jump draws never share a generator,
# which keeps W and N independent.
SUBSTREAMS = {"wiener": 0, "jump": 1, "bridge": 2, "jump_time": 3, "init": 4, "aux": 5}

_AUX_DOMAIN = 0x5048535F415558  # separates auxiliary generators from path streams


def _generator(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(entropy))))


@dataclass
class RngStream:
    """Per-path random source.  Single owner; not safe to share across threads."""

    seed: int
    path_index: int
    _gens: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.path_index < 0:
            raise ValueError("seed and path_index must be non-negative")

    def substream(self, tag: str) -> np.random.Generator:
        gen = self._gens.get(tag)
        if gen is None:
            gen = _generator(self.seed, self.path_index, SUBSTREAMS[tag])
            self._gens[tag] = gen
        return gen

    @property
    def wiener(self) -> np.random.Generator:
        return self.substream("wiener")

    @property
    def jump(self) -> np.random.Generator:
        return self.substream("jump")

    def standard_normal(self, size=None):
        """Draws from the ``aux`` substream (for ad-hoc use outside stepping)."""
        return self.substream("aux").standard_normal(size)


def derive_stream(seed: int, path_index: int) -> RngStream:
    return RngStream(int(seed), int(path_index))


def auxiliary_generator(seed: int, *key: int) -> np.random.Generator:
    """Generator for harness-level randomness that is not tied to a path."""
    return _generator(_AUX_DOMAIN, int(seed), *[int(k) for k in key])


@dataclass(frozen=True)
class JumpBatch:
    count: int
    marks: np.ndarray

    def __post_init__(self):
        if self.marks.shape[0] != self.count:
            raise ValueError("jump count does not match number of marks")


def sample_wiener_increment(spec: QWienerSpec, dt: float, rng: RngStream) -> np.ndarray:
    """``q_half xi sqrt(dt)`` with ``xi`` standard normal in R^m."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    xi = rng.wiener.standard_normal(spec.m)
    return spec.q_half @ xi * np.sqrt(dt)


def sample_jump_batch(measure: JumpMeasureSpec, dt: float, rng: RngStream) -> JumpBatch:
    """Poisson(lambda dt) many i.i.d. marks."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    gen = rng.jump
    if measure.intensity == 0:
        return JumpBatch(0, np.zeros((0, measure.mark_dimension)))
    k = int(gen.poisson(measure.intensity * dt))
    return JumpBatch(k, measure.sample_marks(gen, k))
