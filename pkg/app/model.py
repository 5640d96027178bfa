"""Orthogonal-means Gaussian mixture.

Each observation is ``Y_i = b_i * mu_{k(i)} + Z_i`` where the K means are
orthogonal with common norm ``delta``, ``k(i)`` is uniform on the K groups,
``b_i`` is a Rademacher sign and ``Z_i`` is standard Gaussian noise.

Groups are 0-based in memory; the on-disk format keeps them 0-based too.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from app.errors import InvalidParamsError

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator]


def make_rng(seed: Seed, *keys: int) -> np.random.Generator:
    """Counter-based generator for ``seed`` (or a sub-stream keyed by ``keys``)."""
    if isinstance(seed, np.random.Generator):
        if keys:
            raise InvalidParamsError("sub-stream keys need an integer seed")
        return seed
    if seed is None or int(seed) < 0:
        raise InvalidParamsError(f"seed must be a non-negative integer, got {seed!r}")
    entropy = [int(seed), *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class ModelParams:
    n: int
    d: int
    K: int
    delta: float

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidParamsError(f"n must be >= 2, got {self.n}")
        if self.d < 1 or self.K < 1:
            raise InvalidParamsError(f"d and K must be >= 1, got d={self.d}, K={self.K}")
        if self.K > self.d:
            raise InvalidParamsError(
                f"K={self.K} orthogonal means do not fit in dimension d={self.d}"
            )
        if not np.isfinite(self.delta) or self.delta < 0:
            raise InvalidParamsError(f"delta must be finite and >= 0, got {self.delta}")

    @property
    def correction(self) -> float:
        return 1.0 + self.delta**2 / self.K

    def as_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "K": self.K, "delta": float(self.delta)}


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class Instance:
    Y: np.ndarray
    mu: np.ndarray
    kstar: np.ndarray
    b: np.ndarray
    params: ModelParams
    seed: int | None = None

    def __post_init__(self) -> None:
        _freeze(self.Y, self.mu, self.kstar, self.b)

    @property
    def X(self) -> np.ndarray:
        return self.b[:, None] * self.mu[self.kstar]

    @property
    def Z(self) -> np.ndarray:
        return self.Y - self.X

    def partition(self, signed: bool = False) -> np.ndarray:
        """Truth labels: group index, or ``2*k + (b > 0)`` when ``signed``."""
        if signed:
            return 2 * self.kstar + (self.b > 0)
        return self.kstar.copy()


@dataclass(frozen=True)
class InstanceBatch:
    """``size`` independent instances stacked along a leading trial axis."""

    Y: np.ndarray  # (size, n, d)
    mu: np.ndarray  # (size, K, d)
    kstar: np.ndarray  # (size, n)
    b: np.ndarray  # (size, n)
    params: ModelParams = field(repr=False)

    @property
    def x(self) -> np.ndarray:
        return (self.kstar[:, 0] == self.kstar[:, 1]).astype(np.int64)

    def __len__(self) -> int:
        return self.Y.shape[0]


def _orthonormal_frames(rng: np.random.Generator, size: tuple, d: int, K: int) -> np.ndarray:
    # QR with the sign of diag(R) folded back gives Haar-distributed frames.
    g = rng.standard_normal(size + (d, K))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return q * signs[..., None, :]


def sample_means(params: ModelParams, seed: Seed) -> np.ndarray:
    """K x d matrix of pairwise-orthogonal rows of norm ``delta``."""
    rng = make_rng(seed)
    q = _orthonormal_frames(rng, (), params.d, params.K)
    return params.delta * q.T


def _draw_rows(rng: np.random.Generator, size: tuple, params: ModelParams):
    kstar = rng.integers(0, params.K, size=size + (params.n,))
    b = 2 * rng.integers(0, 2, size=size + (params.n,)) - 1
    Z = rng.standard_normal(size + (params.n, params.d))
    return kstar, b, Z


def sample_instance(params: ModelParams, seed: Seed) -> Instance:
    rng = make_rng(seed)
    mu = params.delta * _orthonormal_frames(rng, (), params.d, params.K).T
    kstar, b, Z = _draw_rows(rng, (), params)
    Y = b[:, None] * mu[kstar] + Z
    logger.debug("sampled instance n=%d d=%d K=%d delta=%g", params.n, params.d, params.K, params.delta)
    return Instance(
        Y=Y,
        mu=mu,
        kstar=kstar,
        b=b,
        params=params,
        seed=seed if isinstance(seed, int) else None,
    )


def sample_instances(params: ModelParams, size: int, seed: Seed) -> InstanceBatch:
    """Vectorised batch of ``size`` instances, each with its own means."""
    rng = make_rng(seed)
    frames = _orthonormal_frames(rng, (size,), params.d, params.K)
    mu = params.delta * np.swapaxes(frames, -1, -2)
    kstar, b, Z = _draw_rows(rng, (size,), params)
    X = b[..., None] * np.take_along_axis(mu, kstar[..., None], axis=1)
    return InstanceBatch(Y=X + Z, mu=mu, kstar=kstar, b=b, params=params)


def sample_conditional(
    params: ModelParams,
    mu: np.ndarray,
    kstar12: tuple[int, int],
    b12: tuple[int, int],
    size: int,
    seed: Seed,
) -> InstanceBatch:
    """Batch with fixed means and fixed group/sign for rows 1 and 2.

    Only rows 3..n and all noise are redrawn, which is the conditioning used
    by the conditional-variance formulas.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (params.K, params.d):
        raise InvalidParamsError(f"mu must have shape {(params.K, params.d)}, got {mu.shape}")
    rng = make_rng(seed)
    kstar, b, Z = _draw_rows(rng, (size,), params)
    kstar[:, 0], kstar[:, 1] = kstar12
    b[:, 0], b[:, 1] = b12
    X = b[..., None] * mu[kstar]
    mus = np.broadcast_to(mu, (size,) + mu.shape)
    return InstanceBatch(Y=X + Z, mu=mus, kstar=kstar, b=b, params=params)


def functional_x(inst: Instance) -> int:
    """1 when observations 1 and 2 share a mean direction."""
    if inst.params.n < 2:
        raise InvalidParamsError("functional needs at least two rows")
    return int(inst.kstar[0] == inst.kstar[1])


__all__ = [
    "ModelParams",
    "Instance",
    "InstanceBatch",
    "make_rng",
    "sample_means",
    "sample_instance",
    "sample_instances",
    "sample_conditional",
    "functional_x",
]
