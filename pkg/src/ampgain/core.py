"""Domain types, seeded random streams and Laplace primitives.

Everything downstream draws randomness through :class:`RngStream`, so a run is
fully determined by ``(master_seed, stream_id)`` pairs and never by execution
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

_TWO53 = float(2**53)


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


@dataclass(frozen=True)
class Population:
    """A finite real-valued dataset with optional hard range bounds.

    ``values`` keeps the caller's order; sorted copies are made where needed.
    """

    values: np.ndarray
    bounds: Optional[Tuple[float, float]] = None
    label: str = ""

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).ravel()
        if arr.size < 1:
            raise ValidationError("population must contain at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("population values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.bounds is not None:
            lo, hi = (float(b) for b in self.bounds)
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise ValidationError(f"invalid bounds ({lo}, {hi})")
            if arr.min() < lo or arr.max() > hi:
                raise ValidationError("population values fall outside the bounds")
            object.__setattr__(self, "bounds", (lo, hi))

    @property
    def N(self) -> int:
        return int(self.values.size)

    @property
    def range(self) -> float:
        """Width of the support; requires bounds."""
        if self.bounds is None:
            raise ValidationError("population has no bounds, so its range is unknown")
        return self.bounds[1] - self.bounds[0]

    def sorted_values(self) -> np.ndarray:
        return np.sort(self.values)

    def subset(self, indices, label: Optional[str] = None) -> "Population":
        """Sub-population at 0-based ``indices``; bounds are inherited."""
        return Population(self.values[np.asarray(indices, dtype=np.intp)], self.bounds,
                          label if label is not None else self.label)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        eps, delta = float(self.epsilon), float(self.delta)
        if not (eps > 0 and math.isfinite(eps)):
            raise ValidationError(f"epsilon must be a positive finite number, got {self.epsilon}")
        if not 0.0 <= delta < 1.0:
            raise ValidationError(f"delta must lie in [0, 1), got {self.delta}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)

    @property
    def pure(self) -> bool:
        return self.delta == 0.0


@dataclass(frozen=True)
class LaplaceParams:
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise ValidationError(f"Laplace scale must be finite and >= 0, got {self.scale}")
        if not math.isfinite(self.location):
            raise ValidationError("Laplace location must be finite")


@dataclass
class RngStream:
    """Seeded generator identified by ``(master_seed, stream_id)``.

    Backed by PCG64 seeded through ``SeedSequence(master_seed, spawn_key)``, so
    streams with different ids are independent and any stream can be rebuilt
    from its identifiers alone. ``child(k)`` derives a named sub-stream without
    touching the parent's state.
    """

    master_seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValidationError(f"{name} must be a 64-bit unsigned integer, got {v}")
        key = (int(self.stream_id),) + tuple(int(p) for p in self.path)
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, sub_id: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id, self.path + (int(sub_id),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, size=None):
        """Uniforms strictly inside (0, 1): ``(k + 0.5) / 2**53`` for 53-bit ``k``."""
        k = self._gen.integers(0, 2**53, size=size, dtype=np.int64)
        return (k + 0.5) / _TWO53


def laplace_from_uniform(u, params: LaplaceParams):
    """Map ``u`` in (0, 1) to ``loc + scale * sign(u - 1/2) * ln(1 - 2|u - 1/2|)``.

    This is the reflected inverse CDF (``u`` and ``1 - u`` swap roles), which is
    still exactly Laplace distributed; the reflection is kept so that a given
    uniform stream yields the same noise in every implementation of the
    sampler. Use :func:`laplace_quantile` for the increasing inverse.
    """
    u = np.asarray(u, dtype=float)
    if params.scale == 0:
        out = np.full(u.shape, params.location)
    else:
        c = u - 0.5
        out = params.location + params.scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))
    return float(out) if out.ndim == 0 else out


def laplace_sample(params: LaplaceParams, rng: RngStream, size=None):
    """One Laplace draw per uniform consumed from ``rng``."""
    return laplace_from_uniform(rng.uniform(size), params)


def laplace_cdf(x, params: LaplaceParams):
    x = np.asarray(x, dtype=float)
    mu, b = params.location, params.scale
    if b == 0:
        out = np.where(x < mu, 0.0, 1.0)
    else:
        z = (x - mu) / b
        with np.errstate(over="ignore"):
            out = np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)),
                           1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))
    return float(out) if out.ndim == 0 else out


def laplace_quantile(p, params: LaplaceParams):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValidationError("quantile level must lie in (0, 1)")
    c = p - 0.5
    out = params.location - params.scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))
    return float(out) if out.ndim == 0 else out


def median_of(values: Sequence[float]) -> float:
    """Median with the midpoint rule for even sizes."""
    s = np.sort(np.asarray(values, dtype=float))
    n = s.size
    if n == 0:
        raise ValidationError("median of an empty dataset")
    if n % 2:
        return float(s[n // 2])
    return float(0.5 * (s[n // 2 - 1] + s[n // 2]))


def population_stats(pop: Population) -> Tuple[float, float, float]:
    """Return ``(mean, median, S2)`` with the ``N - 1`` variance denominator.

    ``S2`` is 0 for a single record.
    """
    v = pop.values
    mean = float(np.mean(v))
    s2 = float(np.var(v, ddof=1)) if v.size > 1 else 0.0
    return mean, median_of(v), s2
