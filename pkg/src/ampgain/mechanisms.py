"""Laplace releases calibrated to global or smooth sensitivity.

Both mechanisms take either an :class:`RngStream` or an explicit uniform
``u``. Passing ``u`` lets an experiment reuse one draw across several budgets
(the released noise is then ``scale * L(u)`` for a fixed standard draw).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ampgain.core import (LaplaceParams, Population, PrivacyBudget, RngStream,
                          ValidationError, laplace_from_uniform, median_of)
from ampgain.sensitivity import Kind, SensitivityReport, smooth_sensitivity_median


@dataclass(frozen=True)
class SampleMeta:
    n: int
    N: int
    amplified: bool

    @property
    def rate(self) -> float:
        return self.n / self.N


@dataclass(frozen=True)
class PrivatizedEstimate:
    raw_value: float
    noisy_value: float
    noise_scale: float
    budget: PrivacyBudget
    sensitivity: SensitivityReport
    sample_meta: Optional[SampleMeta] = None
    clamped: bool = False

    @property
    def noise(self) -> float:
        return self.noisy_value - self.raw_value

    def to_dict(self) -> dict:
        d = {
            "raw_value": self.raw_value,
            "noisy_value": self.noisy_value,
            "noise_scale": self.noise_scale,
            "epsilon": self.budget.epsilon,
            "delta": self.budget.delta,
            "sensitivity": self.sensitivity.to_dict(),
            "clamped": self.clamped,
        }
        if self.sample_meta is not None:
            d.update(n=self.sample_meta.n, N=self.sample_meta.N,
                     amplified=self.sample_meta.amplified)
        return d


def _draw(rng: Optional[RngStream], u: Optional[float]) -> float:
    if u is None:
        if rng is None:
            raise ValidationError("need an RngStream or an injected uniform")
        return float(rng.uniform())
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValidationError(f"injected uniform must lie in (0, 1), got {u}")
    return u


def _release(raw, scale, budget, sens, rng, u, meta, clamp):
    uu = _draw(rng, u)
    noisy = laplace_from_uniform(uu, LaplaceParams(float(raw), float(scale)))
    clamped = False
    if clamp is not None:
        lo, hi = clamp
        clipped = min(max(noisy, lo), hi)
        clamped = clipped != noisy
        noisy = clipped
    return PrivatizedEstimate(float(raw), float(noisy), float(scale), budget, sens, meta, clamped)


def privatize_global(raw: float, sens: SensitivityReport, budget: PrivacyBudget,
                     rng: Optional[RngStream] = None, *, u: Optional[float] = None,
                     sample_meta: Optional[SampleMeta] = None,
                     clamp=None) -> PrivatizedEstimate:
    """Pure eps-DP release ``raw + Laplace(0, sens / eps)``.

    ``clamp=(lo, hi)`` post-processes the release into an interval; off by default.
    """
    if sens.kind is not Kind.GLOBAL:
        raise ValidationError(f"privatize_global needs a global sensitivity, got {sens.kind.value}")
    if not budget.pure:
        raise ValidationError("the global Laplace mechanism is pure eps-DP; delta must be 0")
    return _release(raw, sens.value / budget.epsilon, budget, sens, rng, u, sample_meta, clamp)


def privatize_smooth_median(pop: Population, budget: PrivacyBudget,
                            rng: Optional[RngStream] = None, *, u: Optional[float] = None,
                            sens: Optional[SensitivityReport] = None,
                            sample_meta: Optional[SampleMeta] = None,
                            clamp=None, prune: bool = True) -> PrivatizedEstimate:
    """(eps, delta)-DP median with noise scale ``2 * smooth_sensitivity / eps``.

    A precomputed ``sens`` (same budget) skips the sensitivity evaluation.
    """
    if pop.N % 2 == 0:
        raise ValidationError(f"smooth median release requires odd N, got {pop.N}")
    if sens is None:
        sens = smooth_sensitivity_median(pop, budget, prune=prune)
    elif sens.kind is not Kind.SMOOTH:
        raise ValidationError("privatize_smooth_median needs a smooth sensitivity report")
    raw = median_of(pop.values)
    return _release(raw, 2.0 * sens.value / budget.epsilon, budget, sens, rng, u,
                    sample_meta, clamp)


def noise_variance(scale) -> np.ndarray:
    """Variance ``2 b^2`` of Laplace noise with scale ``b``."""
    return 2.0 * np.square(scale)
