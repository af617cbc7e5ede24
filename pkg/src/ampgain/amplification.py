"""Privacy amplification by simple random sampling and the accuracy bounds built on it.

Sampling ``n`` of ``N`` records without replacement turns an ``(eps, delta)``
release on the sample into an ``(log(1 + rate (e^eps - 1)), rate * delta)``
release on the population. Everything here is written with ``log1p``/``expm1``
so the formulas hold down to ``eps ~ 1e-30``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np

from ampgain.core import PrivacyBudget, ValidationError


class Direction(str, enum.Enum):
    EFFECTIVE_FROM_SAMPLE = "to-effective"
    SAMPLE_FROM_TARGET = "to-sample"


@dataclass(frozen=True)
class AmplificationResult:
    target: PrivacyBudget
    sample_budget: PrivacyBudget
    rate: float
    direction: Direction

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.value,
            "rate": self.rate,
            "eps": self.target.epsilon,
            "delta": self.target.delta,
            "eps_n": self.sample_budget.epsilon,
            "delta_n": self.sample_budget.delta,
        }


def _check_rate(rate: float) -> float:
    rate = float(rate)
    if not 0.0 < rate <= 1.0:
        raise ValidationError(f"sampling rate must lie in (0, 1], got {rate}")
    return rate


def _amplified_eps(eps: float, rate: float) -> float:
    if rate == 1.0:
        return eps  # log1p(expm1(eps)) is not bit-exact
    if eps > 30.0:
        # e^eps - 1 overflows near 710; factor out e^eps instead
        return eps + math.log(1.0 / rate + math.exp(-eps) * (1.0 - 1.0 / rate))
    return math.log1p(math.expm1(eps) / rate)


def _effective_eps(eps: float, rate: float) -> float:
    if rate == 1.0:
        return eps
    if eps > 30.0:
        return eps + math.log(rate + (1.0 - rate) * math.exp(-eps))
    return math.log1p(rate * math.expm1(eps))


def effective_budget(sample_budget: PrivacyBudget, rate: float) -> PrivacyBudget:
    """Population-level guarantee of a release that spends ``sample_budget`` on an SRSWOR sample."""
    rate = _check_rate(rate)
    return PrivacyBudget(_effective_eps(sample_budget.epsilon, rate),
                         rate * sample_budget.delta)


def amplified_budget(target: PrivacyBudget, rate: float) -> PrivacyBudget:
    """Budget the sample release may spend while the population still gets ``target``."""
    rate = _check_rate(rate)
    delta_n = target.delta / rate
    if delta_n >= 1.0:
        raise ValidationError(
            f"amplified delta not a valid probability: delta/rate = {delta_n:g} >= 1")
    return PrivacyBudget(_amplified_eps(target.epsilon, rate), delta_n)


def amplify(budget: PrivacyBudget, rate: float, direction: Direction) -> AmplificationResult:
    direction = Direction(direction)
    if direction is Direction.SAMPLE_FROM_TARGET:
        return AmplificationResult(budget, amplified_budget(budget, rate), float(rate), direction)
    return AmplificationResult(effective_budget(budget, rate), budget, float(rate), direction)


def q_bound(target_eps: float, rate: float) -> float:
    """Largest share of ``V_N`` the sampling variance may take, ``1 - (eps / eps_n)^2``.

    Assumes the sensitivity does not grow as the data shrink; any growth only
    tightens the bound.
    """
    rate = _check_rate(rate)
    eps_n = _amplified_eps(target_eps, rate)
    return 1.0 - (target_eps / eps_n) ** 2


def q_bound_small_eps(rate: float) -> float:
    return 1.0 - _check_rate(rate) ** 2


def no_gain_threshold(global_sens_N: float, target_eps: float, rate: float) -> float:
    """Sampling variance at or above which a Laplace release cannot gain from sampling."""
    rate = _check_rate(rate)
    eps_n = _amplified_eps(target_eps, rate)
    return 2.0 * global_sens_N ** 2 * (target_eps ** -2 - eps_n ** -2)


def mean_variance_population(R: float, N: int, eps: float) -> float:
    return 2.0 * (R / (eps * N)) ** 2


def mean_variance_sample(R: float, N: int, n: int, S2: float,
                         target_eps: float) -> Tuple[float, float, float]:
    """``(total, sampling_part, noise_part)`` for the privatized SRSWOR sample mean."""
    if not 1 <= n <= N:
        raise ValidationError(f"need 1 <= n <= N, got n={n}, N={N}")
    if S2 < 0:
        raise ValidationError("S2 must be >= 0")
    sampling = (1.0 - n / N) * S2 / n
    eps_n = _amplified_eps(target_eps, n / N)
    noise = 2.0 * (R / (eps_n * n)) ** 2
    return sampling + noise, sampling, noise


def noise_ratio_mean(target_eps: float, rate: float) -> float:
    """Population over sample noise variance for the mean; never exceeds 1."""
    rate = _check_rate(rate)
    return (rate * _amplified_eps(target_eps, rate) / target_eps) ** 2


def bisect(f: Callable[[float], float], lo: float, hi: float, rtol: float = 1e-12,
           max_iter: int = 400) -> float:
    """Root of ``f`` on ``[lo, hi]`` by bisection; requires a sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValidationError(f"no sign change in bracket [{lo:g}, {hi:g}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if abs(hi - lo) <= rtol * max(abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def critical_eps_for_unit_ratio(rate: float, tol: float = 1e-12) -> Tuple[float, float]:
    """Target ``eps`` at which the noise ratio for the mean reaches ``1 - tol``.

    The ratio is below 1 for every ``eps > 0`` and tends to 1 as ``eps -> 0``
    (``1 - r ~ eps (1 - rate) / rate``), so "ratio equal to one" only has a
    solution up to a tolerance. Bisection runs on ``ln eps`` over
    ``[ln 1e-30, ln 1e3]``. Returns ``(eps, eps_n)`` with ``eps_n`` the
    amplified sample budget.
    """
    rate = float(rate)
    if not 0.0 < rate < 1.0:
        raise ValidationError(f"rate must lie in (0, 1), got {rate}")
    if not 0.0 < tol < 1.0:
        raise ValidationError("tol must lie in (0, 1)")

    def gap(log_eps: float) -> float:
        return (1.0 - noise_ratio_mean(math.exp(log_eps), rate)) - tol

    log_eps = bisect(gap, math.log(1e-30), math.log(1e3), rtol=1e-12)
    eps = math.exp(log_eps)
    return eps, _amplified_eps(eps, rate)


def rate_for_q(target_eps: float, q: float) -> float:
    """Sampling rate at which :func:`q_bound` equals ``q`` (``q`` falls as the rate grows)."""
    if not 0.0 < q < 1.0:
        raise ValidationError("q must lie in (0, 1)")
    return bisect(lambda r: q_bound(target_eps, r) - q, 1e-12, 1.0, rtol=1e-14)


def optimal_rate_mean(R: float, N: int, S2: float, target_eps: float,
                      rate_grid: Sequence[float]):
    """Grid search for the variance-minimising sampling rate of the privatized mean.

    Each rate is turned into ``n = max(1, round(rate N))``; rate 1 (the
    population release) is always part of the curve. Returns ``(best_rate,
    curve)`` with ``curve`` a list of ``(rate, n, total_variance)``.
    """
    if len(rate_grid) == 0:
        raise ValidationError("rate grid is empty")
    rates = sorted({_check_rate(r) for r in rate_grid} | {1.0})
    curve = []
    for r in rates:
        n = max(1, int(round(r * N)))
        if r == 1.0:
            total = mean_variance_population(R, N, target_eps)
        else:
            total = mean_variance_sample(R, N, n, S2, target_eps)[0]
        curve.append((n / N, n, total))
    best = min(curve, key=lambda row: row[2])
    return best[0], curve


def amplified_eps_curve(target_eps: float, rates: Sequence[float]) -> np.ndarray:
    """``eps_n`` over a rate grid (plot-ready)."""
    return np.array([_amplified_eps(target_eps, _check_rate(r)) for r in rates])
