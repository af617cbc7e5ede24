"""Global, local and smooth sensitivity of the mean and the median.

Smooth sensitivity of the median is

    max_{k=0..N} exp(-k beta) * max_{t=0..k+1} (y[m+t] - y[m+t-k-1]),

with ``m = (N+1)/2`` (1-based) and ``beta = eps / (2 ln(2/delta))``. Order
statistics outside ``1..N`` resolve to the lower/upper bound when the
population is bounded; without bounds the corresponding ``(k, t)`` terms are
dropped.

Two evaluators are provided. The exhaustive one walks every ``(k, t)`` pair
literally. The default one uses that every term is a pair of positions
``a <= m <= b`` weighted by ``exp(-beta (b - a - 1))``; ``log(y_b - y_a)`` has
increasing differences, so the leftmost maximising ``b`` is nondecreasing in
``a`` and a divide-and-conquer row search finds the maximum in
``O(N log N)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numba as nb
import numpy as np

from ampgain.core import Population, PrivacyBudget, ValidationError


class Kind(str, enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"
    SMOOTH = "smooth"


class Statistic(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"


@dataclass(frozen=True)
class SmoothParams:
    epsilon: float
    delta: float
    beta: float


@dataclass(frozen=True)
class SensitivityReport:
    kind: Kind
    statistic: Statistic
    value: float
    params: Optional[SmoothParams] = None
    argmax_k: Optional[int] = None

    def __post_init__(self):
        if not self.value >= 0:
            raise ValidationError(f"sensitivity must be >= 0, got {self.value}")
        if self.kind is Kind.SMOOTH and (self.params is None or not self.params.beta > 0):
            raise ValidationError("smooth sensitivity requires params with beta > 0")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "statistic": self.statistic.value, "value": self.value}
        if self.params is not None:
            d.update(epsilon=self.params.epsilon, delta=self.params.delta, beta=self.params.beta)
        if self.argmax_k is not None:
            d["argmax_k"] = self.argmax_k
        return d


def _require_range(R) -> float:
    if R is None or not math.isfinite(R):
        raise ValidationError("global sensitivity infinite: the population has no bounded range")
    if not R > 0:
        raise ValidationError(f"range must be positive, got {R}")
    return float(R)


def global_sensitivity_mean(R, N: int) -> SensitivityReport:
    R = _require_range(R)
    if N < 1:
        raise ValidationError("N must be >= 1")
    return SensitivityReport(Kind.GLOBAL, Statistic.MEAN, R / N)


def global_sensitivity_median(R, N: Optional[int] = None) -> SensitivityReport:
    """``R`` regardless of ``N``: half the records at each bound is the worst case."""
    return SensitivityReport(Kind.GLOBAL, Statistic.MEDIAN, _require_range(R))


def global_sensitivity(pop: Population, statistic: Statistic) -> SensitivityReport:
    R = pop.range if pop.bounds is not None else None
    if Statistic(statistic) is Statistic.MEAN:
        return global_sensitivity_mean(R, pop.N)
    return global_sensitivity_median(R, pop.N)


def local_sensitivity_mean(pop: Population) -> SensitivityReport:
    if pop.bounds is None:
        raise ValidationError("local sensitivity of the mean needs bounds")
    lo, hi = pop.bounds
    v = pop.values
    return SensitivityReport(Kind.LOCAL, Statistic.MEAN, max(hi - v.min(), v.max() - lo) / pop.N)


def _require_odd(N: int, minimum: int = 1):
    if N % 2 == 0:
        raise ValidationError(f"median sensitivity requires an odd number of records, got N={N}")
    if N < minimum:
        raise ValidationError(f"median sensitivity requires N >= {minimum}, got N={N}")


def local_sensitivity_median(pop: Population) -> SensitivityReport:
    _require_odd(pop.N, 3)
    y = pop.sorted_values()
    m = pop.N // 2  # 0-based median position
    return SensitivityReport(Kind.LOCAL, Statistic.MEDIAN,
                             float(max(y[m + 1] - y[m], y[m] - y[m - 1])))


def local_sensitivity(pop: Population, statistic: Statistic) -> SensitivityReport:
    if Statistic(statistic) is Statistic.MEAN:
        return local_sensitivity_mean(pop)
    return local_sensitivity_median(pop)


def smooth_beta(epsilon: float, delta: float) -> float:
    if not delta > 0:
        raise ValidationError("smooth sensitivity needs delta > 0 (beta is undefined at delta = 0)")
    return epsilon / (2.0 * math.log(2.0 / delta))


@nb.njit(cache=True, nogil=True)
def _monotone_search(z, a_lo, a_hi, b_lo, b_hi, beta):
    # Rows a in [a_lo, a_hi], columns b in [b_lo, b_hi] of z (extended sorted
    # array); score log(z[b] - z[a]) - beta * (b - a - 1).
    best = -np.inf
    best_k = 0
    # LIFO depth stays below 2 * log2(rows) + 2
    stack = np.empty((256, 4), dtype=np.int64)
    stack[0, 0] = a_lo
    stack[0, 1] = a_hi
    stack[0, 2] = b_lo
    stack[0, 3] = b_hi
    top = 1
    while top > 0:
        top -= 1
        alo = stack[top, 0]
        ahi = stack[top, 1]
        blo = stack[top, 2]
        bhi = stack[top, 3]
        if alo > ahi:
            continue
        a = (alo + ahi) // 2
        row_best = -np.inf
        row_b = blo
        za = z[a]
        for b in range(blo, bhi + 1):
            span = z[b] - za
            if span > 0.0:
                s = math.log(span) - beta * (b - a - 1)
                if s > row_best:
                    row_best = s
                    row_b = b
        if row_best > best:
            best = row_best
            best_k = row_b - a - 1
        if row_best == -np.inf:
            # every row above a is flat on [blo, bhi] as well
            stack[top, 0] = alo
            stack[top, 1] = a - 1
            stack[top, 2] = blo
            stack[top, 3] = bhi
            top += 1
        else:
            stack[top, 0] = alo
            stack[top, 1] = a - 1
            stack[top, 2] = blo
            stack[top, 3] = row_b
            top += 1
            stack[top, 0] = a + 1
            stack[top, 1] = ahi
            stack[top, 2] = row_b
            stack[top, 3] = bhi
            top += 1
    return best, best_k


def _extended(sorted_values: np.ndarray, bounds) -> Tuple[np.ndarray, int, int, int, int]:
    n = sorted_values.size
    m = (n + 1) // 2
    z = np.empty(n + 2)
    z[1:n + 1] = sorted_values
    if bounds is None:
        z[0] = z[n + 1] = np.nan
        return z, 1, m, m, n
    z[0], z[n + 1] = bounds
    return z, 0, m, m, n + 1


def smooth_sensitivity_sorted(sorted_values: np.ndarray, beta: float, bounds=None,
                              prune: bool = True) -> Tuple[float, int]:
    """Smooth sensitivity of the median of already sorted data.

    Returns ``(value, argmax_k)``. ``prune=False`` evaluates every ``(k, t)``
    term; the default search returns the same maximum.
    """
    y = np.ascontiguousarray(sorted_values, dtype=float)
    n = y.size
    _require_odd(n)
    if not beta > 0:
        raise ValidationError("beta must be positive")
    if not prune:
        return _smooth_exhaustive(y, beta, bounds)
    z, a_lo, a_hi, b_lo, b_hi = _extended(y, bounds)
    best, k = _monotone_search(z, a_lo, a_hi, b_lo, b_hi, float(beta))
    return (0.0, 0) if best == -np.inf else (math.exp(best), int(k))


def _smooth_exhaustive(y: np.ndarray, beta: float, bounds) -> Tuple[float, int]:
    n = y.size
    m = (n + 1) // 2
    best, best_k = 0.0, 0
    for k in range(n + 1):
        t = np.arange(k + 2)
        hi = m + t
        lo = m + t - k - 1
        if bounds is None:
            keep = (lo >= 1) & (hi <= n)
            if not keep.any():
                continue
            hi, lo = hi[keep], lo[keep]
            spans = y[hi - 1] - y[lo - 1]
        else:
            yhi = np.where(hi > n, bounds[1], y[np.clip(hi, 1, n) - 1])
            ylo = np.where(lo < 1, bounds[0], y[np.clip(lo, 1, n) - 1])
            spans = yhi - ylo
        val = math.exp(-k * beta) * float(spans.max())
        if val > best:
            best, best_k = val, k
    return best, best_k


def smooth_sensitivity_median(pop: Population, budget: PrivacyBudget, prune: bool = True,
                              beta: Optional[float] = None) -> SensitivityReport:
    """Smooth sensitivity of the median for ``(eps, delta)``-DP release.

    ``beta`` overrides the value derived from the budget (used to probe limits).
    """
    _require_odd(pop.N)
    if beta is None:
        beta = smooth_beta(budget.epsilon, budget.delta)
    value, k = smooth_sensitivity_sorted(pop.sorted_values(), beta, pop.bounds, prune=prune)
    return SensitivityReport(Kind.SMOOTH, Statistic.MEDIAN, value,
                             SmoothParams(budget.epsilon, budget.delta, float(beta)), k)


def smooth_sensitivity(pop: Population, statistic: Statistic, budget: PrivacyBudget,
                       prune: bool = True) -> SensitivityReport:
    if Statistic(statistic) is not Statistic.MEDIAN:
        raise ValidationError("smooth sensitivity is only available for the median")
    return smooth_sensitivity_median(pop, budget, prune=prune)
