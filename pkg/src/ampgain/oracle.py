"""Brute-force checks for the closed forms.

The release CDF of a global-sensitivity Laplace mechanism run on an SRSWOR
sample is a finite, equally weighted mixture of Laplace CDFs, one per
possible sample. Enumerating that mixture gives the exact probability of
every half-line event, against which the amplified bound can be tested
without any Monte-Carlo error. Sensitivities are checked by explicit
single-record replacement over a grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ampgain.core import LaplaceParams, Population, ValidationError, laplace_cdf, median_of
from ampgain.sampling import GuardExceeded, enumerate_samples
from ampgain.sensitivity import Statistic

BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True)
class ReleaseConfig:
    """A Laplace release on the sample, calibrated to its global sensitivity.

    ``mechanism`` is ``"global-laplace"``; anything else is rejected by the
    exact CDF because a data-dependent scale breaks the fixed mixture.
    """

    epsilon: float
    statistic: Statistic = Statistic.MEAN
    mechanism: str = "global-laplace"

    def scale(self, R: float, n: int) -> float:
        sens = R / n if Statistic(self.statistic) is Statistic.MEAN else R
        return sens / self.epsilon


def _stat(values: np.ndarray, statistic: Statistic) -> float:
    if Statistic(statistic) is Statistic.MEAN:
        return float(np.mean(values))
    return median_of(values)


def sample_statistics(pop: Population, n: int, statistic: Statistic) -> np.ndarray:
    """Statistic of every size-``n`` SRSWOR sample, in enumeration order."""
    return np.array([_stat(pop.values[s.zero_based()], statistic)
                     for s in enumerate_samples(pop.N, n)])


def exact_release_cdf(pop: Population, n: int, config: ReleaseConfig, omega):
    """``Pr[release <= omega]`` averaged exactly over all ``C(N, n)`` samples."""
    if config.mechanism != "global-laplace":
        raise ValidationError("mixture not closed-form: the noise scale depends on the sample")
    if pop.bounds is None:
        raise ValidationError("the global Laplace release needs a bounded population")
    locs = sample_statistics(pop, n, config.statistic)
    b = config.scale(pop.range, n)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    # shifting omega instead of the location keeps one vectorised CDF call
    F = np.mean(laplace_cdf(w[:, None] - locs[None, :], LaplaceParams(0.0, b)), axis=1)
    return float(F[0]) if np.ndim(omega) == 0 else F


@dataclass
class AmplificationCheck:
    rate: float
    factor: float
    slack: float
    max_violation: float
    n_checks: int
    worst_omega: Optional[float] = None
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def to_dict(self) -> dict:
        return {"rate": self.rate, "factor": self.factor, "slack": self.slack,
                "max_violation": self.max_violation, "n_checks": self.n_checks,
                "worst_omega": self.worst_omega, "passed": self.passed}


def _differing(popA: Population, popB: Population) -> int:
    if popA.N != popB.N:
        raise ValidationError("neighbors must have the same size")
    if popA.bounds != popB.bounds:
        raise ValidationError("neighbors must share bounds")
    d = int(np.count_nonzero(popA.values != popB.values))
    if d > 1:
        raise ValidationError(f"populations are not neighbors: {d} records differ")
    return d


def verify_amplification(popA: Population, popB: Population, n: int, sample_eps: float,
                         sample_delta: float = 0.0, omega_grid: Sequence[float] = (),
                         statistic: Statistic = Statistic.MEAN,
                         tol: float = 1e-12) -> AmplificationCheck:
    """Check the amplified DP inequality between two neighbors, both ways.

    The sample release is Laplace with scale ``R/n / sample_eps`` (``R`` for
    the median), which is ``(sample_eps, sample_delta)``-DP for any
    ``sample_delta >= 0``. At every ``omega`` of the grid plus the infinite
    end points, both ``Pr[. <= omega]`` and ``Pr[. > omega]`` are tested:
    ``P_A <= (1 + rate (e^eps - 1)) P_B + rate * delta`` and with A, B swapped.
    """
    _differing(popA, popB)
    N = popA.N
    if not 1 <= n <= N:
        raise ValidationError(f"need 1 <= n <= N, got n={n}, N={N}")
    rate = n / N
    factor = 1.0 + rate * math.expm1(sample_eps)
    slack = rate * sample_delta
    cfg = ReleaseConfig(sample_eps, statistic)
    grid = np.concatenate([[-np.inf], np.asarray(omega_grid, dtype=float), [np.inf]])
    FA = exact_release_cdf(popA, n, cfg, grid)
    FB = exact_release_cdf(popB, n, cfg, grid)
    worst, at = -np.inf, None
    for P, Q in ((FA, FB), (FB, FA), (1 - FA, 1 - FB), (1 - FB, 1 - FA)):
        v = P - (factor * Q + slack)
        i = int(np.argmax(v))
        if v[i] > worst:
            worst, at = float(v[i]), float(grid[i])
    return AmplificationCheck(rate, factor, slack, worst, 4 * grid.size, at, tol)


def _replace_grid(pop: Population, grid_size: int) -> np.ndarray:
    if pop.bounds is None:
        raise ValidationError("brute-force sensitivity needs bounds")
    if grid_size < 2:
        raise ValidationError("grid_size must be >= 2")
    return np.linspace(pop.bounds[0], pop.bounds[1], grid_size)


def brute_force_local(pop: Population, statistic: Statistic, grid_size: int = 1001) -> float:
    """Max change of the statistic when one record is replaced by a grid value."""
    N = pop.N
    if N * grid_size > BRUTE_FORCE_LIMIT:
        raise GuardExceeded(f"N * grid_size = {N * grid_size} exceeds {BRUTE_FORCE_LIMIT}")
    grid = _replace_grid(pop, grid_size)
    base = _stat(pop.values, statistic)
    best = 0.0
    for i in range(N):
        data = np.tile(pop.values, (grid_size, 1))
        data[:, i] = grid
        if Statistic(statistic) is Statistic.MEAN:
            vals = data.mean(axis=1)
        else:
            vals = np.median(data, axis=1)
        best = max(best, float(np.max(np.abs(vals - base))))
    return best


def brute_force_global(N: int, bounds, statistic: Statistic, grid_size: int = 11) -> float:
    """Max change over every grid dataset of size ``N`` and each single-record swap."""
    cost = grid_size ** N * N
    if cost > BRUTE_FORCE_LIMIT:
        raise GuardExceeded(f"grid_size^N * N = {cost} exceeds {BRUTE_FORCE_LIMIT}")
    grid = np.linspace(bounds[0], bounds[1], grid_size)
    data = np.array(list(itertools.product(grid, repeat=N)))
    if Statistic(statistic) is Statistic.MEAN:
        vals = data.mean(axis=1)
    else:
        vals = np.median(data, axis=1)
    cube = vals.reshape((grid_size,) * N)
    # swapping record i spans the full axis i of the grid tensor
    return float(max(np.max(np.ptp(cube, axis=i)) for i in range(N)))


def brute_force_sensitivity(pop: Population, statistic: Statistic, grid_size: int = 1001,
                            kind: str = "local") -> float:
    if kind == "local":
        return brute_force_local(pop, statistic, grid_size)
    if kind == "global":
        if pop.bounds is None:
            raise ValidationError("brute-force sensitivity needs bounds")
        return brute_force_global(pop.N, pop.bounds, statistic, grid_size)
    raise ValidationError(f"kind must be 'local' or 'global', got {kind!r}")
