"""Simple random sampling without replacement and exhaustive sample enumeration."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Tuple

import numba as nb
import numpy as np

from ampgain.core import Population, RngStream, ValidationError

ENUMERATION_LIMIT = 10**6


class GuardExceeded(ValidationError):
    """A combinatorial or size guard would be exceeded."""


@dataclass(frozen=True)
class SampleSelection:
    """Selected units as sorted 1-based indices."""

    indices: Tuple[int, ...]
    N: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValidationError("sample indices must be distinct")
        if any(not 1 <= i <= self.N for i in idx):
            raise ValidationError(f"sample indices must lie in [1, {self.N}]")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    @property
    def n(self) -> int:
        return len(self.indices)

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp) - 1


@nb.njit(cache=True)
def _partial_shuffle(N, u):
    perm = np.arange(N)
    for i in range(u.size):
        j = i + int(u[i] * (N - i))
        if j >= N:  # guard against u rounding to 1
            j = N - 1
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
    return perm[:u.size].copy()


def permutation_prefix(N: int, n: int, rng: RngStream) -> np.ndarray:
    """First ``n`` positions of a Fisher-Yates shuffle of ``0..N-1``.

    Exactly ``n`` uniforms are consumed, one per swap, so the prefix for a
    smaller ``n`` drawn from a same-state stream is a prefix of this one.
    """
    if not 0 <= n <= N:
        raise ValidationError(f"need 0 <= n <= N, got n={n}, N={N}")
    return _partial_shuffle(int(N), np.asarray(rng.uniform(n), dtype=float))


def srswor(pop: Population, n: int, rng: RngStream) -> Tuple[SampleSelection, Population]:
    """Uniform size-``n`` subset of ``pop`` and the sub-population it selects.

    The sub-population lists values in index order, so ``n = N`` returns the
    population unchanged.
    """
    N = pop.N
    if not 1 <= n <= N:
        raise ValidationError(f"sample size must satisfy 1 <= n <= N={N}, got {n}")
    picked = np.sort(permutation_prefix(N, n, rng))
    sel = SampleSelection(tuple(int(i) + 1 for i in picked), N)
    return sel, pop.subset(picked)


def enumerate_samples(N: int, n: int, limit: int = ENUMERATION_LIMIT) -> Iterator[SampleSelection]:
    """Every size-``n`` subset of ``1..N`` once, in lexicographic order."""
    if N < 1 or not 0 <= n <= N:
        raise ValidationError(f"need N >= 1 and 0 <= n <= N, got N={N}, n={n}")
    count = math.comb(N, n)
    if count > limit:
        raise GuardExceeded(f"C({N}, {n}) = {count} samples exceeds the limit of {limit}")
    for combo in itertools.combinations(range(1, N + 1), n):
        yield SampleSelection(combo, N)


def srswor_mean_variance(pop: Population, n: int) -> float:
    """Design variance of the SRSWOR sample mean, ``(1 - n/N) S^2 / n``."""
    N = pop.N
    if not 1 <= n <= N:
        raise ValidationError(f"need 1 <= n <= N, got n={n}, N={N}")
    s2 = float(np.var(pop.values, ddof=1)) if N > 1 else 0.0
    return (1.0 - n / N) * s2 / n
