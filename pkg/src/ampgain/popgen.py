"""Synthetic populations and single-column CSV I/O.

Beta and normal variates come from numpy's ``Generator`` on the caller's
stream; a population is therefore fixed by ``(master_seed, stream_id)``.
"""

from __future__ import annotations

import io
import math
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ampgain.core import Population, RngStream, ValidationError

# stream id reserved for population draws; replicate streams use 0..T-1
POPULATION_STREAM = 2**63


def gen_beta(N: int, a: float, b: float, rng: RngStream) -> Population:
    if N < 1:
        raise ValidationError("N must be >= 1")
    if not (a > 0 and b > 0):
        raise ValidationError(f"beta shapes must be positive, got a={a}, b={b}")
    v = rng.generator.beta(a, b, size=N)
    return Population(v, (0.0, 1.0), f"beta(a={a:g},b={b:g},N={N})")


def gen_lognormal(N: int, mu: float, sigma: float, rng: RngStream) -> Population:
    """``exp(Normal(mu, sigma))``; left unbounded."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    v = rng.generator.lognormal(mu, sigma, size=N)
    return Population(v, None, f"lognormal(mu={mu:g},sigma={sigma:g},N={N})")


def gen_bimodal_beta_mix(N: int, rng: RngStream, a: float = 2.0, b: float = 10.0) -> Population:
    """Two non-overlapping Beta(a, b) modes rescaled onto [0, 1].

    ``(N+1)/2`` records are ``Beta/2`` (inside (0, 0.5)) and ``(N-1)/2`` are
    ``Beta + 1`` (inside (1, 2)); min-max scaling maps the pool to [0, 1].
    The median is the largest record of the first mode.
    """
    if N < 3 or N % 2 == 0:
        raise ValidationError(f"bimodal population needs odd N >= 3, got {N}")
    g = rng.generator
    first = g.beta(a, b, size=(N + 1) // 2) / 2.0
    second = g.beta(a, b, size=(N - 1) // 2) + 1.0
    y = np.concatenate([first, second])
    lo, hi = y.min(), y.max()
    y = (y - lo) / (hi - lo)  # (lo - lo) / w and w / w are exact
    return Population(y, (0.0, 1.0), f"bimodal_beta_mix(a={a:g},b={b:g},N={N})")


GENERATORS = {
    "beta": lambda N, rng, a=2.0, b=10.0: gen_beta(N, a, b, rng),
    "lognormal": lambda N, rng, mu=5.0, sigma=0.5: gen_lognormal(N, mu, sigma, rng),
    "bimodal": lambda N, rng, a=2.0, b=10.0: gen_bimodal_beta_mix(N, rng, a, b),
}


def generate(name: str, N: int, seed: int, stream_id: int = POPULATION_STREAM, **params) -> Population:
    """Build a population by generator name (``beta``, ``lognormal``, ``bimodal``)."""
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise ValidationError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    return fn(int(N), RngStream(int(seed), int(stream_id)), **params)


def save_population(pop: Population, path, provenance: Optional[Dict] = None) -> None:
    """Write ``value`` column with ``#`` comment lines for provenance and bounds."""
    buf = io.StringIO()
    meta = dict(provenance or {})
    meta.setdefault("label", pop.label)
    if pop.bounds is not None:
        meta["bounds"] = f"{pop.bounds[0]!r},{pop.bounds[1]!r}"
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    buf.write("value\n")
    for x in pop.values:
        buf.write(f"{float(x)!r}\n")
    Path(path).write_text(buf.getvalue())


def _parse_bounds(text: str) -> Tuple[float, float]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 2:
        raise ValidationError(f"bounds must look like 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def load_population(path, bounds=None, label: Optional[str] = None) -> Population:
    """Read a single-column CSV. Bounds come from the argument, else a ``# bounds:`` line."""
    meta: Dict[str, str] = {}
    values = []
    header_seen = False
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s[1:].partition(":")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        cell = s.split(",")[0].strip()
        try:
            values.append(float(cell))
        except ValueError:
            if header_seen or values:
                raise ValidationError(f"non-numeric value {cell!r} in {path}")
            header_seen = True
    if bounds is None and "bounds" in meta:
        bounds = _parse_bounds(meta["bounds"])
    elif isinstance(bounds, str):
        bounds = _parse_bounds(bounds)
    if not values:
        raise ValidationError(f"no values found in {path}")
    if any(not math.isfinite(v) for v in values):
        raise ValidationError("population values must be finite")
    return Population(np.array(values), bounds, label if label is not None else meta.get("label", str(path)))
