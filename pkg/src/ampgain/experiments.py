"""Replication protocol for privatized population vs. sample estimates.

For each replicate ``t`` (stream ``(master_seed, t)``):

1. release the population statistic at the target budget;
2. draw SRSWOR samples of every requested size and compute the raw estimate;
3. release each sample estimate at the amplified budget for its rate.

Randomness is shared inside a replicate. One Fisher-Yates permutation gives
all samples (smaller samples are prefixes of larger ones) and one uniform
gives the standard Laplace draw that every cell scales. Cells of the same
replicate are therefore compared on common random numbers, which keeps
MSE differences between rates and budgets far less noisy than independent
draws would. Each cell is still marginally exact.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ampgain.amplification import amplified_budget
from ampgain.core import Population, PrivacyBudget, RngStream, ValidationError, median_of
from ampgain.mechanisms import SampleMeta, privatize_global, privatize_smooth_median
from ampgain.popgen import generate, load_population
from ampgain.sampling import permutation_prefix
from ampgain.sensitivity import (Kind, SensitivityReport, SmoothParams, Statistic,
                                 global_sensitivity_mean, global_sensitivity_median, smooth_beta,
                                 smooth_sensitivity_sorted)

SCHEMA_VERSION = 1
REPLICATE_COLUMNS = ("replicate", "epsilon", "delta", "n", "N", "rate", "eps_n", "delta_n",
                     "raw", "sensitivity", "pop_sensitivity", "noise_scale", "noise", "noisy")
AGGREGATE_COLUMNS = ("epsilon", "n", "N", "rate", "eps_n", "delta_n", "T", "truth",
                     "mse", "log_mse", "mse_rb", "log_mse_rb", "bias", "raw_var",
                     "noise_var", "expected_noise_var", "abs_noise_q05", "abs_noise_q50",
                     "abs_noise_q95", "ratio_q05", "ratio_q25", "ratio_q50", "ratio_q75",
                     "ratio_q95", "ratio_below_one")
MSE_RATES = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
MSE_EPSILONS = (0.01, 0.1, 0.5, 1.0, 3.0, 5.0)


class Mechanism(str, enum.Enum):
    GLOBAL_LAPLACE = "global-laplace"
    SMOOTH_LAPLACE = "smooth-laplace"


def size_for_rate(rate: float, N: int, odd: bool) -> int:
    """``round(rate N)``, bumped to the next odd size when ``odd`` (capped at ``N``)."""
    if not 0.0 < rate <= 1.0:
        raise ValidationError(f"rate must lie in (0, 1], got {rate}")
    n = max(1, int(round(rate * N)))
    if odd and n % 2 == 0:
        n = n + 1 if n < N else n - 1
    return n


@dataclass
class ExperimentSpec:
    """Declarative replication study; see :meth:`from_dict` for the JSON layout."""

    population: Dict
    statistic: Statistic = Statistic.MEDIAN
    mechanism: Mechanism = Mechanism.SMOOTH_LAPLACE
    epsilons: Tuple[float, ...] = (0.1,)
    delta: Optional[float] = None
    sample_sizes: Tuple[int, ...] = ()
    rates: Tuple[float, ...] = ()
    T: int = 1000
    master_seed: int = 0
    clamp: Optional[Tuple[float, float]] = None
    name: str = ""
    _pop: Optional[Population] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.statistic = Statistic(self.statistic)
        self.mechanism = Mechanism(self.mechanism)
        self.epsilons = tuple(float(e) for e in self.epsilons)
        self.sample_sizes = tuple(int(n) for n in self.sample_sizes)
        self.rates = tuple(float(r) for r in self.rates)
        if not self.epsilons:
            raise ValidationError("at least one epsilon is required")
        for e in self.epsilons:
            PrivacyBudget(e)
        if int(self.T) < 1:
            raise ValidationError("T must be >= 1")
        self.T = int(self.T)
        if self.mechanism is Mechanism.SMOOTH_LAPLACE and self.statistic is not Statistic.MEDIAN:
            raise ValidationError("the smooth Laplace mechanism is only defined for the median")
        if self.mechanism is Mechanism.GLOBAL_LAPLACE and self.delta not in (None, 0, 0.0):
            raise ValidationError("the global Laplace mechanism is pure eps-DP; delta must be 0")
        if self.clamp is not None:
            self.clamp = (float(self.clamp[0]), float(self.clamp[1]))

    @classmethod
    def from_dict(cls, d: Dict) -> "ExperimentSpec":
        """Keys: ``population`` (``{"generator", "N", "params", "seed"}`` or
        ``{"csv", "bounds"}``), ``statistic``, ``mechanism``, ``epsilons`` (or a
        scalar ``epsilon``), ``delta``, ``sample_sizes``, ``rates``, ``T``,
        ``master_seed``, ``clamp``, ``name``."""
        d = dict(d)
        if "epsilon" in d and "epsilons" not in d:
            d["epsilons"] = [d.pop("epsilon")]
        known = {"population", "statistic", "mechanism", "epsilons", "delta", "sample_sizes",
                 "rates", "T", "master_seed", "clamp", "name"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown spec keys: {sorted(extra)}")
        if "population" not in d:
            raise ValidationError("spec needs a population entry")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read spec {path}: {exc}") from exc
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"spec {path} is not valid JSON: {exc}") from exc
        spec = cls.from_dict(d)
        csv_path = spec.population.get("csv")
        if csv_path is not None and not Path(csv_path).is_absolute():
            spec.population = dict(spec.population, csv=str(Path(path).parent / csv_path))
        return spec

    def to_dict(self) -> Dict:
        d = {k: v for k, v in asdict(self).items() if not k.startswith("_")}
        d["statistic"] = self.statistic.value
        d["mechanism"] = self.mechanism.value
        for k in ("epsilons", "sample_sizes", "rates"):
            d[k] = list(d[k])
        if d["clamp"] is not None:
            d["clamp"] = list(d["clamp"])
        return d

    def build_population(self) -> Population:
        if self._pop is None:
            p = self.population
            if "csv" in p:
                self._pop = load_population(p["csv"], p.get("bounds"))
            elif "generator" in p:
                seed = p.get("seed", self.master_seed)
                self._pop = generate(p["generator"], int(p["N"]), int(seed), **p.get("params", {}))
            else:
                raise ValidationError("population needs either 'csv' or 'generator'")
        return self._pop

    def resolved_delta(self, N: int) -> float:
        if self.mechanism is Mechanism.GLOBAL_LAPLACE:
            return 0.0
        return 1.0 / (2 * N) if self.delta is None else float(self.delta)

    def resolved_sizes(self, N: int) -> List[int]:
        """Requested sizes plus rate-derived ones, sorted, always ending with ``N``."""
        odd = self.statistic is Statistic.MEDIAN and self.mechanism is Mechanism.SMOOTH_LAPLACE
        sizes = set(self.sample_sizes)
        sizes.update(size_for_rate(r, N, odd) for r in self.rates)
        sizes.add(N)
        for n in sizes:
            if not 1 <= n <= N:
                raise ValidationError(f"sample size {n} outside [1, {N}]")
            if odd and n % 2 == 0:
                raise ValidationError(f"smooth median needs odd sample sizes, got {n}")
        return sorted(sizes)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    truth: float
    N: int
    records: Dict[str, np.ndarray]
    aggregates: List[Dict]

    def cell(self, epsilon: float, n: int) -> Dict[str, np.ndarray]:
        m = (self.records["epsilon"] == epsilon) & (self.records["n"] == n)
        return {k: v[m] for k, v in self.records.items()}

    def aggregate(self, epsilon: float, n: int) -> Dict:
        for row in self.aggregates:
            if row["epsilon"] == epsilon and row["n"] == n:
                return row
        raise KeyError((epsilon, n))


def _statistic(sorted_values: np.ndarray, statistic: Statistic) -> float:
    if statistic is Statistic.MEAN:
        return float(np.mean(sorted_values))
    return median_of(sorted_values)


class _Plan:
    """Everything that does not change across replicates."""

    def __init__(self, spec: ExperimentSpec, prune: bool = True):
        self.spec = spec
        self.pop = spec.build_population()
        self.N = N = self.pop.N
        if spec.mechanism is Mechanism.SMOOTH_LAPLACE and N % 2 == 0:
            raise ValidationError(f"smooth median needs an odd population size, got N={N}")
        self.prune = prune
        self.sorted_pop = self.pop.sorted_values()
        self.truth = _statistic(self.sorted_pop, spec.statistic)
        self.sizes = spec.resolved_sizes(N)
        self.delta = spec.resolved_delta(N)
        self.targets = [PrivacyBudget(e, self.delta) for e in spec.epsilons]
        # sample budgets per (eps index, n)
        self.budgets = {(i, n): amplified_budget(b, n / N)
                        for i, b in enumerate(self.targets) for n in self.sizes}
        self.pop_sens = [self._sensitivity(self.sorted_pop, self.budgets[(i, N)])
                         for i in range(len(self.targets))]

    def _sensitivity(self, sorted_values: np.ndarray, budget: PrivacyBudget) -> SensitivityReport:
        n = sorted_values.size
        if self.spec.mechanism is Mechanism.GLOBAL_LAPLACE:
            R = self.pop.range if self.pop.bounds is not None else None
            if self.spec.statistic is Statistic.MEAN:
                return global_sensitivity_mean(R, n)
            return global_sensitivity_median(R)
        beta = smooth_beta(budget.epsilon, budget.delta)
        value, k = smooth_sensitivity_sorted(sorted_values, beta, self.pop.bounds, prune=self.prune)
        return SensitivityReport(Kind.SMOOTH, Statistic.MEDIAN, value,
                                 SmoothParams(budget.epsilon, budget.delta, beta), k)

    def replicate(self, t: int) -> List[Tuple]:
        spec, N = self.spec, self.N
        stream = RngStream(spec.master_seed, t)
        perm = permutation_prefix(N, max(n for n in self.sizes if n < N) if len(self.sizes) > 1 else 0,
                                  stream.child(0))
        u = float(stream.child(1).uniform())
        rows = []
        for n in self.sizes:
            if n == N:
                values = self.sorted_pop
            else:
                values = np.sort(self.pop.values[np.sort(perm[:n])])
            sample = Population(values, self.pop.bounds) if n < N else self.pop
            raw = _statistic(values, spec.statistic)
            for i, target in enumerate(self.targets):
                budget = self.budgets[(i, n)]
                sens = self.pop_sens[i] if n == N else self._sensitivity(values, budget)
                meta = SampleMeta(n, N, n < N)
                if spec.mechanism is Mechanism.GLOBAL_LAPLACE:
                    est = privatize_global(raw, sens, budget, u=u, sample_meta=meta, clamp=spec.clamp)
                else:
                    est = privatize_smooth_median(sample, budget, u=u, sens=sens,
                                                  sample_meta=meta, clamp=spec.clamp)
                rows.append((t, target.epsilon, target.delta, n, N, n / N, budget.epsilon,
                             budget.delta, est.raw_value, sens.value, self.pop_sens[i].value,
                             est.noise_scale, est.noisy_value - est.raw_value, est.noisy_value))
        return rows


def run_protocol(spec: ExperimentSpec, threads: int = 1, prune: bool = True) -> ExperimentResult:
    """Run all replicates; output is identical for any ``threads``."""
    if int(threads) < 1:
        raise ValidationError("threads must be >= 1")
    plan = _Plan(spec, prune=prune)
    if threads == 1:
        chunks = [plan.replicate(t) for t in range(spec.T)]
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            chunks = list(pool.map(plan.replicate, range(spec.T)))  # map keeps replicate order
    rows = [r for chunk in chunks for r in chunk]
    cols = list(zip(*rows))
    records = {}
    for name, col in zip(REPLICATE_COLUMNS, cols):
        dtype = np.int64 if name in ("replicate", "n", "N") else float
        records[name] = np.array(col, dtype=dtype)
    result = ExperimentResult(spec, plan.truth, plan.N, records, [])
    result.aggregates = aggregate(records, plan.truth)
    return result


def _log(x: float) -> float:
    return math.log(x) if x > 0 else float("-inf")


def aggregate(records: Dict[str, np.ndarray], truth: float) -> List[Dict]:
    """Per-(epsilon, n) summaries, recomputable from the replicate columns alone."""
    out = []
    keys = sorted(set(zip(records["epsilon"].tolist(), records["n"].tolist())))
    for eps, n in keys:
        m = (records["epsilon"] == eps) & (records["n"] == n)
        raw, noisy, noise = records["raw"][m], records["noisy"][m], records["noise"][m]
        scale = records["noise_scale"][m]
        T = int(m.sum())
        mse = float(np.mean((noisy - truth) ** 2))
        mse_rb = float(np.mean((raw - truth) ** 2 + 2.0 * scale ** 2))
        pop_s = records["pop_sensitivity"][m]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = records["sensitivity"][m] / pop_s
        rq = np.quantile(ratio, [0.05, 0.25, 0.5, 0.75, 0.95]) if np.all(pop_s > 0) else [math.nan] * 5
        aq = np.quantile(np.abs(noise), [0.05, 0.5, 0.95])
        ddof = 1 if T > 1 else 0
        out.append({
            "epsilon": eps, "n": n, "N": int(records["N"][m][0]),
            "rate": float(records["rate"][m][0]), "eps_n": float(records["eps_n"][m][0]),
            "delta_n": float(records["delta_n"][m][0]), "T": T, "truth": truth,
            "mse": mse, "log_mse": _log(mse), "mse_rb": mse_rb, "log_mse_rb": _log(mse_rb),
            "bias": float(np.mean(raw) - truth), "raw_var": float(np.var(raw, ddof=ddof)),
            "noise_var": float(np.var(noise, ddof=ddof)),
            "expected_noise_var": float(np.mean(2.0 * scale ** 2)),
            "abs_noise_q05": float(aq[0]), "abs_noise_q50": float(aq[1]), "abs_noise_q95": float(aq[2]),
            "ratio_q05": float(rq[0]), "ratio_q25": float(rq[1]), "ratio_q50": float(rq[2]),
            "ratio_q75": float(rq[3]), "ratio_q95": float(rq[4]),
            "ratio_below_one": float(np.mean(ratio < 1.0)) if np.all(pop_s > 0) else math.nan,
        })
    return out


def mse_curve(spec: ExperimentSpec, threads: int = 1, rates: Sequence[float] = MSE_RATES,
              epsilons: Optional[Sequence[float]] = None) -> Tuple[List[Dict], ExperimentResult]:
    """Log MSE against the true population value per (epsilon, rate), rate 1 included.

    ``log_mse`` is the plain empirical value; ``log_mse_rb`` replaces each
    squared noisy error by its expectation over the Laplace draw
    (``(raw - truth)^2 + 2 b^2``), which removes the noise part of the
    Monte-Carlo error.
    """
    d = spec.to_dict()
    d["rates"] = list(rates)
    d["sample_sizes"] = []
    if epsilons is not None:
        d["epsilons"] = list(epsilons)
    res = run_protocol(ExperimentSpec.from_dict(d), threads=threads)
    table = [{"epsilon": a["epsilon"], "rate": a["rate"], "n": a["n"],
              "log_mse": a["log_mse"], "log_mse_rb": a["log_mse_rb"]} for a in res.aggregates]
    return table, res


def noise_distribution_study(result: ExperimentResult) -> List[Dict]:
    """|noise| quantiles and sensitivity-ratio summaries per (epsilon, n)."""
    keep = ("epsilon", "n", "rate", "abs_noise_q05", "abs_noise_q50", "abs_noise_q95",
            "noise_var", "expected_noise_var", "ratio_q50", "ratio_below_one")
    return [{k: a[k] for k in keep} for a in result.aggregates]


def variance_decomposition(result: ExperimentResult, epsilon: float, n: int) -> Tuple[float, float]:
    """``(E[2 b^2], Var(raw))`` for one cell: expected noise variance and sampling variance."""
    c = result.cell(epsilon, n)
    if c["raw"].size < 2:
        raise ValidationError("variance decomposition needs T >= 2")
    return float(np.mean(2.0 * c["noise_scale"] ** 2)), float(np.var(c["raw"], ddof=1))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_table(path: Path, kind: str, columns: Sequence[str], rows, provenance: Dict) -> None:
    buf = io.StringIO()
    buf.write(f"# schema: ampgain.{kind} v{SCHEMA_VERSION}\n")
    for k, v in provenance.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())


def write_results(result: ExperimentResult, outdir) -> Tuple[Path, Path]:
    """Write ``replicates.csv`` and ``aggregates.csv``; returns both paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    prov = {"spec": json.dumps(result.spec.to_dict(), sort_keys=True),
            "truth": repr(result.truth)}
    rec = result.records
    rows = zip(*(rec[c] for c in REPLICATE_COLUMNS))
    p1, p2 = out / "replicates.csv", out / "aggregates.csv"
    _write_table(p1, "replicates", REPLICATE_COLUMNS, rows, prov)
    _write_table(p2, "aggregates", AGGREGATE_COLUMNS,
                 ([a[c] for c in AGGREGATE_COLUMNS] for a in result.aggregates), prov)
    return p1, p2


def read_table(path) -> Dict[str, np.ndarray]:
    """Load a results CSV back into float columns (comment lines skipped)."""
    lines = [l for l in Path(path).read_text().splitlines() if l and not l.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    data = np.array([[float(x) for x in row] for row in reader])
    return {h: data[:, i] for i, h in enumerate(header)}
