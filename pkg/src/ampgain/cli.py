"""Command-line front end.

Machine-readable output (JSON records, CSV tables) goes to stdout and
diagnostics to stderr. Exit codes: 0 success, 1 a verification failed,
2 invalid input, 3 I/O error, 4 a size guard was hit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from ampgain import amplification as amp
from ampgain.core import Population, PrivacyBudget, RngStream, ValidationError, median_of
from ampgain.experiments import (MSE_RATES, ExperimentSpec, mse_curve,
                                 run_protocol, write_results)
from ampgain.mechanisms import privatize_global, privatize_smooth_median
from ampgain.oracle import verify_amplification
from ampgain.popgen import GENERATORS, generate, load_population, save_population
from ampgain.sampling import GuardExceeded
from ampgain.sensitivity import (Kind, Statistic, global_sensitivity, local_sensitivity,
                                 smooth_sensitivity)

EXIT_FAIL, EXIT_VALIDATION, EXIT_IO, EXIT_GUARD = 1, 2, 3, 4


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _bounds(text):
    if text is None:
        return None
    lo, _, hi = text.partition(",")
    try:
        return float(lo), float(hi)
    except ValueError:
        raise ValidationError(f"bounds must look like 'lo,hi', got {text!r}")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _rate(args) -> float:
    if args.rate is not None:
        if args.n is not None or args.N is not None:
            raise ValidationError("give either --rate or --n/--N, not both")
        return args.rate
    if args.n is None or args.N is None:
        raise ValidationError("give --rate or both --n and --N")
    if not 1 <= args.n <= args.N:
        raise ValidationError(f"need 1 <= n <= N, got n={args.n}, N={args.N}")
    return args.n / args.N


def cmd_amplify(args) -> int:
    rate = _rate(args)
    res = amp.amplify(PrivacyBudget(args.eps, args.delta), rate, args.direction)
    _emit(res.to_dict())
    return 0


def _load(args) -> Population:
    return load_population(args.input, _bounds(args.bounds))


def cmd_sensitivity(args) -> int:
    pop = _load(args)
    stat = Statistic(args.statistic)
    if args.kind == Kind.GLOBAL.value:
        rep = global_sensitivity(pop, stat)
    elif args.kind == Kind.LOCAL.value:
        rep = local_sensitivity(pop, stat)
    else:
        if args.eps is None:
            raise ValidationError("smooth sensitivity needs --eps")
        delta = args.delta if args.delta is not None else 1.0 / (2 * pop.N)
        rep = smooth_sensitivity(pop, stat, PrivacyBudget(args.eps, delta), prune=not args.no_prune)
    out = rep.to_dict()
    out["N"] = pop.N
    _emit(out)
    return 0


def cmd_privatize(args) -> int:
    pop = _load(args)
    stat = Statistic(args.statistic)
    rng = RngStream(args.seed, args.stream)
    clamp = _bounds(args.clamp)
    if args.mechanism == "global-laplace":
        raw = float(np.mean(pop.values)) if stat is Statistic.MEAN else median_of(pop.values)
        est = privatize_global(raw, global_sensitivity(pop, stat), PrivacyBudget(args.eps, 0.0),
                               rng, clamp=clamp)
    else:
        if stat is not Statistic.MEDIAN:
            raise ValidationError("the smooth mechanism releases the median only")
        delta = args.delta if args.delta is not None else 1.0 / (2 * pop.N)
        est = privatize_smooth_median(pop, PrivacyBudget(args.eps, delta), rng, clamp=clamp)
    _emit(est.to_dict())
    return 0


def cmd_popgen(args) -> int:
    params = {}
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValidationError(f"--param expects key=value, got {item!r}")
        params[key] = float(val)
    pop = generate(args.generator, args.N, args.seed, **params)
    prov = {"generator": args.generator, "N": args.N, "seed": args.seed,
            "params": json.dumps(params, sort_keys=True)}
    if args.out:
        save_population(pop, args.out, prov)
        _emit({"out": str(args.out), "N": pop.N, "label": pop.label})
    else:
        tmp = io.StringIO()
        for k, v in prov.items():
            tmp.write(f"# {k}: {v}\n")
        if pop.bounds is not None:
            tmp.write(f"# bounds: {pop.bounds[0]!r},{pop.bounds[1]!r}\n")
        tmp.write("value\n")
        tmp.writelines(f"{float(x)!r}\n" for x in pop.values)
        sys.stdout.write(tmp.getvalue())
    return 0


def _spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.from_json(args.spec)
    spec.master_seed = int(args.seed)
    if getattr(args, "T", None) is not None:
        spec.T = int(args.T)
    return spec


def cmd_simulate(args) -> int:
    spec = _spec(args)
    t0 = time.perf_counter()
    res = run_protocol(spec, threads=args.threads, prune=not args.no_prune)
    p1, p2 = write_results(res, args.out)
    wall = time.perf_counter() - t0
    _emit({"T": spec.T, "wall_time_s": round(wall, 3), "replicates": str(p1), "aggregates": str(p2)})
    return 0


def cmd_mse_curve(args) -> int:
    spec = _spec(args)
    eps = _floats(args.epsilons) if args.epsilons else list(spec.epsilons)
    rates = _floats(args.rates) if args.rates else list(spec.rates or MSE_RATES)
    table, res = mse_curve(spec, threads=args.threads, rates=rates, epsilons=eps)
    buf = io.StringIO()
    buf.write("# schema: ampgain.mse_curve v1\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = ("epsilon", "rate", "n", "log_mse", "log_mse_rb")
    w.writerow(cols)
    for row in table:
        w.writerow([row[c] if c == "n" else repr(float(row[c])) for c in cols])
    if args.out:
        out = Path(args.out)
        write_results(res, out)
        (out / "mse_curve.csv").write_text(buf.getvalue())
        _emit({"T": spec.T, "mse_curve": str(out / "mse_curve.csv")})
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_critical_eps(args) -> int:
    rates = _floats(args.rate)
    rows = []
    for r in rates:
        eps, eps_n = amp.critical_eps_for_unit_ratio(r, tol=args.tol)
        rows.append({"rate": r, "eps": eps, "eps_n": eps_n,
                     "residual": abs(amp.noise_ratio_mean(eps, r) - 1.0), "tol": args.tol})
    for row in rows:
        _emit(row)
    return 0


def cmd_bounds(args) -> int:
    rate = _rate(args)
    out = {"eps": args.eps, "rate": rate,
           "eps_n": amp.amplified_budget(PrivacyBudget(args.eps), rate).epsilon,
           "q_bound": amp.q_bound(args.eps, rate),
           "q_bound_small_eps": amp.q_bound_small_eps(rate),
           "noise_ratio_mean": amp.noise_ratio_mean(args.eps, rate)}
    if args.sens is not None:
        out["no_gain_threshold"] = amp.no_gain_threshold(args.sens, args.eps, rate)
    if args.q is not None:
        out["rate_for_q"] = amp.rate_for_q(args.eps, args.q)
    _emit(out)
    return 0


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    grid = np.linspace(-2.0, 3.0, args.grid)
    worst, checks = -math.inf, 0
    for _ in range(args.pairs):
        a = rng.random(args.N)
        b = a.copy()
        b[rng.integers(args.N)] = rng.random()
        rep = verify_amplification(Population(a, (0.0, 1.0)), Population(b, (0.0, 1.0)),
                                   args.n, args.eps, args.delta, grid)
        worst = max(worst, rep.max_violation)
        checks += rep.n_checks
    passed = worst <= 1e-12
    _emit({"N": args.N, "n": args.n, "eps": args.eps, "delta": args.delta, "pairs": args.pairs,
           "checks": checks, "max_violation": worst, "passed": passed})
    return 0 if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ampgain", description="Private means and medians under "
                                "sampling: amplification, sensitivity, simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def rate_args(sp):
        sp.add_argument("--rate", type=float, help="sampling rate n/N in (0, 1]")
        sp.add_argument("--n", type=int, help="sample size (with --N)")
        sp.add_argument("--N", type=int, help="population size (with --n)")

    sp = sub.add_parser("amplify", help="convert between sample and population budgets")
    sp.add_argument("--eps", type=float, required=True, help="epsilon of the input budget")
    sp.add_argument("--delta", type=float, default=0.0, help="delta of the input budget (default 0)")
    rate_args(sp)
    sp.add_argument("--direction", choices=[d.value for d in amp.Direction], default="to-sample",
                    help="to-sample: budget the sample may spend for a population target; "
                         "to-effective: population guarantee of a sample budget (default to-sample)")
    sp.set_defaults(func=cmd_amplify)

    def pop_args(sp):
        sp.add_argument("--input", required=True, help="single-column CSV of values")
        sp.add_argument("--bounds", help="lo,hi (overrides a '# bounds:' line in the file)")
        sp.add_argument("--statistic", choices=[s.value for s in Statistic], default="median")

    sp = sub.add_parser("sensitivity", help="global, local or smooth sensitivity of a population")
    pop_args(sp)
    sp.add_argument("--kind", choices=[k.value for k in Kind], default="global")
    sp.add_argument("--eps", type=float, help="epsilon (smooth only)")
    sp.add_argument("--delta", type=float, help="delta (smooth only, default 1/(2N))")
    sp.add_argument("--no-prune", action="store_true", help="evaluate every (k, t) term")
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("privatize", help="release one privatized statistic")
    pop_args(sp)
    sp.add_argument("--mechanism", choices=["global-laplace", "smooth-laplace"], default="global-laplace")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--delta", type=float, help="delta for smooth-laplace (default 1/(2N))")
    sp.add_argument("--seed", type=int, required=True, help="master seed")
    sp.add_argument("--stream", type=int, default=0, help="stream id (default 0)")
    sp.add_argument("--clamp", help="lo,hi post-processing clamp (off by default)")
    sp.set_defaults(func=cmd_privatize)

    sp = sub.add_parser("popgen", help="generate a synthetic population as CSV")
    sp.add_argument("--generator", choices=sorted(GENERATORS), required=True)
    sp.add_argument("--N", type=int, default=10001, help="population size (default 10001)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--param", action="append", help="generator parameter key=value (repeatable)")
    sp.add_argument("--out", help="output CSV (default stdout)")
    sp.set_defaults(func=cmd_popgen)

    def sim_args(sp):
        sp.add_argument("--spec", required=True, help="experiment spec JSON")
        sp.add_argument("--seed", type=int, required=True, help="master seed for replicate streams")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        sp.add_argument("--T", type=int, help="override the replicate count (spec default 1000)")

    sp = sub.add_parser("simulate", help="run the replication protocol; writes replicates.csv and aggregates.csv")
    sim_args(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--no-prune", action="store_true", help="exhaustive smooth sensitivity")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("mse-curve", help="log MSE against sampling rate per epsilon")
    sim_args(sp)
    sp.add_argument("--epsilons", help="comma list (default: the spec's epsilons)")
    sp.add_argument("--rates", help="comma list (default: the spec's rates, else 0.01,0.1,...,0.9; "
                                    "rate 1 always added)")
    sp.add_argument("--out", help="output directory (default: table to stdout)")
    sp.set_defaults(func=cmd_mse_curve)

    sp = sub.add_parser("critical-eps", help="epsilon where the mean noise ratio reaches 1 - tol")
    sp.add_argument("--rate", required=True, help="rate or comma list of rates in (0, 1)")
    sp.add_argument("--tol", type=float, default=1e-12, help="distance of the ratio from 1 (default 1e-12)")
    sp.set_defaults(func=cmd_critical_eps)

    sp = sub.add_parser("bounds", help="q-bound, noise ratio and no-gain threshold")
    sp.add_argument("--eps", type=float, required=True, help="target epsilon")
    rate_args(sp)
    sp.add_argument("--sens", type=float, help="global sensitivity at N (adds the no-gain threshold)")
    sp.add_argument("--q", type=float, help="also solve for the rate giving this q")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("verify", help="exact check of the amplified DP inequality on random neighbors")
    sp.add_argument("--N", type=int, default=5)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--eps", type=float, default=0.5, help="sample-level epsilon (default 0.5)")
    sp.add_argument("--delta", type=float, default=0.0, help="sample-level delta (default 0)")
    sp.add_argument("--pairs", type=int, default=20, help="random neighbor pairs (default 20)")
    sp.add_argument("--grid", type=int, default=1001, help="omega grid points on [-2, 3] (default 1001)")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GuardExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as exc:  # ValidationError and malformed numbers
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
