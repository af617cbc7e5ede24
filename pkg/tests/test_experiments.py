import csv
import json

import numpy as np
import pytest

from ampgain.amplification import amplified_budget
from ampgain.core import Population, PrivacyBudget, RngStream, ValidationError, median_of
from ampgain.experiments import (ExperimentSpec, aggregate, mse_curve, noise_distribution_study,
                                 read_table, run_protocol, size_for_rate, variance_decomposition,
                                 write_results)
from ampgain.mechanisms import privatize_smooth_median

LOGNORMAL = {"generator": "lognormal", "N": 10001, "params": {"mu": 5.0, "sigma": 0.5}, "seed": 123}


def small_spec(**kw):
    d = dict(population={"generator": "lognormal", "N": 501, "params": {"mu": 5.0, "sigma": 0.5}},
             epsilons=[0.1, 1.0], sample_sizes=[51, 101], T=40, master_seed=7)
    d.update(kw)
    return ExperimentSpec.from_dict(d)


def test_size_for_rate():
    assert size_for_rate(0.01, 10001, True) == 101
    assert size_for_rate(0.1, 10001, True) == 1001
    assert size_for_rate(0.9, 10001, True) == 9001
    assert size_for_rate(0.5, 10, False) == 5
    assert size_for_rate(1.0, 10, True) == 9


def test_spec_validation():
    with pytest.raises(ValidationError):
        small_spec(T=0)
    with pytest.raises(ValidationError):
        small_spec(statistic="mean")  # smooth mechanism is median only
    with pytest.raises(ValidationError):
        small_spec(mechanism="global-laplace", delta=0.1)
    with pytest.raises(ValidationError):
        ExperimentSpec.from_dict({"population": {}, "bogus": 1})
    with pytest.raises(ValidationError):
        run_protocol(small_spec(sample_sizes=[50]))


def test_spec_json_round_trip(tmp_path):
    s = small_spec()
    f = tmp_path / "s.json"
    f.write_text(json.dumps(s.to_dict()))
    t = ExperimentSpec.from_json(f)
    assert t.to_dict() == s.to_dict()
    f.write_text("{not json")
    with pytest.raises(ValidationError):
        ExperimentSpec.from_json(f)


def test_default_delta_is_half_over_N():
    assert small_spec().resolved_delta(10001) == pytest.approx(4.9995e-5, rel=1e-4)


def test_full_sample_reproduces_population_record():
    spec = small_spec(T=1, sample_sizes=[])
    res = run_protocol(spec)
    pop = spec.build_population()
    u = float(RngStream(7, 0).child(1).uniform())
    for eps in (0.1, 1.0):
        rec = res.cell(eps, pop.N)
        est = privatize_smooth_median(pop, PrivacyBudget(eps, 1 / (2 * pop.N)), u=u)
        assert rec["noisy"][0] == est.noisy_value
        assert rec["noise_scale"][0] == est.noise_scale


def test_thread_count_does_not_matter():
    a = run_protocol(small_spec(), threads=1)
    b = run_protocol(small_spec(), threads=4)
    for k in a.records:
        assert np.array_equal(a.records[k], b.records[k])


def test_recorded_budgets_are_amplified():
    res = run_protocol(small_spec())
    r = res.records
    for eps, delta, n, N, en, dn in zip(r["epsilon"], r["delta"], r["n"], r["N"], r["eps_n"], r["delta_n"]):
        want = amplified_budget(PrivacyBudget(eps, delta), n / N)
        assert en == pytest.approx(want.epsilon, rel=1e-12)
        assert dn == pytest.approx(want.delta, rel=1e-12)


def test_aggregates_recomputable_from_csv(tmp_path):
    res = run_protocol(small_spec())
    p1, p2 = write_results(res, tmp_path)
    rec = read_table(p1)
    agg = read_table(p2)
    truth = res.truth
    # one pass over the replicate rows
    acc = {}
    with open(p1) as fh:
        rows = csv.DictReader(l for l in fh if not l.startswith("#"))
        for row in rows:
            key = (float(row["epsilon"]), int(row["n"]))
            s = acc.setdefault(key, [0, 0.0, 0.0])
            s[0] += 1
            s[1] += (float(row["noisy"]) - truth) ** 2
            s[2] += 2 * float(row["noise_scale"]) ** 2
    for i in range(len(agg["epsilon"])):
        key = (agg["epsilon"][i], int(agg["n"][i]))
        cnt, sse, nv = acc[key]
        assert agg["mse"][i] == pytest.approx(sse / cnt, rel=1e-9)
        assert agg["expected_noise_var"][i] == pytest.approx(nv / cnt, rel=1e-9)
    again = aggregate({k: (v.astype(np.int64) if k in ("replicate", "n", "N") else v)
                       for k, v in rec.items()}, truth)
    for a, b in zip(again, res.aggregates):
        for k in a:
            assert a[k] == pytest.approx(b[k], rel=1e-12, nan_ok=True)


def test_variance_decomposition():
    res = run_protocol(small_spec(T=1000, epsilons=[1.0], sample_sizes=[101]))
    noise_v, samp_v = variance_decomposition(res, 1.0, 101)
    noisy = res.cell(1.0, 101)["noisy"]
    assert noise_v + samp_v == pytest.approx(np.var(noisy, ddof=1), rel=0.15)
    assert variance_decomposition(res, 1.0, 501)[1] == pytest.approx(0.0, abs=1e-20)


def test_variance_decomposition_without_noise():
    spec = ExperimentSpec.from_dict(dict(population={"csv": "unused"}, epsilons=[1.0], T=5))
    spec._pop = Population([3.0] * 11)
    res = run_protocol(spec)
    assert variance_decomposition(res, 1.0, 11) == (0.0, 0.0)


def test_mean_mse_at_rate_one_matches_closed_form():
    spec = ExperimentSpec.from_dict(dict(
        population={"generator": "beta", "N": 1001, "params": {"a": 2, "b": 10}},
        statistic="mean", mechanism="global-laplace", epsilons=[0.5], T=1000, master_seed=3))
    res = run_protocol(spec)
    a = res.aggregate(0.5, 1001)
    want = 2 * (1 / 1001 / 0.5) ** 2
    # MSE of squared Laplace draws: relative sd sqrt(5 / T)
    assert a["mse"] == pytest.approx(want, rel=4 * np.sqrt(5 / 1000))
    assert a["mse_rb"] == pytest.approx(want, rel=1e-12)


def test_mse_curve_table_shape():
    spec = small_spec(T=20)
    table, res = mse_curve(spec, rates=[0.1, 0.5], epsilons=[0.5])
    assert [r["n"] for r in table] == [51, 251, 501]
    assert table[-1]["rate"] == 1.0


def test_lognormal_noise_ordering():
    spec = ExperimentSpec.from_dict(dict(population=LOGNORMAL, epsilons=[0.1, 1.0],
                                         sample_sizes=[1001, 101], T=1000, master_seed=123))
    res = run_protocol(spec)
    s = {(r["epsilon"], r["n"]): r for r in noise_distribution_study(res)}
    q = lambda e, n: s[(e, n)]["abs_noise_q50"]
    assert q(0.1, 101) < q(0.1, 1001) < q(0.1, 10001)
    assert q(1.0, 10001) < q(1.0, 1001) < q(1.0, 101)


def test_bimodal_sample_sensitivity_mostly_smaller():
    spec = ExperimentSpec.from_dict(dict(
        population={"generator": "bimodal", "N": 10001, "seed": 123},
        epsilons=[0.1, 0.5, 1.0], sample_sizes=[1001, 101], T=1000, master_seed=123))
    res = run_protocol(spec)
    for row in noise_distribution_study(res):
        if row["n"] < 10001:
            assert row["ratio_below_one"] > 0.5
