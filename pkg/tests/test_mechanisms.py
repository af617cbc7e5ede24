import math

import numpy as np
import pytest

from ampgain.core import Population, PrivacyBudget, RngStream, ValidationError
from ampgain.mechanisms import noise_variance, privatize_global, privatize_smooth_median
from ampgain.popgen import gen_beta
from ampgain.sensitivity import (global_sensitivity_mean, global_sensitivity_median,
                                 local_sensitivity_median)


def test_global_scale_and_variance():
    est = privatize_global(0.3, global_sensitivity_mean(1, 10001), PrivacyBudget(0.1), RngStream(1))
    assert est.noise_scale == pytest.approx(10 / 10001, rel=1e-14)
    assert noise_variance(est.noise_scale) == pytest.approx(2.0e-6, rel=1e-3)
    assert est.noisy_value - est.raw_value == pytest.approx(est.noise)


def test_global_zero_sensitivity_is_exact():
    from ampgain.sensitivity import Kind, SensitivityReport, Statistic
    sens = SensitivityReport(Kind.GLOBAL, Statistic.MEAN, 0.0)
    est = privatize_global(0.25, sens, PrivacyBudget(1.0), RngStream(3))
    assert est.noisy_value == 0.25


def test_global_rejects_delta_and_kind():
    with pytest.raises(ValidationError):
        privatize_global(0, global_sensitivity_median(1), PrivacyBudget(1, 1e-5), RngStream(1))
    with pytest.raises(ValidationError):
        privatize_global(0, local_sensitivity_median(Population([1.0, 2.0, 3.0])), PrivacyBudget(1), RngStream(1))


def test_global_median_spread():
    sens = global_sensitivity_median(1)
    noisy = [privatize_global(0.15, sens, PrivacyBudget(0.1), RngStream(9, t)).noisy_value
             for t in range(1000)]
    # 0.1% and 99.9% Laplace(0, 10) quantiles are -+ 10 ln 500 = -+62
    assert -120 < min(noisy) < -20 and 20 < max(noisy) < 120
    assert 10 * math.log(500) == pytest.approx(62.1, abs=0.1)


def test_replay_and_scale_linearity():
    sens = global_sensitivity_mean(1, 11)
    a = privatize_global(0.0, sens, PrivacyBudget(0.5), RngStream(5, 2))
    b = privatize_global(0.0, sens, PrivacyBudget(0.5), RngStream(5, 2))
    c = privatize_global(0.0, sens, PrivacyBudget(1.0), RngStream(5, 2))
    assert a.noise == b.noise
    assert a.noise / c.noise == 2.0


def test_noise_variance_replays():
    sens = global_sensitivity_mean(1, 5)
    x = np.array([privatize_global(0.0, sens, PrivacyBudget(0.8), RngStream(77, t)).noise
                  for t in range(100_000)])
    b = 0.2 / 0.8
    assert abs(np.var(x) / (2 * b * b) - 1) < 0.03


def test_smooth_example_scale():
    p = Population([0, 0.25, 0.5, 0.75, 1], (0, 1))
    est = privatize_smooth_median(p, PrivacyBudget(1.0, 0.25), RngStream(2))
    assert est.raw_value == 0.5
    assert est.noise_scale == pytest.approx(2 * 0.4860967890703689, rel=1e-14)
    assert est.noise_scale == pytest.approx(0.9724, abs=5e-4)


def test_smooth_constant_unbounded_is_exact():
    est = privatize_smooth_median(Population([2.0] * 9), PrivacyBudget(0.5, 0.01), RngStream(1))
    assert est.noisy_value == 2.0 and est.noise_scale == 0.0


def test_smooth_rejections():
    with pytest.raises(ValidationError):
        privatize_smooth_median(Population([1.0, 2.0]), PrivacyBudget(1, 0.1), RngStream(1))
    with pytest.raises(ValidationError):
        privatize_smooth_median(Population([1.0, 2.0, 3.0]), PrivacyBudget(1, 0.0), RngStream(1))


def test_smooth_tighter_than_global_on_beta():
    pop = gen_beta(10001, 2, 10, RngStream(123, 2**63))
    b = PrivacyBudget(0.5, 1 / 20002)
    sm = privatize_smooth_median(pop, b, RngStream(1))
    gl_scale = global_sensitivity_median(1).value / 0.5
    assert sm.noise_scale < gl_scale / 10


def test_injected_uniform_and_clamp():
    sens = global_sensitivity_median(1)
    est = privatize_global(0.5, sens, PrivacyBudget(0.1), u=0.5)
    assert est.noisy_value == 0.5
    est = privatize_global(0.5, sens, PrivacyBudget(0.1), u=0.999, clamp=(0, 1))
    assert est.clamped and est.noisy_value in (0.0, 1.0)
    with pytest.raises(ValidationError):
        privatize_global(0.5, sens, PrivacyBudget(0.1), u=1.0)
    with pytest.raises(ValidationError):
        privatize_global(0.5, sens, PrivacyBudget(0.1))
