"""Differentially private means and medians under simple random sampling.

Amplification calculus, global/local/smooth sensitivity, Laplace releases,
a seeded replication harness and brute-force oracles for the closed forms.
"""

from ampgain.core import (LaplaceParams, Population, PrivacyBudget, RngStream, ValidationError,
                          laplace_cdf, laplace_quantile, laplace_sample, population_stats)
from ampgain.amplification import amplified_budget, effective_budget, noise_ratio_mean, q_bound
from ampgain.sensitivity import Kind, SensitivityReport, Statistic, smooth_sensitivity_median
from ampgain.mechanisms import PrivatizedEstimate, privatize_global, privatize_smooth_median

__version__ = "0.1.0"

__all__ = [
    "LaplaceParams", "Population", "PrivacyBudget", "RngStream", "ValidationError",
    "laplace_cdf", "laplace_quantile", "laplace_sample", "population_stats",
    "amplified_budget", "effective_budget", "noise_ratio_mean", "q_bound",
    "Kind", "SensitivityReport", "Statistic", "smooth_sensitivity_median",
    "PrivatizedEstimate", "privatize_global", "privatize_smooth_median",
]
