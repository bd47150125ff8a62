"""
Comparison statistics for K/D distributions and wordlist descriptives.

Thin, validated wrappers over scipy.stats returning plain named results, plus
the raw Anderson-Darling k-sample statistic (scipy only reports the
standardized one) and an uncapped asymptotic p-value for it.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import stats

from src.errors import CharacterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float
    kurtosis: float


class WelchResult(NamedTuple):
    t: float
    df: float
    p: float
    ci_low: float
    ci_high: float


class KSResult(NamedTuple):
    statistic: float
    p: float


class AnovaResult(NamedTuple):
    f: float
    df1: int
    df2: int
    p: float


class ADResult(NamedTuple):
    ad: float
    t_ad: float
    p: float


class PearsonResult(NamedTuple):
    r: float
    p: float


def _clean(xs, name="sample"):
    arr = np.asarray(xs, dtype=float)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        raise CharacterError(f"{name} is empty")
    return arr


def summarize(xs):
    x = _clean(xs)
    n = x.size
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    # biased moments, excess (Fisher) kurtosis
    kurt = float(stats.kurtosis(x, fisher=True, bias=True)) if n >= 4 and sd > 0 else float("nan")
    return SampleSummary(n=n, mean=float(x.mean()), sd=sd, kurtosis=kurt)


def exact_mean(xs):
    """Correctly rounded mean; independent of summation order."""
    x = _clean(xs)
    return float(sum(map(Fraction, x.tolist()), Fraction(0)) / x.size)


def welch_t(a, b, confidence=0.95):
    a, b = _clean(a, "first sample"), _clean(b, "second sample")
    if a.size < 2 or b.size < 2:
        raise CharacterError("Welch t needs at least 2 values per sample")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0:
        raise CharacterError("Welch t is undefined when both samples are constant")
    res = stats.ttest_ind(a, b, equal_var=False)
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    diff = a.mean() - b.mean()
    half = stats.t.ppf(0.5 + confidence / 2, df) * np.sqrt(va + vb)
    return WelchResult(t=float(res.statistic), df=float(df), p=float(res.pvalue),
                       ci_low=float(diff - half), ci_high=float(diff + half))


def ks_two_sample(a, b):
    a, b = _clean(a, "first sample"), _clean(b, "second sample")
    res = stats.ks_2samp(a, b, method="asymp")
    return KSResult(statistic=float(res.statistic), p=float(res.pvalue))


def anova_oneway(groups):
    groups = [_clean(g, f"group {i + 1}") for i, g in enumerate(groups)]
    if len(groups) < 2:
        raise CharacterError("one-way ANOVA needs at least 2 groups")
    if any(g.size < 2 for g in groups):
        raise CharacterError("one-way ANOVA needs at least 2 values per group")
    within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    if within == 0:
        raise CharacterError("F is undefined: zero within-group variance")
    res = stats.f_oneway(*groups)
    n_total = sum(g.size for g in groups)
    return AnovaResult(f=float(res.statistic), df1=len(groups) - 1, df2=n_total - len(groups), p=float(res.pvalue))


# Scholz & Stephens interpolation table (significance levels and critical-value coefficients)
_AD_SIG = np.array([0.25, 0.1, 0.05, 0.025, 0.01, 0.005, 0.001])
_AD_B0 = np.array([0.675, 1.281, 1.645, 1.96, 2.326, 2.573, 3.085])
_AD_B1 = np.array([-0.245, 0.25, 0.678, 1.149, 1.822, 2.364, 3.615])
_AD_B2 = np.array([-0.105, -0.305, -0.362, -0.391, -0.396, -0.345, -0.154])


def _ad_variance(sizes):
    sizes = np.asarray(sizes, dtype=float)
    k = len(sizes)
    N = sizes.sum()
    H = (1.0 / sizes).sum()
    hs_cs = (1.0 / np.arange(N - 1, 1, -1)).cumsum()
    h = hs_cs[-1] + 1
    g = (hs_cs / np.arange(2, N)).sum()
    a = (4 * g - 6) * (k - 1) + (10 - 6 * g) * H
    b = (2 * g - 4) * k ** 2 + 8 * h * k + (2 * g - 14 * h - 4) * H - 8 * h + 4 * g - 6
    c = (6 * h + 2 * g - 2) * k ** 2 + (4 * h - 4 * g + 6) * k + (2 * h - 6) * H + 4 * h
    d = (2 * h + 6) * k ** 2 - 4 * h * k
    return (a * N ** 3 + b * N ** 2 + c * N + d) / ((N - 1) * (N - 2) * (N - 3))


def _ad_asymptotic_p(t_ad, k):
    m = k - 1
    critical = _AD_B0 + _AD_B1 / np.sqrt(m) + _AD_B2 / m
    log_sig = np.log(_AD_SIG)
    coeffs = np.polyfit(critical, log_sig, 2)
    if t_ad <= critical[-1]:
        return float(min(1.0, np.exp(np.polyval(coeffs, t_ad))))
    # past the table the fitted parabola turns back up; continue along the last secant instead
    slope = (log_sig[-1] - log_sig[-2]) / (critical[-1] - critical[-2])
    return float(min(1.0, np.exp(np.polyval(coeffs, critical[-1]) + slope * (t_ad - critical[-1]))))


def anderson_darling_k(groups):
    """Ties-adjusted (midrank) k-sample statistic: raw AD, standardized T.AD, asymptotic p."""
    groups = [_clean(g, f"group {i + 1}") for i, g in enumerate(groups)]
    if len(groups) < 2:
        raise CharacterError("Anderson-Darling k-sample test needs at least 2 groups")
    pooled = np.concatenate(groups)
    if np.unique(pooled).size < 2:
        raise CharacterError("Anderson-Darling k-sample test needs at least 2 distinct values")
    if pooled.size < 4:
        raise CharacterError("Anderson-Darling k-sample test needs at least 4 values in total")
    res = stats.anderson_ksamp(groups, midrank=True)
    t_ad = float(res.statistic)
    sigma = np.sqrt(_ad_variance([g.size for g in groups]))
    ad = t_ad * sigma + (len(groups) - 1)
    return ADResult(ad=float(ad), t_ad=t_ad, p=_ad_asymptotic_p(t_ad, len(groups)))


def pearson_r(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise CharacterError("Pearson r needs two equal-length 1-d samples")
    if a.size < 3:
        raise CharacterError("Pearson r needs at least 3 pairs")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise CharacterError("Pearson r is undefined for constant input")
    res = stats.pearsonr(a, b)
    return PearsonResult(r=float(res.statistic), p=float(res.pvalue))
