import numpy as np
import pytest
from scipy import stats

from src.comparison_stats import (_ad_asymptotic_p, anderson_darling_k, anova_oneway, exact_mean, ks_two_sample,
                                  pearson_r, summarize, welch_t)
from src.errors import CharacterError

# four-sample fixture from the k-sample Anderson-Darling literature
AD_SAMPLES = [
    [38.7, 41.5, 43.8, 44.5, 45.5, 46.0, 47.7, 58.0],
    [39.2, 39.3, 39.7, 41.4, 41.8, 42.9, 43.3, 45.8],
    [34.0, 35.0, 39.0, 40.0, 43.0, 43.0, 44.0, 45.0],
    [34.0, 34.8, 34.8, 35.4, 37.2, 37.8, 41.2, 42.8],
]


def _midrank_ad_oracle(samples):
    samples = [np.asarray(s, dtype=float) for s in samples]
    pooled = np.sort(np.concatenate(samples))
    N = len(pooled)
    distinct, counts = np.unique(pooled, return_counts=True)
    B = np.cumsum(counts) - counts / 2.0
    total = 0.0
    for s in samples:
        n = len(s)
        inner = 0.0
        for z, l, b in zip(distinct, counts, B):
            m = np.sum(s < z) + np.sum(s == z) / 2.0
            inner += l * (N * m - n * b) ** 2 / (b * (N - b) - N * l / 4.0)
        total += inner / n
    return total * (N - 1) / N ** 2


def test_summarize_constant():
    s = summarize([1, 1, 1])
    assert (s.n, s.mean, s.sd) == (3, 1.0, 0.0)
    assert np.isnan(s.kurtosis)


def test_summarize_moments():
    x = np.array([2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0])
    s = summarize(x)
    assert s.mean == 5.0
    assert s.sd == pytest.approx(np.std(x, ddof=1))
    m2 = np.mean((x - 5.0) ** 2)
    m4 = np.mean((x - 5.0) ** 4)
    assert s.kurtosis == pytest.approx(m4 / m2 ** 2 - 3)


def test_summarize_normal_kurtosis():
    x = np.random.default_rng(0).normal(size=10_000)
    assert abs(summarize(x).kurtosis) < 0.1


def test_summarize_empty():
    with pytest.raises(CharacterError):
        summarize([])


def test_exact_mean_is_order_free():
    assert exact_mean([0.1] * 100) == 0.1
    values = np.random.default_rng(2).normal(size=50)
    assert exact_mean(values) == exact_mean(values[::-1])


def test_welch_hand_values():
    res = welch_t([1, 2, 3], [2, 3, 4])
    assert res.t == pytest.approx(-1.224744871, abs=1e-6)
    assert res.df == pytest.approx(4.0)
    assert res.ci_low < -1.0 < res.ci_high


def test_welch_identical_and_swapped():
    a, b = [1.0, 2.0, 4.0, 7.0], [2.0, 2.5, 3.0, 9.0]
    same = welch_t(a, a)
    assert same.t == 0.0
    assert same.p == pytest.approx(1.0)
    ab, ba = welch_t(a, b), welch_t(b, a)
    assert ab.t == pytest.approx(-ba.t)
    assert ab.p == pytest.approx(ba.p)


def test_welch_affine_invariance():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=30), rng.normal(0.5, 2, size=40)
    base = welch_t(a, b)
    moved = welch_t(3 * a + 7, 3 * b + 7)
    assert moved.t == pytest.approx(base.t, rel=1e-9)
    assert moved.df == pytest.approx(base.df, rel=1e-9)


def test_welch_degenerate():
    with pytest.raises(CharacterError):
        welch_t([1, 1], [1, 1])
    with pytest.raises(CharacterError):
        welch_t([1], [1, 2])


def test_ks_statistic():
    assert ks_two_sample([1, 2, 3], [1, 2, 3]).statistic == 0.0
    res = ks_two_sample([0, 0, 0, 0], [1, 1, 1, 1])
    assert res.statistic == 1.0
    assert 0.0 <= res.p <= 1.0


def test_anova_two_groups_is_pooled_t_squared():
    a, b = [1.0, 2.0, 3.5, 4.0], [2.5, 3.0, 5.0, 6.5, 7.0]
    res = anova_oneway([a, b])
    t = stats.ttest_ind(a, b, equal_var=True).statistic
    assert res.f == pytest.approx(t ** 2)
    assert (res.df1, res.df2) == (1, 7)
    assert 0.0 <= res.p <= 1.0


def test_anova_degenerate():
    with pytest.raises(CharacterError):
        anova_oneway([[2, 2, 2], [2, 2, 2]])
    with pytest.raises(CharacterError):
        anova_oneway([[1, 2, 3]])


def test_anderson_darling_published_fixture():
    res = anderson_darling_k(AD_SAMPLES)
    assert 4.40 <= res.t_ad <= 4.50
    assert 8.30 <= res.ad <= 8.45
    assert 0.001 < res.p < 0.005


def test_anderson_darling_matches_direct_formula():
    rng = np.random.default_rng(5)
    for _ in range(10):
        groups = [np.round(rng.normal(size=int(rng.integers(5, 12))), 1) for _ in range(3)]
        assert anderson_darling_k(groups).ad == pytest.approx(_midrank_ad_oracle(groups), rel=1e-9)
    assert anderson_darling_k(AD_SAMPLES[:2]).ad == pytest.approx(_midrank_ad_oracle(AD_SAMPLES[:2]), rel=1e-9)


def test_anderson_darling_null_and_separated():
    same = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    assert anderson_darling_k([same, same, same]).p > 0.25
    separated = anderson_darling_k([np.arange(10.0), np.arange(100.0, 110.0)])
    assert separated.p < 0.01


def test_anderson_darling_large_disjoint_groups_stay_tiny():
    res = anderson_darling_k([np.arange(100.0), np.arange(100.0) + 1000.0])
    assert res.t_ad > 10
    assert res.p < 1e-6


@pytest.mark.parametrize("k", [2, 4])
def test_anderson_darling_p_never_rises_with_t(k):
    p = np.array([_ad_asymptotic_p(t, k) for t in np.linspace(0.0, 200.0, 801)])
    assert np.all(np.diff(p) <= 1e-15)
    assert p[-1] < 1e-30


def test_anderson_darling_degenerate():
    with pytest.raises(CharacterError):
        anderson_darling_k([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(CharacterError):
        anderson_darling_k([[1.0, 2.0, 3.0]])


def test_pearson():
    a = np.array([1.0, 2.0, 4.0, 8.0, 9.0])
    assert pearson_r(a, a).r == pytest.approx(1.0)
    assert pearson_r(a, -a).r == pytest.approx(-1.0)
    with pytest.raises(CharacterError):
        pearson_r(a, np.ones(5))


def test_pearson_matches_direct_formula():
    rng = np.random.default_rng(6)
    sizes = rng.integers(250, 4955, size=111).astype(float)
    lengths = 4 + sizes / 1000 + rng.normal(scale=0.5, size=111)
    da, db = sizes - sizes.mean(), lengths - lengths.mean()
    oracle = np.sum(da * db) / np.sqrt(np.sum(da ** 2) * np.sum(db ** 2))
    assert pearson_r(sizes, lengths).r == pytest.approx(oracle, rel=1e-9)


@pytest.mark.slow
def test_ks_same_distribution_rarely_rejects():
    rng = np.random.default_rng(7)
    kept = sum(ks_two_sample(rng.normal(size=500), rng.normal(size=500)).p > 0.01 for _ in range(200))
    assert kept >= 190
