import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from src.character_filters import filter_characters, filter_summary, skew, tukey_normalize
from src.data_loaders.data_processor import BiphoneKey, CharacterKind, CharacterMatrix
from src.errors import CharacterError


def _matrix(kind, columns, n_rows):
    index = pd.Index([f"L{i:03d}" for i in range(n_rows)], name="doculect")
    data = {}
    for name, values in columns.items():
        col = np.full(n_rows, np.nan)
        col[:len(values)] = values
        data[name] = col
    keys = tuple(BiphoneKey.parse(name) for name in columns)
    return CharacterMatrix(kind, keys, pd.DataFrame(data, index=index))


def test_skew_examples():
    assert skew([1] * 107 + [0] * 4) == pytest.approx(0.9639, abs=1e-4)
    assert skew([1, 0, 1, 0]) == 0.5
    assert skew([1, 1, 1]) == 1.0
    assert skew([1, np.nan, 0, np.nan]) == 0.5
    with pytest.raises(CharacterError):
        skew([np.nan, np.nan])


def test_min_non_na_threshold():
    m = _matrix(CharacterKind.BINARY, {"a>b": [0, 1] * 24 + [1], "a>c": [0, 1] * 25, "a>d": [1] * 60}, 60)
    kept = filter_characters(m, min_non_na=50)
    assert [str(k) for k in kept.keys] == ["a>c"]


def test_zeros_dropped_as_na_for_frequencies():
    values = [0.0] * 6 + list(np.linspace(0.1, 0.9, 19))
    m = _matrix(CharacterKind.FORWARD, {"p>a": values}, 30)
    assert filter_characters(m, 20, drop_zeros_as_na=True).n_characters == 0
    assert filter_characters(m, 20, drop_zeros_as_na=False).n_characters == 1


def test_dropped_zeros_become_na_in_output():
    m = _matrix(CharacterKind.FORWARD, {"p>a": [0.0, 0.2, 0.4, 0.6]}, 4)
    kept = filter_characters(m, 3, drop_zeros_as_na=True)
    assert kept.column("p>a").isna().sum() == 1


def test_skew_cut_applies_to_binary_only():
    m = _matrix(CharacterKind.BINARY, {"a>b": [1] * 97 + [0] * 3, "a>c": [1] * 98 + [0] * 2}, 100)
    kept, summary = filter_summary(m, 50, max_skew=0.97)
    assert [str(k) for k in kept.keys] == ["a>b"]
    assert [str(k) for k in summary.too_skewed] == ["a>c"]
    assert summary.n_kept == 1


def test_filter_summary_counts_reasons():
    m = _matrix(CharacterKind.BINARY, {"a>b": [0, 1], "a>c": [1] * 5, "a>d": [0, 1, 0, 1, 1]}, 5)
    kept, summary = filter_summary(m, min_non_na=3)
    assert summary.n_input == 3
    assert [str(k) for k in summary.too_few_values] == ["a>b"]
    assert [str(k) for k in summary.no_variation] == ["a>c"]
    assert kept.n_characters == 1
    assert "1 kept" in summary.describe()


def _quantiles(n):
    return norm.ppf((np.arange(1, n + 1) - 0.5) / n)


def test_tukey_keeps_normal_data():
    values = 2.0 + 0.5 * _quantiles(500)
    _, lam = tukey_normalize(values)
    assert 0.8 <= lam <= 1.2


def test_tukey_recovers_log_for_lognormal_data():
    values = np.exp(0.5 * _quantiles(500))
    out, lam = tukey_normalize(values)
    assert -0.2 <= lam <= 0.2


def test_tukey_preserves_order_and_na():
    rng = np.random.default_rng(4)
    raw = rng.uniform(0.01, 1.0, 40)
    raw[[3, 17]] = np.nan
    series = pd.Series(raw, index=[f"L{i}" for i in range(40)], name="p>a")
    out, _ = tukey_normalize(series)
    assert isinstance(out, pd.Series)
    pd.testing.assert_index_equal(out.index, series.index)
    assert out.isna().tolist() == series.isna().tolist()
    present = series.notna()
    np.testing.assert_array_equal(np.argsort(out[present].to_numpy()), np.argsort(series[present].to_numpy()))


def test_tukey_degenerate_input_falls_back():
    values = np.array([0.5, 0.5, 1.0])
    out, lam = tukey_normalize(values)
    assert lam == 1.0
    np.testing.assert_array_equal(out, values)


def test_tukey_rejects_nonpositive():
    with pytest.raises(CharacterError):
        tukey_normalize(np.array([0.0, 0.2, 0.4, 0.6]))
