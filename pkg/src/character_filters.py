"""
Character filtering, skew and normalization.

- `filter_characters()` applies the testing thresholds: minimum non-NA count,
  at least two distinct values, zeros-as-NA for frequency characters, and an
  optional skew cut for binary characters.
- `skew()` is the share of the majority value in a binary column.
- `tukey_normalize()` picks the Tukey ladder power whose transform maximizes the
  Shapiro-Wilk W statistic.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import shapiro

from src.data_loaders.data_processor import CharacterMatrix
from src.errors import CharacterError

logger = logging.getLogger(__name__)

LAMBDA_GRID = np.round(np.arange(-60, 61) * 0.05, 2)


@dataclass
class FilterSummary:
    n_input: int = 0
    too_few_values: list = field(default_factory=list)
    no_variation: list = field(default_factory=list)
    too_skewed: list = field(default_factory=list)

    @property
    def n_kept(self):
        return self.n_input - len(self.too_few_values) - len(self.no_variation) - len(self.too_skewed)

    def describe(self):
        return (f"{self.n_input} characters in, {self.n_kept} kept; dropped: "
                f"{len(self.too_few_values)} below the non-NA minimum, "
                f"{len(self.no_variation)} without variation, "
                f"{len(self.too_skewed)} over the skew cut")


def filter_summary(matrix, min_non_na, require_variation=True, drop_zeros_as_na=False, max_skew=None):
    """Filter a matrix and report why each dropped character went."""
    values = matrix.values
    if drop_zeros_as_na and matrix.kind.is_frequency:
        values = values.mask(values == 0)

    summary = FilterSummary(n_input=matrix.n_characters)
    kept = []
    for key in matrix.keys:
        col = values[str(key)].dropna()
        if len(col) < min_non_na:
            summary.too_few_values.append(key)
        elif require_variation and col.nunique() < 2:
            summary.no_variation.append(key)
        elif max_skew is not None and not matrix.kind.is_frequency and skew(col) > max_skew:
            summary.too_skewed.append(key)
        else:
            kept.append(key)

    filtered = CharacterMatrix(matrix.kind, tuple(kept), values[[str(k) for k in kept]])
    logger.info(f"Filter ({matrix.kind.value}): {summary.describe()}")
    return filtered, summary


def filter_characters(matrix, min_non_na, require_variation=True, drop_zeros_as_na=False, max_skew=None):
    filtered, _ = filter_summary(matrix, min_non_na, require_variation, drop_zeros_as_na, max_skew)
    return filtered


def skew(values):
    arr = np.asarray(values, dtype=float)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        raise CharacterError("skew of an all-NA column")
    if not np.isin(arr, (0.0, 1.0)).all():
        raise CharacterError("skew is defined for binary columns only")
    ones = int((arr == 1).sum())
    return max(ones, arr.size - ones) / arr.size


def ladder_transform(x, lam):
    # sign flip for negative powers keeps the transform increasing
    if lam == 0:
        return np.log(x)
    if lam > 0:
        return np.power(x, lam)
    return -np.power(x, lam)


def tukey_normalize(values):
    """
    Returns (transformed values, lambda). NA positions are preserved and a
    pandas Series comes back as a Series with the same index.
    """
    is_series = isinstance(values, pd.Series)
    arr = np.asarray(values, dtype=float)
    mask = ~np.isnan(arr)
    x = arr[mask]
    if (x <= 0).any():
        raise CharacterError("Tukey ladder needs strictly positive values")
    if np.unique(x).size <= 2:
        logger.warning("Tukey ladder: fewer than 3 distinct values, keeping lambda = 1")
        return (values.copy() if is_series else arr.copy()), 1.0

    best = None
    for lam in LAMBDA_GRID:
        transformed = ladder_transform(x, lam)
        if not np.isfinite(transformed).all() or np.ptp(transformed) == 0:
            continue
        w = shapiro(transformed).statistic
        rank = (-w, abs(lam - 1.0))
        if best is None or rank < best[0]:
            best = (rank, float(lam))
    if best is None:
        raise CharacterError("no finite ladder transform for this column")
    lam = best[1]

    out = arr.copy()
    out[mask] = ladder_transform(x, lam)
    if is_series:
        out = pd.Series(out, index=values.index, name=values.name)
    return out, lam
