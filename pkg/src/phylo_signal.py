"""
Phylogenetic Signal Statistics

Key Features:
-------------
- Blomberg's K: observed MSE0/MSE scaled by its Brownian-motion expectation,
  tested by shuffling tip values and comparing PIC variances.
- Fritz & Purvis' D for binary characters: the observed sum of sister
  differences placed between a random-shuffle null (D = 1) and a
  threshold-Brownian null (D = 0), each with its own p-value.
- `classify_d()` maps D and its two p-values onto six outcomes.

p-values are literal fractions of the null draws; `pseudocount=True` switches to
(r + 1) / (n + 1). All tests expect a tree already pruned to the tips that have
data for the character.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve

from src.errors import CharacterError, PolytomyError, SignalError
from src.evolve import (ContrastPlan, make_rng, pic_variance, simulate_bm_batch, split_rng,
                        threshold_binarize_batch)
from src.tree import vcv

logger = logging.getLogger(__name__)

D_MIN_RECOMMENDED = 50


class DClass(str, Enum):
    OVER_CLUMPED = "over-clumped"
    PHYLOGENETIC = "phylogenetic"
    INTERMEDIATE = "intermediate"
    RANDOM = "random"
    OVER_DISPERSED = "over-dispersed"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class KResult:
    key: str
    k: float
    p_value: float
    n_used: int
    n_perm: int
    pic_variance: float

    def significant(self, alpha):
        return self.p_value < alpha


@dataclass(frozen=True)
class DResult:
    key: str
    d: float
    sum_d_obs: float
    mean_sum_d_random: float
    mean_sum_d_brownian: float
    p_d_eq_0: float
    p_d_eq_1: float
    n_used: int
    n_perm: int
    classification: DClass
    alpha: float
    sum_d_random: np.ndarray = field(default=None, repr=False, compare=False)
    sum_d_brownian: np.ndarray = field(default=None, repr=False, compare=False)


def _fraction(count, n, pseudocount):
    return (count + 1) / (n + 1) if pseudocount else count / n


def _aligned_to(values, labels):
    lookup = dict(zip(values.labels, values.values))
    if set(lookup) != set(labels):
        raise CharacterError("tip values and VCV tips differ")
    return np.array([lookup[label] for label in labels])


# --- K ---

def phylo_mean(values, C):
    """GLS mean (1' C^-1 x) / (1' C^-1 1)."""
    x = _aligned_to(values, C.tip_labels)
    factor = C.cho_factor()
    c_inv_one = cho_solve(factor, np.ones(len(x)))
    return float(c_inv_one @ x / c_inv_one.sum())


def _k_statistic(x, C):
    n = len(x)
    factor = C.cho_factor()
    c_inv_one = cho_solve(factor, np.ones(n))
    a_hat = c_inv_one @ x / c_inv_one.sum()
    resid = x - a_hat
    mse0 = resid @ resid / (n - 1)
    mse = resid @ cho_solve(factor, resid) / (n - 1)
    observed = mse0 / mse
    expected = (np.trace(C.matrix) - n / c_inv_one.sum()) / (n - 1)
    return float(observed / expected)


def _check_continuous(x):
    if len(x) < 2:
        raise CharacterError("K needs at least 2 tips with data")
    if np.ptp(x) == 0:
        raise CharacterError("K is undefined for constant values")


def blomberg_k(tree, values):
    x = values.aligned(tree)
    _check_continuous(x)
    return _k_statistic(x, vcv(tree))


def k_permutation_test(tree, values, n_perm, seed, key="", pseudocount=False):
    if n_perm < 1:
        raise SignalError("n_perm must be at least 1")
    x = values.aligned(tree)
    _check_continuous(x)
    plan = ContrastPlan(tree)
    k = _k_statistic(x, vcv(tree))
    observed = float(pic_variance(plan.contrasts(x)))

    rng = make_rng(seed)
    shuffled = rng.permuted(np.tile(x, (n_perm, 1)), axis=1)
    null = pic_variance(plan.contrasts(shuffled))
    p = _fraction(int((null <= observed).sum()), n_perm, pseudocount)
    return KResult(key=key, k=k, p_value=float(p), n_used=len(x), n_perm=n_perm, pic_variance=observed)


# --- D ---

class DifferencePlan:
    """Bottom-up sister differences: d = |v1 - v2|, node value = (v1 + v2) / 2."""

    def __init__(self, tree):
        if not tree.is_bifurcating():
            raise PolytomyError("D needs a fully bifurcating tree")
        self.n_tips = tree.n_tips
        row = {node: i for i, node in enumerate(tree.tips)}
        steps = []
        next_row = tree.n_tips
        for node in tree.postorder():
            kids = tree.children[node]
            if len(kids) == 1:
                row[node] = row[kids[0]]
            elif len(kids) == 2:
                steps.append((row[kids[0]], row[kids[1]], next_row))
                row[node] = next_row
                next_row += 1
        self._steps = steps
        self._n_rows = next_row

    def sum_of_differences(self, values):
        x = np.asarray(values, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        rows = np.empty((self._n_rows, x.shape[0]))
        rows[:self.n_tips] = x.T
        total = np.zeros(x.shape[0])
        for r1, r2, target in self._steps:
            total += np.abs(rows[r1] - rows[r2])
            rows[target] = (rows[r1] + rows[r2]) / 2
        return float(total[0]) if single else total


def _check_binary(x):
    if not np.isin(x, (0.0, 1.0)).all():
        raise CharacterError("D needs binary (0/1) values")


def sum_of_differences(tree, values):
    x = values.aligned(tree)
    _check_binary(x)
    return DifferencePlan(tree).sum_of_differences(x)


def _tail_p(null, observed, side, n_perm, pseudocount, two_sided):
    if two_sided:
        lo = int((null <= observed).sum())
        hi = int((null >= observed).sum())
        return min(1.0, 2 * _fraction(min(lo, hi), n_perm, pseudocount))
    count = int((null < observed).sum()) if side == "lower" else int((null > observed).sum())
    return _fraction(count, n_perm, pseudocount)


def fritz_purvis_d(tree, values, n_perm, seed, key="", alpha=0.025, min_recommended=D_MIN_RECOMMENDED,
                   pseudocount=False, two_sided=False):
    if n_perm < 1:
        raise SignalError("n_perm must be at least 1")
    x = values.aligned(tree)
    _check_binary(x)
    n_ones = int(x.sum())
    if n_ones in (0, len(x)):
        raise CharacterError("D needs at least one 1 and one 0")
    plan = DifferencePlan(tree)
    if len(x) < min_recommended:
        logger.warning(f"D for {key or 'character'} on {len(x)} tips: below the recommended {min_recommended}")

    rng_random, rng_brownian = split_rng(seed, 2)
    observed = plan.sum_of_differences(x)
    shuffled = rng_random.permuted(np.tile(x, (n_perm, 1)), axis=1)
    sum_d_random = plan.sum_of_differences(shuffled)
    sims = simulate_bm_batch(tree, n_perm, 1.0, 0.0, rng_brownian)
    sum_d_brownian = plan.sum_of_differences(threshold_binarize_batch(sims, n_ones))

    mean_r = float(sum_d_random.mean())
    mean_b = float(sum_d_brownian.mean())
    spread = mean_r - mean_b
    if spread == 0:
        raise SignalError(f"D undefined for {key or 'character'}: random and Brownian nulls have equal means")
    d = (observed - mean_b) / spread
    d_random = (sum_d_random - mean_b) / spread
    d_brownian = (sum_d_brownian - mean_b) / spread
    p1 = _tail_p(d_random, d, "lower", n_perm, pseudocount, two_sided)
    p0 = _tail_p(d_brownian, d, "upper", n_perm, pseudocount, two_sided)

    result = DResult(key=key, d=float(d), sum_d_obs=float(observed), mean_sum_d_random=mean_r,
                     mean_sum_d_brownian=mean_b, p_d_eq_0=float(p0), p_d_eq_1=float(p1), n_used=len(x),
                     n_perm=n_perm, classification=DClass.INDETERMINATE, alpha=alpha,
                     sum_d_random=sum_d_random, sum_d_brownian=sum_d_brownian)
    return replace(result, classification=classify_d(result, alpha))


def _null_share(result, null, side):
    """Share of a retained null at or beyond the observed D; 1.0 when the null was not kept."""
    if null is None or len(null) == 0:
        return 1.0
    spread = result.mean_sum_d_random - result.mean_sum_d_brownian
    d_null = (np.asarray(null, dtype=float) - result.mean_sum_d_brownian) / spread
    hits = d_null <= result.d if side == "lower" else d_null >= result.d
    return float(hits.mean())


def classify_d(result, alpha=0.025):
    """
    Over-clumped and over-dispersed need the observed D past the far side of
    the Brownian (below 0) or shuffled (above 1) null; the stored p-values only
    test the near sides.
    """
    from_zero = result.p_d_eq_0 < alpha
    from_one = result.p_d_eq_1 < alpha
    if from_one and _null_share(result, result.sum_d_brownian, "lower") < alpha:
        return DClass.OVER_CLUMPED
    if from_zero and _null_share(result, result.sum_d_random, "upper") < alpha:
        return DClass.OVER_DISPERSED
    if from_zero and from_one:
        return DClass.INTERMEDIATE
    if from_one:
        return DClass.PHYLOGENETIC
    if from_zero:
        return DClass.RANDOM
    return DClass.INDETERMINATE
