import numpy as np
import pytest

from src.errors import PolytomyError, TreeError
from src.evolve import (ContrastPlan, TipValues, balanced_tree, derive_rng, pic, pic_variance, simulate_bm,
                        simulate_bm_batch, simulate_mixed, simulate_yule_tree, split_rng, threshold_binarize,
                        threshold_binarize_batch)
from src.tree import parse_newick, vcv


def test_zero_length_branches_give_root_value():
    tree = parse_newick("((A:0,B:0):0,C:0);")
    values = simulate_bm(tree, root_value=3.0, seed=1)
    np.testing.assert_array_equal(values.values, [3.0, 3.0, 3.0])


def test_bm_tip_variances():
    tree = parse_newick("(A:1,B:4);")
    sims = simulate_bm_batch(tree, 10_000, seed=2)
    assert sims.shape == (10_000, 2)
    var = sims.var(axis=0, ddof=1)
    assert var[0] == pytest.approx(1.0, rel=0.1)
    assert var[1] == pytest.approx(4.0, rel=0.1)


def test_bm_covariance_follows_vcv(textbook_tree):
    sims = simulate_bm_batch(textbook_tree, 10_000, sigma2=2.0, seed=3)
    expected = 2.0 * vcv(textbook_tree).matrix
    observed = np.cov(sims, rowvar=False)
    big = expected > 0.1 * expected.max()
    np.testing.assert_allclose(observed[big], expected[big], rtol=0.1)


def test_simulation_is_seeded(yule_tree):
    a = simulate_bm(yule_tree, seed=42).values
    b = simulate_bm(yule_tree, seed=42).values
    c = simulate_bm(yule_tree, seed=43).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_mixed_traits_are_standardized(yule_tree):
    for p in (0.0, 0.5, 1.0):
        z = simulate_mixed(yule_tree, p, seed=5).values
        assert z.mean() == pytest.approx(0.0, abs=1e-12)
    pure = simulate_mixed(yule_tree, 1.0, seed=5).values
    assert pure.std(ddof=1) == pytest.approx(1.0)


def test_pure_brownian_mix_ranks_like_the_bm_draw(yule_tree):
    rng = np.random.default_rng(9)
    bm = simulate_bm_batch(yule_tree, 1, 1.0, 0.0, np.random.default_rng(9))[0]
    z = simulate_mixed(yule_tree, 1.0, rng).values
    np.testing.assert_array_equal(np.argsort(z), np.argsort(bm))


def test_mixed_rejects_bad_share(yule_tree):
    with pytest.raises(ValueError):
        simulate_mixed(yule_tree, 1.5, seed=1)


def test_threshold_binarize():
    labels = ("A", "B", "C")
    assert threshold_binarize(TipValues(labels, [0.1, 0.5, 0.9]), 1).values.tolist() == [0, 0, 1]
    assert threshold_binarize(TipValues(labels, [0.1, 0.5, 0.9]), 0).values.tolist() == [0, 0, 0]
    tied = TipValues(("A", "B", "C", "D"), [3.0, 1.0, 2.0, 2.0])
    assert threshold_binarize(tied, 2).values.tolist() == [1, 0, 1, 0]


def test_threshold_binarize_batch_counts_ones():
    sims = np.random.default_rng(0).normal(size=(50, 12))
    binary = threshold_binarize_batch(sims, 5)
    assert (binary.sum(axis=1) == 5).all()
    single = threshold_binarize(TipValues(tuple("ABCDEFGHIJKL"), sims[7]), 5).values
    np.testing.assert_array_equal(binary[7], single)


def test_two_tip_contrast():
    tree = parse_newick("(A:1,B:1);")
    c = pic(tree, TipValues(("A", "B"), [3.0, 1.0]))
    assert len(c) == 1
    assert c.values[0] == pytest.approx(1.41421356237, abs=1e-9)
    assert pic_variance(c) == pytest.approx(2.0)


def test_equal_values_give_zero_contrasts(yule_tree):
    values = TipValues(yule_tree.tip_labels, np.full(yule_tree.n_tips, 0.7))
    c = pic(yule_tree, values)
    assert len(c) == yule_tree.n_tips - 1
    assert np.allclose(c.values, 0.0)
    assert pic_variance(c) == pytest.approx(0.0)


def test_contrasts_match_gls_oracle():
    tree = parse_newick("((A:1,B:2):0.5,(C:1.5,D:0.3):1);")
    x = np.array([0.3, -1.2, 2.5, 0.8])
    c = pic(tree, TipValues(tree.tip_labels, x)).values
    C_inv = np.linalg.inv(vcv(tree).matrix)
    ones = np.ones(4)
    a_hat = ones @ C_inv @ x / (ones @ C_inv @ ones)
    r = x - a_hat
    assert np.sum(c ** 2) == pytest.approx(r @ C_inv @ r, rel=1e-9)


def test_contrast_plan_batches_match_single_runs(yule_tree):
    plan = ContrastPlan(yule_tree)
    batch = np.random.default_rng(1).normal(size=(5, yule_tree.n_tips))
    out = plan.contrasts(batch)
    assert out.shape == (5, plan.n_contrasts)
    for row, values in zip(out, batch):
        np.testing.assert_allclose(row, plan.contrasts(values))


def test_contrast_errors():
    with pytest.raises(PolytomyError):
        ContrastPlan(parse_newick("(A:1,B:1,C:1);"))
    with pytest.raises(TreeError):
        ContrastPlan(parse_newick("((A:0,B:0):1,C:1);"))
    one_zero = pic(parse_newick("(A:0,B:1);"), TipValues(("A", "B"), [1.0, 0.0]))
    assert np.isfinite(one_zero.values).all()


def test_random_streams():
    a = derive_rng(5, 1, 2).random(3)
    b = derive_rng(5, 1, 2).random(3)
    c = derive_rng(5, 2, 1).random(3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    first, second = split_rng(5, 2)
    assert not np.array_equal(first.random(3), second.random(3))


def test_yule_tree_is_ultrametric():
    tree = simulate_yule_tree(25, seed=4)
    assert tree.n_tips == 25
    assert tree.is_bifurcating()
    depths = [tree.depths[t] for t in tree.tips]
    np.testing.assert_allclose(depths, depths[0])


def test_balanced_tree():
    tree = balanced_tree(6)
    assert tree.n_tips == 64
    assert tree.is_bifurcating()
    assert np.diag(vcv(tree).matrix).tolist() == [6.0] * 64


@pytest.mark.slow
def test_bm_contrasts_are_uncorrelated():
    tree = balanced_tree(3)
    plan = ContrastPlan(tree)
    contrasts = plan.contrasts(simulate_bm_batch(tree, 1000, seed=8))
    corr = np.corrcoef(contrasts, rowvar=False)
    off = corr[~np.eye(plan.n_contrasts, dtype=bool)]
    assert np.mean(np.abs(off)) < 0.05
