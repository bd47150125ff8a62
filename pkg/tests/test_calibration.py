import numpy as np
import pandas as pd
import pytest

import main
from src.calibration import TRAIT_COLUMNS, brownian_grid, calibrate_share, cmd_calibrate, summarize_sweep
from src.config.run_config import RunConfig
from src.errors import InputError
from src.evolve import balanced_tree, simulate_yule_tree

QUIET = ["--log-file", "-", "--no-progress"]


def test_brownian_grid():
    assert brownian_grid(1).tolist() == list(range(101))
    assert brownian_grid(25).tolist() == [0, 25, 50, 75, 100]
    assert brownian_grid(2.5)[1] == 2.5
    for bad in (0, 3, 150):
        with pytest.raises(InputError):
            brownian_grid(bad)


def test_calibrate_share_is_seeded():
    tree = balanced_tree(4)
    a = calibrate_share(tree, 50.0, 5, 19, seed=3, step_idx=2)
    b = calibrate_share(tree, 50.0, 5, 19, seed=3, step_idx=2)
    c = calibrate_share(tree, 50.0, 5, 19, seed=3, step_idx=3)
    assert a == b
    assert [r[2] for r in a] != [r[2] for r in c]
    assert [r[1] for r in a] == list(range(5))


def test_summarize_sweep():
    traits = pd.DataFrame([(0.0, 0, 0.2, 0.5), (0.0, 1, 0.4, 0.01), (100.0, 0, 1.0, 0.001), (100.0, 1, 1.2, 0.002)],
                          columns=TRAIT_COLUMNS)
    sweep = summarize_sweep(traits, 0.05)
    assert sweep["brownian_pct"].tolist() == [0.0, 100.0]
    assert sweep["n_traits"].tolist() == [2, 2]
    assert sweep["mean_k"].tolist() == pytest.approx([0.3, 1.1])
    assert sweep["pct_significant"].tolist() == [50.0, 100.0]


def test_small_sweep_rises_with_brownian_share(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main.main(["calibrate", "--simulate-tips", "40", "--step", "50", "--traits-per-step", "40",
                      "--n-perm", "19", "--seed", "1", "--output", str(out), *QUIET])
    assert code == 0
    sweep = pd.read_csv(out)
    assert sweep["brownian_pct"].tolist() == [0, 50, 100]
    assert sweep["mean_k"].iloc[0] < sweep["mean_k"].iloc[2]
    traits = pd.read_csv(tmp_path / "sweep_traits.csv")
    assert list(traits.columns) == TRAIT_COLUMNS
    assert len(traits) == 3 * 40
    assert (tmp_path / "sweep_tree.nwk").exists()


def test_sweep_is_reproducible(tmp_path):
    tree_path = tmp_path / "tree.nwk"
    tree_path.write_text("(((A:1,B:1):1,(C:1,D:1):1):1,((E:1,F:1):1,(G:1,H:1):1):1);\n")
    args = ["calibrate", "--tree", str(tree_path), "--step", "50", "--traits-per-step", "5", "--n-perm", "19",
            "--seed", "2", *QUIET]
    assert main.main([*args, "--output", str(tmp_path / "a.csv")]) == 0
    assert main.main([*args, "--output", str(tmp_path / "b.csv"), "--workers", "2"]) == 0
    assert (tmp_path / "a_traits.csv").read_bytes() == (tmp_path / "b_traits.csv").read_bytes()
    assert not (tmp_path / "a_tree.nwk").exists()


def test_calibrate_errors(tmp_path):
    config = RunConfig(subcommand="calibrate", simulate_tips=10, output=str(tmp_path / "s.csv"), seed=1,
                       traits_per_step=0)
    with pytest.raises(InputError):
        cmd_calibrate(config)
    assert main.main(["calibrate", "--simulate-tips", "10", "--step", "7", "--seed", "1",
                      "--output", str(tmp_path / "s.csv"), *QUIET]) == 2


def _sweep(tree, shares, n_traits=200, n_perm=1000, seed=5):
    rows = []
    for idx, share in enumerate(shares):
        rows += calibrate_share(tree, float(share), n_traits, n_perm, seed=seed, step_idx=idx)
    return summarize_sweep(pd.DataFrame(rows, columns=TRAIT_COLUMNS), 0.05).set_index("brownian_pct")


@pytest.mark.slow
def test_calibration_sweep_on_birth_tree():
    tree = simulate_yule_tree(111, seed=np.random.SeedSequence(17))
    sweep = _sweep(tree, range(0, 101, 10))
    assert sweep["n_traits"].tolist() == [200] * 11
    assert 0.85 <= sweep.loc[100.0, "mean_k"] <= 1.15
    assert 2.0 <= sweep.loc[0.0, "pct_significant"] <= 9.0
    assert sweep.loc[100.0, "pct_significant"] >= 99.0
    # near-zero pendant edges on the newest cherries let tip noise swamp the contrasts at 70%
    assert 40.0 <= sweep.loc[70.0, "pct_significant"] <= 80.0


@pytest.mark.slow
def test_calibration_detects_high_brownian_shares_on_balanced_tree():
    sweep = _sweep(balanced_tree(7), range(70, 101, 10))
    assert (sweep["pct_significant"] >= 99.0).all()
    assert 0.85 <= sweep.loc[100.0, "mean_k"] <= 1.15
