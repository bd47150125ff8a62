"""
Calibration sweep for Blomberg's K (the `calibrate` subcommand).

For each Brownian share on the grid 0, step, ..., 100 percent, `traits_per_step`
traits are simulated with `simulate_mixed` on the reference tree and each is
K-tested. The sweep table (one row per share) and the per-trait table are both
plot-ready.
"""

import logging
import math
import os

import numpy as np
import pandas as pd

from src.data_loaders.data_loader import load_tree, write_table
from src.errors import InputError, PolytomyError
from src.evolve import derive_rng, derive_seed, simulate_mixed, simulate_yule_tree, split_rng
from src.jobs import run_jobs
from src.phylo_signal import k_permutation_test
from src.pipeline import require_flags, sidecar_path
from src.tree import write_newick

logger = logging.getLogger(__name__)

TRAIT_COLUMNS = ["brownian_pct", "trait", "k", "p_value"]


def brownian_grid(step):
    if not 0 < step <= 100:
        raise InputError("--step must lie in (0, 100]")
    n = round(100 / step)
    if not math.isclose(n * step, 100.0, abs_tol=1e-9):
        raise InputError(f"--step {step} does not divide 100")
    return np.linspace(0.0, 100.0, n + 1)


def calibrate_share(tree, brownian_pct, n_traits, n_perm, seed, step_idx):
    rows = []
    for trait in range(n_traits):
        trait_rng, perm_rng = split_rng(derive_seed(seed, 1, step_idx, trait), 2)
        values = simulate_mixed(tree, brownian_pct / 100.0, trait_rng)
        res = k_permutation_test(tree, values, n_perm, perm_rng)
        rows.append((brownian_pct, trait, res.k, res.p_value))
    return rows


def summarize_sweep(traits, alpha):
    flagged = traits.assign(significant=traits["p_value"] < alpha)
    sweep = (flagged.groupby("brownian_pct", sort=True)
             .agg(n_traits=("k", "size"), mean_k=("k", "mean"), sd_k=("k", "std"),
                  pct_significant=("significant", "mean"))
             .reset_index())
    sweep["pct_significant"] *= 100.0
    return sweep


def cmd_calibrate(config):
    require_flags(config, output="--output")
    if not config.tree and not config.simulate_tips:
        raise InputError("'calibrate' needs --tree or --simulate-tips")
    if config.traits_per_step < 1:
        raise InputError("--traits-per-step must be at least 1")
    seed = config.require_seed()
    grid = brownian_grid(config.calibration_step)

    if config.tree:
        tree = load_tree(config.tree, config.default_length)
    else:
        tree = simulate_yule_tree(config.simulate_tips, seed=derive_rng(seed, 0))
        logger.info(f"Simulated a {tree.n_tips}-tip Yule tree")
    if not tree.is_bifurcating():
        raise PolytomyError("calibration needs a fully bifurcating tree")
    logger.info(f"calibrate: {len(grid)} shares x {config.traits_per_step} traits, n_perm={config.n_perm}, seed={seed}")

    jobs = [(tree, float(pct), config.traits_per_step, config.n_perm, seed, i) for i, pct in enumerate(grid)]
    chunks = run_jobs(calibrate_share, jobs, workers=config.workers, desc="calibration", progress=config.progress)
    traits = pd.DataFrame([row for rows in chunks for row in rows], columns=TRAIT_COLUMNS)
    sweep = summarize_sweep(traits, config.alpha)

    write_table(sweep, config.output, config.full_precision)
    write_table(traits, sidecar_path(config.output, "traits"), config.full_precision)
    if not config.tree:
        tree_path = f"{os.path.splitext(config.output)[0]}_tree.nwk"
        with open(tree_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(write_newick(tree) + "\n")
    for row in sweep.itertuples(index=False):
        logger.info(f"  {row.brownian_pct:5.1f}% Brownian: mean K {row.mean_k:.3f}, "
                    f"{row.pct_significant:.1f}% significant")
    return sweep
