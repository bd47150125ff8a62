"""
Extraction, Signal Testing and Robustness Runs

Main Workflow:
--------------
1. `cmd_extract()`    – wordlists (+ class map) → character CSVs and a manifest
2. `cmd_signal()`     – character CSV + tree → one K or D row per character and a summary
3. `cmd_robustness()` – rerun K over a set of posterior trees, or over a subset
                        of the doculects ranked by wordlist size

Every character gets its own random stream derived from the run seed and the
character's position, so results do not depend on the worker count.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.character_filters import filter_summary, skew, tukey_normalize
from src.comparison_stats import exact_mean, pearson_r, summarize, welch_t
from src.config.run_config import SubsetMode
from src.data_loaders.data_loader import (load_character_matrix, load_class_maps, load_tip_map, load_tree,
                                          load_tree_dir, load_wordlists, write_character_matrix, write_manifest,
                                          write_table)
from src.data_loaders.data_processor import (CharacterKind, CharacterMatrix, backward_transition_matrix,
                                             binary_biphone_matrix, class_transition_matrix,
                                             forward_transition_matrix, inventory)
from src.errors import CharacterError, ClassMapError, EmptyResultError, InputError, PhonosignalError, PolytomyError
from src.evolve import TipValues, derive_seed
from src.jobs import run_jobs
from src.phylo_signal import DClass, fritz_purvis_d, k_permutation_test
from src.tree import prune_to_tips

logger = logging.getLogger(__name__)

EXTRACT_MODES = ("binary", "fwd", "bwd", "class-fwd", "class-bwd")

K_COLUMNS = ["key", "n_used", "k", "p_value", "significant", "pic_variance", "lambda", "error"]
D_COLUMNS = ["key", "n_used", "d", "p_d_eq_0", "p_d_eq_1", "classification", "significant", "skew",
             "sum_d_obs", "mean_sum_d_random", "mean_sum_d_brownian", "error"]


def require_flags(config, **flags):
    for attr, flag in flags.items():
        if not getattr(config, attr):
            raise InputError(f"'{config.subcommand}' needs {flag}")


def sidecar_path(output, suffix):
    return f"{os.path.splitext(output)[0]}_{suffix}.csv"


# --- Extraction ---

def _check_modes(modes, schemes):
    unknown = sorted(set(modes) - set(EXTRACT_MODES))
    if unknown:
        raise InputError(f"unknown extraction mode(s): {', '.join(unknown)}")
    if not modes:
        raise InputError("no extraction modes requested")


def extract_matrices(doculects, modes, schemes=(), class_maps=None):
    """Matrices keyed by output name (`binary`, `fwd`, `class-fwd-place`, ...), in a fixed order."""
    matrices = {}
    for mode in EXTRACT_MODES:
        if mode not in modes:
            continue
        if mode == "binary":
            matrices[mode] = binary_biphone_matrix(doculects)
        elif mode == "fwd":
            matrices[mode] = forward_transition_matrix(doculects)
        elif mode == "bwd":
            matrices[mode] = backward_transition_matrix(doculects)
        else:
            direction = mode.split("-")[1]
            for scheme in schemes:
                matrices[f"{mode}-{scheme}"] = class_transition_matrix(doculects, class_maps[scheme], direction)
    return matrices


def build_manifest(doculects, matrices):
    sizes = np.array([d.n_forms for d in doculects], dtype=float)
    lengths = np.array([d.mean_form_length() for d in doculects])
    size_stats = summarize(sizes)
    try:
        corr = pearson_r(sizes, lengths)
        r, p = corr.r, corr.p
    except CharacterError as e:
        logger.info(f"Wordlist size vs mean form length: {e}")
        r, p = float("nan"), float("nan")
    return {
        "n_doculects": len(doculects),
        "forms_per_doculect": {"mean": size_stats.mean, "sd": size_stats.sd,
                               "min": int(sizes.min()), "max": int(sizes.max())},
        "size_vs_mean_form_length": {"pearson_r": r, "p": p},
        "characters": {f"{name}.csv": m.n_characters for name, m in matrices.items()},
        "doculects": [{"id": d.id, "n_forms": d.n_forms, "inventory_size": len(inventory(d)),
                       "mean_form_length": d.mean_form_length()} for d in doculects],
    }


def cmd_extract(config):
    require_flags(config, wordlist="--wordlist", output="--output")
    _check_modes(config.modes, config.schemes)
    logger.info(f"extract: {config.wordlist} -> {config.output} (modes {', '.join(config.modes)})")

    doculects = load_wordlists(config.wordlist)
    class_modes = [m for m in config.modes if m.startswith("class-")]
    class_maps = None
    if class_modes:
        if not config.classmap:
            raise InputError(f"mode(s) {', '.join(class_modes)} need --classmap")
        class_maps = load_class_maps(config.classmap, config.schemes)
        for scheme in config.schemes:
            try:
                class_maps[scheme].check_total(doculects)
            except ClassMapError as e:
                raise ClassMapError(str(e), path=config.classmap) from None

    matrices = extract_matrices(doculects, config.modes, config.schemes, class_maps)
    manifest = build_manifest(doculects, matrices)

    os.makedirs(config.output, exist_ok=True)
    for name, matrix in matrices.items():
        write_character_matrix(matrix, os.path.join(config.output, f"{name}.csv"))
    write_manifest(manifest, os.path.join(config.output, "manifest.json"))
    logger.info(f"extract: wrote {len(matrices)} matrices for {len(doculects)} doculects")
    return matrices


# --- Signal testing ---

@dataclass(frozen=True)
class SignalSettings:
    statistic: str
    n_perm: int
    alpha: float
    pseudocount: bool = False
    two_sided: bool = False

    @classmethod
    def from_config(cls, config, statistic):
        return cls(statistic, config.n_perm, config.alpha, config.pseudocount, config.two_sided_d)

    @property
    def d_alpha(self):
        return self.alpha / 2


def resolve_statistic(requested, kind):
    if requested == "auto":
        return "D" if kind is CharacterKind.BINARY else "K"
    if requested == "D" and kind is not CharacterKind.BINARY:
        raise InputError("D needs a binary character matrix")
    if requested not in ("K", "D"):
        raise InputError(f"unknown statistic {requested!r}")
    return requested


def filter_for(matrix, statistic, config):
    if statistic == "D":
        return filter_summary(matrix, config.min_non_na_for("D"), require_variation=True, max_skew=config.max_skew)
    return filter_summary(matrix, config.min_non_na_for("K"), require_variation=True, drop_zeros_as_na=True)


def match_to_tree(matrix, tree, tip_map=None):
    """Rename doculects through the tip map and keep those that are tree tips."""
    if tip_map:
        renamed = [tip_map.get(d, d) for d in matrix.doculects]
        if len(set(renamed)) != len(renamed):
            raise InputError("tip map sends two doculects to the same tip")
        values = matrix.values.copy()
        values.index = pd.Index(renamed, name="doculect")
        matrix = CharacterMatrix(matrix.kind, matrix.keys, values)
    on_tree = [d for d in matrix.doculects if d in tree.tip_index]
    absent = [d for d in matrix.doculects if d not in tree.tip_index]
    if absent:
        logger.warning(f"{len(absent)} doculect(s) are not tree tips and are ignored: {', '.join(absent[:10])}"
                       f"{' ...' if len(absent) > 10 else ''}")
    if len(on_tree) < 2:
        raise InputError(f"only {len(on_tree)} doculect(s) match tree tips")
    return matrix.subset_doculects(on_tree)


def normalize_columns(values):
    """Tukey-normalize every column; returns (frame, lambdas)."""
    out, lambdas = {}, []
    for name in values.columns:
        out[name], lam = tukey_normalize(values[name])
        lambdas.append(lam)
    return pd.DataFrame(out, index=values.index), lambdas


def signal_for_character(key, column, tree, settings, seed):
    """Prune the tree to the character's non-NA tips and run K or D; failures return a row with `error` set."""
    row = {"key": key, "n_used": int(column.notna().sum()), "error": ""}
    try:
        values = TipValues.from_series(column)
        pruned = prune_to_tips(tree, values.labels)
        if settings.statistic == "K":
            res = k_permutation_test(pruned, values, settings.n_perm, seed, key=key,
                                     pseudocount=settings.pseudocount)
            row.update(k=res.k, p_value=res.p_value, significant=res.significant(settings.alpha),
                       pic_variance=res.pic_variance)
        else:
            res = fritz_purvis_d(pruned, values, settings.n_perm, seed, key=key, alpha=settings.d_alpha,
                                 pseudocount=settings.pseudocount, two_sided=settings.two_sided)
            row.update(d=res.d, p_d_eq_0=res.p_d_eq_0, p_d_eq_1=res.p_d_eq_1,
                       classification=res.classification.value, significant=res.p_d_eq_1 < settings.d_alpha,
                       sum_d_obs=res.sum_d_obs, mean_sum_d_random=res.mean_sum_d_random,
                       mean_sum_d_brownian=res.mean_sum_d_brownian)
        row["n_used"] = res.n_used
    except PhonosignalError as e:
        row["error"] = str(e)
    return row


def run_signal_batch(tree, values, settings, seed, prefix=(), workers=1, progress=True, desc=None):
    """One job per column of `values` (doculects x characters); seeds derive from (seed, *prefix, column index)."""
    jobs = [(str(key), values[key], tree, settings, derive_seed(seed, *prefix, i))
            for i, key in enumerate(values.columns)]
    rows = run_jobs(signal_for_character, jobs, workers=workers, desc=desc or f"{settings.statistic} tests",
                    progress=progress)
    frame = pd.DataFrame(rows, columns=K_COLUMNS if settings.statistic == "K" else D_COLUMNS)
    failed = frame[frame["error"] != ""]
    for key, error in zip(failed["key"], failed["error"]):
        logger.warning(f"{key}: not tested ({error})")
    return frame


def _ok(frame):
    return frame[frame["error"] == ""]


def signal_summary(results, settings, filters=None):
    ok = _ok(results)
    column = "k" if settings.statistic == "K" else "d"
    row = {"statistic": settings.statistic,
           "n_input": filters.n_input if filters else len(results),
           "n_dropped_too_few": len(filters.too_few_values) if filters else 0,
           "n_dropped_no_variation": len(filters.no_variation) if filters else 0,
           "n_dropped_skewed": len(filters.too_skewed) if filters else 0,
           "n_tested": len(ok),
           "n_failed": len(results) - len(ok)}
    if len(ok):
        stats = summarize(ok[column].to_numpy(dtype=float))
        row.update(mean=stats.mean, sd=stats.sd, kurtosis=stats.kurtosis,
                   pct_significant=100.0 * ok["significant"].astype(bool).mean())
    else:
        row.update(mean=np.nan, sd=np.nan, kurtosis=np.nan, pct_significant=np.nan)
    if settings.statistic == "D":
        for cls in DClass:
            row[f"n_{cls.value.replace('-', '_')}"] = int((ok["classification"] == cls.value).sum())
    return pd.DataFrame([row])


def cmd_signal(config):
    require_flags(config, tree="--tree", characters="--characters", output="--output")
    seed = config.require_seed()
    matrix = load_character_matrix(config.characters, config.kind)
    statistic = resolve_statistic(config.statistic, matrix.kind)
    tree = load_tree(config.tree, config.default_length)
    if not tree.is_bifurcating():
        raise PolytomyError(f"{config.tree}: signal tests need a fully bifurcating tree")
    tip_map = load_tip_map(config.tip_map) if config.tip_map else None
    logger.info(f"signal: {statistic} on {config.characters} against {config.tree} "
                f"(n_perm={config.n_perm}, alpha={config.alpha}, seed={seed}, workers={config.workers})")

    matrix = match_to_tree(matrix, tree, tip_map)
    filtered, filters = filter_for(matrix, statistic, config)
    if filtered.n_characters == 0:
        raise EmptyResultError(f"no characters pass the filters: {filters.describe()}")

    values, lambdas = filtered.values, None
    if config.normalize:
        if statistic == "D":
            logger.warning("--normalize applies to K only; ignored for D")
        else:
            values, lambdas = normalize_columns(values)

    settings = SignalSettings.from_config(config, statistic)
    results = run_signal_batch(tree, values, settings, seed, workers=config.workers, progress=config.progress)
    if statistic == "D":
        results["skew"] = [skew(filtered.column(k)) for k in filtered.keys]
    if lambdas is not None:
        results["lambda"] = lambdas

    summary = signal_summary(results, settings, filters)
    write_table(results, config.output, config.full_precision)
    write_table(summary, sidecar_path(config.output, "summary"), config.full_precision)
    logger.info(f"signal summary: {summary.iloc[0].to_dict()}")
    return results, summary


# --- Robustness ---

def _k_summary(ok):
    k = ok["k"].to_numpy(dtype=float)
    if not len(k):
        return {"n_characters": 0, "mean_k": np.nan, "sd_k": np.nan, "pct_significant": np.nan}
    return {"n_characters": len(k), "mean_k": exact_mean(k), "sd_k": summarize(k).sd,
            "pct_significant": 100.0 * ok["significant"].astype(bool).mean()}


def _welch_row(label_a, a, label_b, b):
    res = welch_t(a, b)
    return {"group_a": label_a, "group_b": label_b, "n_a": len(a), "n_b": len(b), **res._asdict()}


def _k_on_tree(tree, matrix, config, seed, prefix, tip_map, desc):
    if not tree.is_bifurcating():
        raise PolytomyError(f"{desc}: K needs a fully bifurcating tree")
    matched = match_to_tree(matrix, tree, tip_map)
    filtered, filters = filter_for(matched, "K", config)
    if filtered.n_characters == 0:
        raise EmptyResultError(f"{desc}: no characters pass the filters: {filters.describe()}")
    settings = SignalSettings.from_config(config, "K")
    return _ok(run_signal_batch(tree, filtered.values, settings, seed, prefix=prefix, workers=config.workers,
                                progress=config.progress, desc=desc))


def select_subset(doculects, mode):
    """Rank by form count (ties by id) and select per subset mode."""
    mode = SubsetMode(mode)
    ranked = sorted(doculects, key=lambda d: (d.n_forms, d.id))
    if mode is SubsetMode.EVERY_SECOND:
        return ranked[::2]
    if mode is SubsetMode.MIDDLE_50:
        lo, hi = np.percentile([d.n_forms for d in ranked], [25, 75])
        return [d for d in ranked if lo <= d.n_forms <= hi]
    return ranked


def _posterior_robustness(config, seed):
    require_flags(config, characters="--characters", output="--output")
    trees = load_tree_dir(config.tree_dir, config.default_length)
    reference = load_tree(config.reference_tree, config.default_length) if config.reference_tree else None
    matrix = load_character_matrix(config.characters, config.kind)
    tip_map = load_tip_map(config.tip_map) if config.tip_map else None
    logger.info(f"robustness: K over {len(trees)} trees from {config.tree_dir} (n_perm={config.n_perm}, seed={seed})")

    rows, pooled = [], []
    for idx, (name, tree) in enumerate(trees):
        ok = _k_on_tree(tree, matrix, config, seed, (idx,), tip_map, name)
        rows.append({"tree": name, **_k_summary(ok)})
        pooled.append(ok)
    pooled = pd.concat(pooled, ignore_index=True)
    rows.append({"tree": "pooled", **_k_summary(pooled)})

    welch_rows = []
    if reference is not None:
        ref = _k_on_tree(reference, matrix, config, seed, (len(trees),), tip_map, "reference")
        rows.append({"tree": f"reference:{os.path.basename(config.reference_tree)}", **_k_summary(ref)})
        welch_rows.append(_welch_row("pooled", pooled["k"].to_numpy(), "reference", ref["k"].to_numpy()))

    table = pd.DataFrame(rows)
    write_table(table, config.output, config.full_precision)
    if welch_rows:
        write_table(pd.DataFrame(welch_rows), sidecar_path(config.output, "welch"), config.full_precision)
    logger.info(f"robustness pooled: {rows[len(trees)]}")
    return table


def _subset_robustness(config, seed):
    require_flags(config, wordlist="--wordlist", tree="--tree", output="--output")
    doculects = load_wordlists(config.wordlist)
    tree = load_tree(config.tree, config.default_length)
    tip_map = load_tip_map(config.tip_map) if config.tip_map else None
    subset = select_subset(doculects, config.subset)
    minimum = config.min_non_na_for("K")
    if len(subset) < minimum:
        raise InputError(f"{config.subset.value} subset keeps {len(subset)} doculects, below the minimum of {minimum}")
    modes = [m for m in ("fwd", "bwd") if m in config.modes] or ["fwd"]
    logger.info(f"robustness: {config.subset.value} subset keeps {len(subset)} of {len(doculects)} doculects")

    rows, welch_rows = [], []
    datasets = (("full", doculects), (config.subset.value, subset))
    for m_idx, mode in enumerate(modes):
        samples = {}
        for d_idx, (label, docs) in enumerate(datasets):
            matrix = extract_matrices(docs, (mode,))[mode]
            ok = _k_on_tree(tree, matrix, config, seed, (m_idx, d_idx), tip_map, f"{label} {mode}")
            sizes = np.array([d.n_forms for d in docs])
            rows.append({"dataset": label, "mode": mode, "n_doculects": len(docs), "size_min": int(sizes.min()),
                         "size_max": int(sizes.max()), "size_mean": float(sizes.mean()), **_k_summary(ok)})
            samples[label] = ok["k"].to_numpy()
        welch_rows.append({"mode": mode, **_welch_row("full", samples["full"], config.subset.value,
                                                      samples[config.subset.value])})

    table = pd.DataFrame(rows)
    write_table(table, config.output, config.full_precision)
    write_table(pd.DataFrame(welch_rows), sidecar_path(config.output, "welch"), config.full_precision)
    return table


def cmd_robustness(config):
    seed = config.require_seed()
    if config.tree_dir:
        return _posterior_robustness(config, seed)
    if config.subset is not SubsetMode.NONE:
        return _subset_robustness(config, seed)
    raise InputError("robustness needs --tree-dir (posterior mode) or --subset with --wordlist and --tree")
