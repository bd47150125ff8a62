"""
Group comparisons of signal results (the `compare` subcommand).

Reads two or more results CSVs written by `signal` (for example forward vs
backward transitions, the three class schemes, original vs normalized runs)
and writes:
- `<output>`: per-group summary (n, mean, SD, excess kurtosis, % significant)
- `<stem>_pairwise.csv`: Welch t and Kolmogorov-Smirnov for every pair
- `<stem>_omnibus.csv`: one-way ANOVA and Anderson-Darling k-sample across all groups
"""

import logging
import os
from itertools import combinations

import numpy as np
import pandas as pd

from src.comparison_stats import anderson_darling_k, anova_oneway, ks_two_sample, summarize, welch_t
from src.data_loaders.data_loader import NA, write_table
from src.errors import CharacterError, InputError
from src.pipeline import require_flags, sidecar_path

logger = logging.getLogger(__name__)


def load_result_values(path):
    """(statistic, values, significant flags) of the successfully tested rows of a results CSV."""
    if not os.path.isfile(path):
        raise InputError("file not found", path=path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    column = next((c for c in ("k", "d") if c in frame.columns), None)
    if column is None:
        raise InputError("results file has neither a 'k' nor a 'd' column", path=path, line=1)
    if "error" in frame.columns:
        frame = frame[frame["error"].isin(["", NA])]
    frame = frame[frame[column] != NA]
    values = pd.to_numeric(frame[column], errors="coerce")
    if values.isna().any():
        raise InputError(f"non-numeric '{column}' value", path=path, line=int(values.index[values.isna()][0]) + 2)
    significant = frame["significant"] == "True" if "significant" in frame.columns else None
    return column.upper(), values.to_numpy(dtype=float), significant


def _guarded(name, func, *args):
    try:
        return func(*args)
    except CharacterError as e:
        logger.warning(f"{name} skipped: {e}")
        return None


def compare_groups(groups):
    """
    groups: {label: (values, significant flags or None)}.
    Returns (summary, pairwise, omnibus) DataFrames.
    """
    if len(groups) < 2:
        raise InputError("compare needs at least 2 groups")
    summary = []
    for label, (values, significant) in groups.items():
        stats = summarize(values)
        pct = 100.0 * np.mean(significant) if significant is not None and len(significant) else np.nan
        summary.append({"label": label, "n_characters": stats.n, "mean": stats.mean, "sd": stats.sd,
                        "kurtosis": stats.kurtosis, "pct_significant": pct})

    pairwise = []
    for (la, (a, _)), (lb, (b, _)) in combinations(groups.items(), 2):
        row = {"group_a": la, "group_b": lb}
        welch = _guarded(f"Welch t {la} vs {lb}", welch_t, a, b)
        ks = ks_two_sample(a, b)
        row.update(welch_t=welch.t if welch else np.nan, welch_df=welch.df if welch else np.nan,
                   welch_p=welch.p if welch else np.nan, ci_low=welch.ci_low if welch else np.nan,
                   ci_high=welch.ci_high if welch else np.nan, ks_statistic=ks.statistic, ks_p=ks.p)
        pairwise.append(row)

    samples = [values for values, _ in groups.values()]
    anova = _guarded("one-way ANOVA", anova_oneway, samples)
    ad = _guarded("Anderson-Darling", anderson_darling_k, samples)
    omnibus = {"n_groups": len(groups),
               "anova_f": anova.f if anova else np.nan, "anova_df1": anova.df1 if anova else np.nan,
               "anova_df2": anova.df2 if anova else np.nan, "anova_p": anova.p if anova else np.nan,
               "ad": ad.ad if ad else np.nan, "t_ad": ad.t_ad if ad else np.nan, "ad_p": ad.p if ad else np.nan}
    return pd.DataFrame(summary), pd.DataFrame(pairwise), pd.DataFrame([omnibus])


def cmd_compare(config):
    require_flags(config, output="--output")
    if len(config.results) < 2:
        raise InputError("'compare' needs at least 2 --results files")
    labels = config.labels or tuple(os.path.splitext(os.path.basename(p))[0] for p in config.results)
    if len(labels) != len(config.results):
        raise InputError(f"{len(labels)} labels for {len(config.results)} results files")
    if len(set(labels)) != len(labels):
        raise InputError("group labels must be unique")

    groups, statistics = {}, set()
    for label, path in zip(labels, config.results):
        statistic, values, significant = load_result_values(path)
        if not len(values):
            raise InputError("no tested characters", path=path)
        statistics.add(statistic)
        groups[label] = (values, significant)
    if len(statistics) > 1:
        logger.warning("comparing K results with D results")

    summary, pairwise, omnibus = compare_groups(groups)
    write_table(summary, config.output, config.full_precision)
    write_table(pairwise, sidecar_path(config.output, "pairwise"), config.full_precision)
    write_table(omnibus, sidecar_path(config.output, "omnibus"), config.full_precision)
    logger.info(f"compare: {', '.join(labels)}; omnibus {omnibus.iloc[0].to_dict()}")
    return summary, pairwise, omnibus
