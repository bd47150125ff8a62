import csv
import json
import logging
import math
import os

import numpy as np
import pandas as pd

from src.data_loaders.data_processor import (SCHEME_CLASSES, BiphoneKey, CharacterKind, CharacterMatrix, ClassMap,
                                             Doculect, SegmentedForm)
from src.errors import CharacterError, ClassMapError, InputError
from src.tree import read_newick_file

"""
Input and Output Files

Readers and writers for every file the command line touches. Readers validate
everything up front and report problems as `path:line: message`, so a bad file
is rejected before any output is written.

Main Workflow:
--------------
1. `load_wordlists()` reads the TSV `doculect<TAB>form` (form = space-separated segments).
2. `load_class_maps()` reads `segment<TAB>place<TAB>major_place<TAB>manner`.
3. `load_tip_map()` reads optional doculect → tip renames (`doculect<TAB>tip`).
4. `load_tree()` / `load_tree_dir()` read one Newick tree or a directory of them
   (lexicographic file order defines the tree index).
5. `load_character_matrix()` reads a character CSV (`doculect` first, `NA` for missing).
6. `write_character_matrix()`, `write_table()` and `write_manifest()` save outputs.

Key Features:
-------------
- Exact duplicate wordlist rows are dropped with a warning.
- Result tables print floats with 6 significant digits; `full_precision=True`
  adds a JSON sidecar with the unrounded values.
- All writers use '\\n' line endings so repeated runs are byte-identical.
"""

logger = logging.getLogger(__name__)

WORDLIST_HEADER = ("doculect", "form")
CLASSMAP_HEADER = ("segment", "place", "major_place", "manner")
TIP_MAP_HEADER = ("doculect", "tip")
NA = "NA"


def _require_file(path):
    if not os.path.isfile(path):
        raise InputError("file not found", path=path)


def _read_tsv(path, header):
    """Read a headed TSV as strings; returns a frame whose index + 2 is the file line."""
    _require_file(path)
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, quoting=csv.QUOTE_NONE,
                            skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise InputError("empty file", path=path) from None
    except pd.errors.ParserError as e:
        raise InputError(f"malformed TSV ({e})", path=path) from None
    if tuple(frame.columns) != header:
        raise InputError(f"expected header {'<TAB>'.join(header)}, got {'<TAB>'.join(map(str, frame.columns))}",
                         path=path, line=1)
    frame = frame.fillna("")
    frame = frame.apply(lambda col: col.str.strip())
    blank = (frame == "").all(axis=1)
    repeated = (frame == pd.Series(header, index=frame.columns)).all(axis=1)
    if repeated.any():
        raise InputError("duplicate header row", path=path, line=int(frame.index[repeated][0]) + 2)
    return frame[~blank]


def load_wordlists(path):
    frame = _read_tsv(path, WORDLIST_HEADER)
    dupes = frame.duplicated()
    if dupes.any():
        lines = ", ".join(str(i + 2) for i in frame.index[dupes][:10])
        logger.warning(f"{path}: dropped {int(dupes.sum())} exact duplicate row(s) (lines {lines})")
        frame = frame[~dupes]

    forms = {}
    for idx, doculect, text in frame.itertuples():
        if not doculect:
            raise InputError("missing doculect id", path=path, line=idx + 2)
        try:
            form = SegmentedForm.parse(text)
        except InputError as e:
            raise InputError(str(e), path=path, line=idx + 2) from None
        forms.setdefault(doculect, []).append(form)

    if not forms:
        raise InputError("no wordlist rows", path=path)
    doculects = [Doculect(doc_id, tuple(fs)) for doc_id, fs in forms.items()]
    sizes = np.array([d.n_forms for d in doculects])
    logger.info(f"Loaded {len(doculects)} doculects from {path} "
                f"(forms per doculect: min {sizes.min()}, max {sizes.max()}, mean {sizes.mean():.1f})")
    for d in doculects:
        logger.debug(f"  {d.id}: {d.n_forms} forms")
    return doculects


def load_class_maps(path, schemes=tuple(SCHEME_CLASSES)):
    frame = _read_tsv(path, CLASSMAP_HEADER)
    seen = {}
    for idx, segment in frame["segment"].items():
        if not segment:
            raise ClassMapError("missing segment", path=path, line=idx + 2)
        if segment in seen:
            raise ClassMapError(f"segment {segment!r} mapped twice (first on line {seen[segment]})",
                                path=path, line=idx + 2)
        seen[segment] = idx + 2

    maps = {}
    for scheme in schemes:
        empty = frame[scheme] == ""
        if empty.any():
            idx = frame.index[empty][0]
            raise ClassMapError(f"no {scheme} class for {frame.at[idx, 'segment']!r}", path=path, line=idx + 2)
        try:
            maps[scheme] = ClassMap(scheme, dict(zip(frame["segment"], frame[scheme])))
        except ClassMapError as e:
            raise ClassMapError(str(e), path=path) from None
    logger.info(f"Loaded class map for {len(frame)} segments from {path}")
    return maps


def load_tip_map(path):
    frame = _read_tsv(path, TIP_MAP_HEADER)
    mapping = {}
    for idx, doculect, tip in frame.itertuples():
        if not doculect or not tip:
            raise InputError("empty doculect or tip", path=path, line=idx + 2)
        if doculect in mapping:
            raise InputError(f"doculect {doculect!r} mapped twice", path=path, line=idx + 2)
        mapping[doculect] = tip
    if len(set(mapping.values())) != len(mapping):
        raise InputError("two doculects mapped to the same tip", path=path)
    return mapping


def load_tree(path, default_length=None):
    _require_file(path)
    tree = read_newick_file(path, default_length=default_length)
    logger.info(f"Loaded tree {path} ({tree.n_tips} tips)")
    return tree


def load_tree_dir(directory, default_length=None):
    """All regular, non-hidden files in lexicographic order; returns [(name, tree)]."""
    if not os.path.isdir(directory):
        raise InputError("not a directory", path=directory)
    names = sorted(n for n in os.listdir(directory)
                   if not n.startswith(".") and os.path.isfile(os.path.join(directory, n)))
    if len(names) < 2:
        raise InputError(f"need at least 2 trees, found {len(names)}", path=directory)
    trees = [(name, read_newick_file(os.path.join(directory, name), default_length=default_length)) for name in names]
    logger.info(f"Loaded {len(trees)} trees from {directory}")
    return trees


def _guess_kind(path, values):
    stem = os.path.splitext(os.path.basename(path))[0].lower()
    if "binary" in stem:
        return CharacterKind.BINARY
    if "bwd" in stem:
        return CharacterKind.BACKWARD
    if "fwd" in stem:
        return CharacterKind.FORWARD
    present = values[~np.isnan(values)]
    kind = CharacterKind.BINARY if np.isin(present, (0.0, 1.0)).all() else CharacterKind.FORWARD
    logger.warning(f"{path}: file name does not name a character kind, reading it as {kind.value} (use --kind)")
    return kind


def load_character_matrix(path, kind=None):
    """
    Read a character CSV. Without `kind`, the file name decides ('binary', 'bwd'
    or 'fwd'); only a name with none of these falls back to the values, where
    all-0/1 data is binary.
    """
    _require_file(path)
    with open(path, encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header or header[0] != "doculect":
        raise InputError("first column must be 'doculect'", path=path, line=1)
    if len(set(header)) != len(header):
        raise InputError("duplicate column names", path=path, line=1)
    try:
        keys = tuple(BiphoneKey.parse(h) for h in header[1:])
    except (InputError, CharacterError) as e:
        raise InputError(str(e), path=path, line=1) from None

    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    ids = raw["doculect"]
    if (ids == "").any():
        raise InputError("missing doculect id", path=path, line=int(raw.index[ids == ""][0]) + 2)
    if ids.duplicated().any():
        raise InputError(f"duplicate doculect {ids[ids.duplicated()].iloc[0]!r}", path=path,
                         line=int(raw.index[ids.duplicated()][0]) + 2)

    cells = raw.drop(columns="doculect")
    missing = cells.isin([NA, ""])
    numeric = cells.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & ~missing
    if bad.any(axis=None):
        row, col = np.argwhere(bad.to_numpy())[0]
        raise InputError(f"non-numeric value {cells.iat[row, col]!r} in column {cells.columns[col]!r}",
                         path=path, line=int(row) + 2)

    values = numeric.astype(float)
    values.index = pd.Index(ids, name="doculect")
    values.columns = [str(k) for k in keys]
    if kind is None:
        kind = _guess_kind(path, values.to_numpy())
    try:
        matrix = CharacterMatrix(CharacterKind(kind), keys, values)
    except (CharacterError, ValueError) as e:
        raise InputError(str(e), path=path) from None
    logger.info(f"Loaded {matrix.n_characters} {matrix.kind.value} characters x {len(ids)} doculects from {path}")
    return matrix


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_character_matrix(matrix, path):
    _ensure_parent(path)
    matrix.values.to_csv(path, na_rep=NA, float_format="%.12g", lineterminator="\n")
    logger.info(f"Saved {matrix.n_characters} characters to {path}")


def write_table(frame, path, full_precision=False):
    _ensure_parent(path)
    frame.to_csv(path, index=False, na_rep=NA, float_format="%.6g", lineterminator="\n")
    if full_precision:
        sidecar = os.path.splitext(path)[0] + ".json"
        with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_json_safe(frame.to_dict(orient="records")), fh, indent=1, ensure_ascii=False)
            fh.write("\n")
    logger.info(f"Saved {len(frame)} rows to {path}")


def _json_safe(obj):
    if obj is None or obj is pd.NA:
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    return obj


def write_manifest(manifest, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(manifest), fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    logger.info(f"Saved manifest to {path}")
