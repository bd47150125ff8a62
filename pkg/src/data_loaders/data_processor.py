"""
Phonotactic Character Extraction from Segmented Wordlists

This module turns doculects (one wordlist each) into doculect x character
matrices, the datasets every signal test consumes.

Key Functionality:
------------------
- Each form is padded as `#, s1, ..., sn, #`; every adjacent pair is one biphone
  occurrence and every form is counted once.
- `binary_biphone_matrix()` – 1 if the biphone occurs, 0 if both segments are in
  the inventory but the pair never occurs, NA if either segment is missing.
- `forward_transition_matrix()` – count(x, y) / count(x as first element)
- `backward_transition_matrix()` – count(x, y) / count(y as second element)
- `class_transition_matrix()` – the same counting after projecting every segment
  through a place, major-place or manner ClassMap.

Characters are the pairs attested in at least one doculect, ordered by
(first, second). The word boundary '#' counts as present in every inventory.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from src.errors import CharacterError, ClassMapError, InputError

logger = logging.getLogger(__name__)

BOUNDARY = "#"

SCHEME_CLASSES = {
    "place": ("#", "labial", "dental", "alveolar", "retroflex", "palatal", "velar", "glottal", "vowel"),
    "major_place": ("#", "labial", "apical", "laminal", "velar", "vowel"),
    "manner": ("#", "obstruent", "nasal", "vibrant", "lateral", "glide", "rhotic glide", "vowel"),
}


class CharacterKind(str, Enum):
    BINARY = "binary"
    FORWARD = "fwd-freq"
    BACKWARD = "bwd-freq"

    @property
    def is_frequency(self):
        return self is not CharacterKind.BINARY


@dataclass(frozen=True)
class SegmentedForm:
    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise InputError("empty form")
        for token in self.segments:
            if token == BOUNDARY:
                raise InputError(f"reserved token '{BOUNDARY}' inside a form")
            if not token or any(ch.isspace() for ch in token):
                raise InputError(f"bad segment token {token!r}")

    @classmethod
    def parse(cls, text):
        return cls(tuple(text.split()))

    def padded(self):
        return (BOUNDARY, *self.segments, BOUNDARY)


@dataclass(frozen=True)
class Doculect:
    id: str
    forms: tuple

    def __post_init__(self):
        if not self.forms:
            raise InputError(f"doculect {self.id!r} has an empty wordlist")

    @property
    def n_forms(self):
        return len(self.forms)

    def mean_form_length(self):
        return float(np.mean([len(f.segments) for f in self.forms]))


@dataclass(frozen=True, order=True)
class BiphoneKey:
    first: str
    second: str
    scheme: str = ""

    def __post_init__(self):
        if self.first == BOUNDARY and self.second == BOUNDARY:
            raise CharacterError("'##' is not a biphone")

    def __str__(self):
        pair = f"{self.first}>{self.second}"
        return f"{self.scheme}:{pair}" if self.scheme else pair

    @classmethod
    def parse(cls, text):
        # segments may themselves contain ':' (length marks), so only a known scheme counts as prefix
        head, sep, rest = text.partition(":")
        scheme, pair = (head, rest) if sep and head in SCHEME_CLASSES else ("", text)
        first, sep, second = pair.partition(">")
        if not sep or not first or not second:
            raise InputError(f"bad character key {text!r} (expected 'x>y' or 'scheme:x>y')")
        return cls(first, second, scheme)


@dataclass(frozen=True)
class ClassMap:
    scheme: str
    mapping: dict

    def __post_init__(self):
        if self.scheme not in SCHEME_CLASSES:
            raise ClassMapError(f"unknown class scheme {self.scheme!r}")
        allowed = set(SCHEME_CLASSES[self.scheme]) - {BOUNDARY}
        bad = sorted({c for c in self.mapping.values() if c not in allowed})
        if bad:
            raise ClassMapError(f"{self.scheme}: classes outside the scheme inventory: {', '.join(bad)}")

    def project(self, token):
        if token == BOUNDARY:
            return BOUNDARY
        try:
            return self.mapping[token]
        except KeyError:
            raise ClassMapError(f"segment {token!r} has no {self.scheme} class") from None

    def check_total(self, doculects):
        missing = sorted(set().union(*(inventory(d) for d in doculects)) - set(self.mapping))
        if missing:
            raise ClassMapError(f"{self.scheme}: unmapped segment(s): {', '.join(missing)}")


@dataclass(frozen=True, eq=False)
class CharacterMatrix:
    """Doculects as rows, one column per character key (str form), NaN for NA."""
    kind: CharacterKind
    keys: tuple
    values: pd.DataFrame

    def __post_init__(self):
        if list(self.values.columns) != [str(k) for k in self.keys]:
            raise CharacterError("matrix columns do not match character keys")
        observed = self.values.to_numpy(dtype=float)
        present = observed[~np.isnan(observed)]
        if self.kind is CharacterKind.BINARY:
            if not np.isin(present, (0.0, 1.0)).all():
                raise CharacterError("binary matrix holds values other than 0, 1, NA")
        elif ((present < 0) | (present > 1)).any():
            raise CharacterError("frequency matrix holds values outside [0, 1]")

    @property
    def doculects(self):
        return tuple(self.values.index)

    @property
    def n_characters(self):
        return len(self.keys)

    def column(self, key):
        return self.values[str(key)]

    def subset_doculects(self, ids):
        return CharacterMatrix(self.kind, self.keys, self.values.loc[list(ids)])


def inventory(doculect):
    return {token for form in doculect.forms for token in form.segments}


def _pair_counts(sequences):
    pairs = Counter()
    for seq in sequences:
        pairs.update(zip(seq, seq[1:]))
    return pairs


def _padded_sequences(doculect, project=None):
    for form in doculect.forms:
        seq = form.padded()
        yield tuple(project(t) for t in seq) if project else seq


def _build_matrix(doculects, kind, project=None, scheme=""):
    ids = [d.id for d in doculects]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate doculect ids")
    counts, present = {}, {}
    for d in doculects:
        counts[d.id] = _pair_counts(_padded_sequences(d, project))
        tokens = inventory(d)
        present[d.id] = {project(t) for t in tokens} if project else tokens

    keys = sorted({BiphoneKey(x, y, scheme) for c in counts.values() for (x, y) in c})
    columns = [str(k) for k in keys]
    grid = np.full((len(ids), len(keys)), np.nan)

    for row, doc_id in enumerate(ids):
        pairs = counts[doc_id]
        inv = present[doc_id] | {BOUNDARY}
        out_of = Counter()
        into = Counter()
        for (x, y), n in pairs.items():
            out_of[x] += n
            into[y] += n
        for col, key in enumerate(keys):
            if key.first not in inv or key.second not in inv:
                continue
            n = pairs.get((key.first, key.second), 0)
            if kind is CharacterKind.BINARY:
                grid[row, col] = 1.0 if n > 0 else 0.0
            elif kind is CharacterKind.FORWARD:
                grid[row, col] = n / out_of[key.first]
            else:
                grid[row, col] = n / into[key.second]

    frame = pd.DataFrame(grid, index=pd.Index(ids, name="doculect"), columns=columns)
    logger.info(f"Extracted {len(keys)} {kind.value} characters{' (' + scheme + ')' if scheme else ''} "
                f"for {len(ids)} doculects")
    return CharacterMatrix(kind, tuple(keys), frame)


def binary_biphone_matrix(doculects):
    if not doculects:
        raise InputError("no doculects to extract from")
    return _build_matrix(doculects, CharacterKind.BINARY)


def forward_transition_matrix(doculects):
    if not doculects:
        raise InputError("no doculects to extract from")
    return _build_matrix(doculects, CharacterKind.FORWARD)


def backward_transition_matrix(doculects):
    if not doculects:
        raise InputError("no doculects to extract from")
    return _build_matrix(doculects, CharacterKind.BACKWARD)


def class_transition_matrix(doculects, class_map, direction="fwd"):
    if not doculects:
        raise InputError("no doculects to extract from")
    kinds = {"fwd": CharacterKind.FORWARD, "bwd": CharacterKind.BACKWARD}
    if direction not in kinds:
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    class_map.check_total(doculects)
    return _build_matrix(doculects, kinds[direction], project=class_map.project, scheme=class_map.scheme)
