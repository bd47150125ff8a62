import os

import numpy as np
import pytest

from src.data_loaders.data_processor import Doculect, SegmentedForm
from src.evolve import simulate_yule_tree
from src.tree import parse_newick

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def make_doculect(doc_id, *forms):
    return Doculect(doc_id, tuple(SegmentedForm.parse(f) for f in forms))


def write_tsv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")
    return str(path)


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def toy_wordlist():
    return os.path.join(DATA_DIR, "toy_wordlist.tsv")


@pytest.fixture
def toy_classmap():
    return os.path.join(DATA_DIR, "toy_classmap.tsv")


@pytest.fixture
def toy_tree_path():
    return os.path.join(DATA_DIR, "toy_tree.nwk")


@pytest.fixture
def three_form_doculect():
    # forms {p a}, {p i}, {a p}
    return make_doculect("L1", "p a", "p i", "a p")


@pytest.fixture
def textbook_tree():
    return parse_newick("((A:1,B:1):1,C:2);")


@pytest.fixture
def yule_tree():
    return simulate_yule_tree(30, seed=np.random.SeedSequence(7))


@pytest.fixture
def synthetic_corpus():
    """40 doculects over a 6-segment alphabet with varying wordlist sizes."""
    rng = np.random.default_rng(11)
    alphabet = np.array(["p", "t", "k", "n", "a", "i"])
    doculects = []
    for d in range(40):
        present = alphabet[rng.random(len(alphabet)) < 0.85]
        if len(present) < 2:
            present = alphabet[:2]
        forms = []
        for _ in range(int(rng.integers(15, 60))):
            length = int(rng.integers(1, 5))
            forms.append(" ".join(rng.choice(present, size=length)))
        doculects.append(make_doculect(f"D{d:02d}", *forms))
    return doculects
