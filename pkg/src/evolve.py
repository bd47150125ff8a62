"""
Trait Evolution on Trees and Phylogenetic Independent Contrasts

Key Features:
-------------
- Seeded, splittable random streams: `derive_rng(master_seed, *indices)` gives
  every job of a sweep its own stream, so results never depend on scheduling.
- Brownian motion (`simulate_bm`, `simulate_bm_batch`): each node value is its
  parent's value plus Normal(0, sigma2 * branch length).
- Mixed signal/noise traits (`simulate_mixed`): variance-preserving mix of a
  standardized BM draw and standardized iid noise.
- Threshold binarization to a fixed count of 1s.
- Felsenstein contrasts (`pic`, `ContrastPlan`): the branch-length part of the
  algorithm depends only on the tree, so a plan is built once and applied to
  whole batches of permuted tip values.
- Reference trees for simulation: pure-birth (Yule) and fully balanced.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.errors import CharacterError, PolytomyError, TreeError
from src.tree import PhyloTree

logger = logging.getLogger(__name__)


# --- Random streams ---

def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if seed is None:
        raise ValueError("a seed is required for stochastic operations")
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def derive_seed(master_seed, *indices):
    return np.random.SeedSequence([int(master_seed), *(int(i) for i in indices)])


def derive_rng(master_seed, *indices):
    return np.random.default_rng(derive_seed(master_seed, *indices))


def split_rng(seed, n):
    """n independent child streams of one seed (SeedSequence.spawn)."""
    if isinstance(seed, np.random.Generator):
        return seed.spawn(n)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return [np.random.default_rng(s) for s in seq.spawn(n)]


# --- Tip data ---

@dataclass(frozen=True, eq=False)
class TipValues:
    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) != len(self.labels):
            raise CharacterError("tip values must be one number per tip label")
        if not np.isfinite(values).all():
            raise CharacterError("tip values must be finite (prune NA tips first)")
        if len(set(self.labels)) != len(self.labels):
            raise CharacterError("duplicate tip labels in tip values")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "values", values)

    @classmethod
    def from_series(cls, series):
        series = series.dropna()
        return cls(tuple(str(i) for i in series.index), series.to_numpy(dtype=float))

    def aligned(self, tree):
        """Values in the tree's tip order; the label sets must match exactly."""
        if set(self.labels) != set(tree.tip_labels):
            missing = set(tree.tip_labels) - set(self.labels)
            extra = set(self.labels) - set(tree.tip_labels)
            raise CharacterError(f"tip values do not match tree tips (missing {sorted(missing)[:5]}, "
                                 f"extra {sorted(extra)[:5]})")
        lookup = dict(zip(self.labels, self.values))
        return np.array([lookup[label] for label in tree.tip_labels])


@dataclass(frozen=True, eq=False)
class Contrasts:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


# --- Simulation ---

def simulate_bm_batch(tree, n, sigma2=1.0, root_value=0.0, seed=None):
    """n Brownian replicates, shape (n, n_tips) in tree tip order."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    rng = make_rng(seed)
    z = rng.standard_normal((tree.n_nodes, n))
    scale = np.sqrt(sigma2 * np.asarray(tree.lengths))
    node_values = np.empty((tree.n_nodes, n))
    for node in tree.preorder():
        parent = tree.parents[node]
        if parent is None:
            node_values[node] = root_value
        else:
            node_values[node] = node_values[parent] + scale[node] * z[node]
    return node_values[list(tree.tips)].T


def simulate_bm(tree, sigma2=1.0, root_value=0.0, seed=None):
    values = simulate_bm_batch(tree, 1, sigma2, root_value, seed)[0]
    return TipValues(tree.tip_labels, values)


def _standardize(x):
    sd = x.std(ddof=1) if len(x) > 1 else 0.0
    if sd == 0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def simulate_mixed(tree, p_brownian, seed=None):
    if not 0.0 <= p_brownian <= 1.0:
        raise ValueError("p_brownian must lie in [0, 1]")
    rng = make_rng(seed)
    bm = simulate_bm_batch(tree, 1, 1.0, 0.0, rng)[0]
    noise = rng.standard_normal(tree.n_tips)
    z = np.sqrt(p_brownian) * _standardize(bm) + np.sqrt(1.0 - p_brownian) * _standardize(noise)
    return TipValues(tree.tip_labels, z)


def threshold_binarize(values, n_ones):
    """The n_ones largest values become 1; ties go to the earlier tip."""
    x = values.values
    if not 0 <= n_ones <= len(x):
        raise ValueError(f"n_ones must lie in [0, {len(x)}]")
    order = np.lexsort((np.arange(len(x)), -x))
    binary = np.zeros(len(x))
    binary[order[:n_ones]] = 1.0
    return TipValues(values.labels, binary)


def threshold_binarize_batch(sims, n_ones):
    order = np.argsort(-sims, axis=1, kind="stable")
    binary = np.zeros_like(sims)
    rows = np.arange(sims.shape[0])[:, None]
    binary[rows, order[:, :n_ones]] = 1.0
    return binary


# --- Independent contrasts ---

class ContrastPlan:
    """
    Felsenstein's pruning steps for one bifurcating tree.

    At each internal node with daughters (v1, b1), (v2, b2): contrast
    (v1 - v2) / sqrt(b1 + b2), ancestral value (b2 v1 + b1 v2) / (b1 + b2),
    and the node's own branch grows by b1 b2 / (b1 + b2).
    """

    def __init__(self, tree):
        if not tree.is_bifurcating():
            raise PolytomyError("independent contrasts need a fully bifurcating tree")
        self.tree = tree
        self.n_tips = tree.n_tips
        tip_row = {node: i for i, node in enumerate(tree.tips)}
        self._row = dict(tip_row)
        extra = {}
        steps = []
        next_row = tree.n_tips
        for node in tree.postorder():
            kids = tree.children[node]
            if not kids:
                extra[node] = 0.0
                continue
            if len(kids) == 1:
                # unary root stem: passes its child's value through
                (kid,) = kids
                self._row[node] = self._row[kid]
                extra[node] = tree.lengths[kid] + extra[kid]
                continue
            left, right = kids
            b1 = tree.lengths[left] + extra[left]
            b2 = tree.lengths[right] + extra[right]
            if b1 + b2 == 0:
                raise TreeError(f"both daughter branches of node {node} have zero length")
            steps.append((self._row[left], self._row[right], b1, b2, next_row))
            self._row[node] = next_row
            next_row += 1
            extra[node] = b1 * b2 / (b1 + b2)
        self._steps = steps
        self._n_rows = next_row

    @property
    def n_contrasts(self):
        return len(self._steps)

    def contrasts(self, values):
        """values: (n_tips,) or (batch, n_tips) in tree tip order."""
        x = np.asarray(values, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        rows = np.empty((self._n_rows, x.shape[0]))
        rows[:self.n_tips] = x.T
        out = np.empty((len(self._steps), x.shape[0]))
        for k, (r1, r2, b1, b2, target) in enumerate(self._steps):
            v1, v2 = rows[r1], rows[r2]
            out[k] = (v1 - v2) / np.sqrt(b1 + b2)
            rows[target] = (b2 * v1 + b1 * v2) / (b1 + b2)
        return out[:, 0] if single else out.T


def pic(tree, values):
    plan = ContrastPlan(tree)
    return Contrasts(plan.contrasts(values.aligned(tree)))


def pic_variance(contrasts):
    c = contrasts.values if isinstance(contrasts, Contrasts) else np.asarray(contrasts)
    if c.shape[-1] == 0:
        raise CharacterError("no contrasts to take the variance of")
    # variance around zero, the expected contrast under BM
    return np.mean(c ** 2, axis=-1)


# --- Reference trees ---

def simulate_yule_tree(n_tips, birth_rate=1.0, seed=None):
    """
    Pure-birth tree grown until n_tips lineages, then one more waiting time.

    The newest cherries get pendant edges near zero, so white noise added at
    the tips weighs heavily in their contrasts.
    """
    if n_tips < 2:
        raise ValueError("a Yule tree needs at least 2 tips")
    rng = make_rng(seed)
    parents = [None, 0, 0]
    start = [0.0, 0.0, 0.0]
    end = [0.0, None, None]
    active = [1, 2]
    t = 0.0
    while len(active) < n_tips:
        t += rng.exponential(1.0 / (birth_rate * len(active)))
        pick = active.pop(int(rng.integers(len(active))))
        end[pick] = t
        for _ in range(2):
            parents.append(pick)
            start.append(t)
            end.append(None)
            active.append(len(parents) - 1)
    t += rng.exponential(1.0 / (birth_rate * len(active)))
    for node in active:
        end[node] = t
    lengths = [e - s for s, e in zip(start, end)]
    is_tip = set(active)
    labels = [None] * len(parents)
    for i, node in enumerate(sorted(is_tip)):
        labels[node] = f"t{i + 1:03d}"
    return PhyloTree.from_records(parents, lengths, labels)


def balanced_tree(depth, branch_length=1.0):
    if depth < 1:
        raise ValueError("depth must be >= 1")
    parents = [None]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for node in frontier:
            for _ in range(2):
                parents.append(node)
                nxt.append(len(parents) - 1)
        frontier = nxt
    lengths = [branch_length] * len(parents)
    labels = [None] * len(parents)
    width = len(str(len(frontier)))
    for i, node in enumerate(frontier):
        labels[node] = f"t{i + 1:0{width}d}"
    return PhyloTree.from_records(parents, lengths, labels)
