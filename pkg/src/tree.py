"""
Reference Phylogeny: Newick I/O, Pruning and Variance-Covariance

This module holds the rooted tree every signal test runs against.

Key Features:
-------------
- `parse_newick()` / `write_newick()` – single-statement Newick through Bio.Phylo,
  checked for tip labels and branch lengths; comments and internal labels are dropped
- `prune_to_tips()` – drop tips with missing data; unary internal nodes are
  collapsed with branch lengths summed. A root left with one child is kept as a
  stem so root-to-tip distances (and therefore the VCV) never change.
- `vcv()` – tip x tip matrix of shared root-to-tip path lengths
- `VcvMatrix.cho_factor()` – Cholesky with a one-shot diagonal jitter for
  matrices made singular by zero-length branches

Node numbering is preorder from the root (root = 0); tips keep the order they
appear in the Newick text. Trees are immutable and safe to share across jobs.
"""

import io
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from Bio import Phylo
from Bio.Phylo import BaseTree, NewickIO
from scipy.linalg import LinAlgError, cho_factor

from src.errors import NewickError, SingularMatrixError, TreeError

logger = logging.getLogger(__name__)

JITTER_SCALE = 1e-10


@dataclass(frozen=True, eq=False)
class PhyloTree:
    parents: tuple
    children: tuple
    lengths: tuple
    labels: tuple
    root: int = 0

    def __post_init__(self):
        n = len(self.parents)
        if n == 0:
            raise TreeError("empty tree")
        if not (len(self.children) == len(self.lengths) == len(self.labels) == n):
            raise TreeError("node record arrays differ in length")
        roots = [i for i, p in enumerate(self.parents) if p is None]
        if roots != [self.root]:
            raise TreeError(f"tree must have exactly one root, found {len(roots)}")
        for node, kids in enumerate(self.children):
            for kid in kids:
                if self.parents[kid] != node:
                    raise TreeError(f"node {kid} is listed under {node} but its parent is {self.parents[kid]}")
        for node, length in enumerate(self.lengths):
            if not math.isfinite(length) or length < 0:
                raise TreeError(f"branch length {length!r} on node {node} must be finite and >= 0")
        seen = set()
        for node in self.preorder():
            seen.add(node)
        if len(seen) != n:
            raise TreeError("tree is not connected to its root (or contains a cycle)")
        labels = [self.labels[t] for t in self.tips]
        if any(not label for label in labels):
            raise TreeError("every tip needs a nonempty label")
        if len(set(labels)) != len(labels):
            dupes = sorted({x for x in labels if labels.count(x) > 1})
            raise TreeError(f"duplicate tip labels: {', '.join(dupes)}")

    # --- Structure ---

    @property
    def n_nodes(self):
        return len(self.parents)

    @cached_property
    def tips(self):
        # preorder with children visited left to right == Newick text order
        return tuple(node for node in self.preorder() if not self.children[node])

    @property
    def n_tips(self):
        return len(self.tips)

    @cached_property
    def tip_labels(self):
        return tuple(self.labels[t] for t in self.tips)

    @cached_property
    def tip_index(self):
        return {label: node for label, node in zip(self.tip_labels, self.tips)}

    def preorder(self):
        order = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            order.append(node)
            if len(order) > len(self.parents):
                raise TreeError("cycle detected while walking the tree")
            stack.extend(reversed(self.children[node]))
        return order

    def postorder(self):
        return list(reversed(self._reverse_postorder()))

    def _reverse_postorder(self):
        # root, then right-to-left descent; reversed gives a left-to-right postorder
        order = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(self.children[node])
        return order

    def is_bifurcating(self):
        """True when every internal node has two children (a unary root stem is allowed)."""
        for node, kids in enumerate(self.children):
            if not kids:
                continue
            if len(kids) == 2 or (node == self.root and len(kids) == 1):
                continue
            return False
        return True

    @cached_property
    def depths(self):
        depth = np.zeros(self.n_nodes)
        for node in self.preorder():
            parent = self.parents[node]
            if parent is not None:
                depth[node] = depth[parent] + self.lengths[node]
        depth.flags.writeable = False
        return depth

    @cached_property
    def descendant_tips(self):
        """Per node, the tip positions (indices into `tips`) below it."""
        position = {node: i for i, node in enumerate(self.tips)}
        below = [None] * self.n_nodes
        for node in self.postorder():
            if not self.children[node]:
                below[node] = (position[node],)
            else:
                below[node] = tuple(i for kid in self.children[node] for i in below[kid])
        return tuple(below)

    @classmethod
    def from_records(cls, parents, lengths, labels):
        """Build a tree from parent pointers; child order follows node order."""
        children = [[] for _ in parents]
        for node, parent in enumerate(parents):
            if parent is not None:
                children[parent].append(node)
        roots = [i for i, p in enumerate(parents) if p is None]
        if len(roots) != 1:
            raise TreeError(f"tree must have exactly one root, found {len(roots)}")
        root = roots[0]
        lengths = list(lengths)
        lengths[root] = 0.0
        return cls(
            parents=tuple(parents),
            children=tuple(tuple(k) for k in children),
            lengths=tuple(float(x) for x in lengths),
            labels=tuple(labels[i] if not children[i] else None for i in range(len(parents))),
            root=root,
        )


@dataclass(frozen=True, eq=False)
class VcvMatrix:
    tip_labels: tuple
    matrix: np.ndarray

    def index(self, labels):
        lookup = {label: i for i, label in enumerate(self.tip_labels)}
        try:
            return [lookup[label] for label in labels]
        except KeyError as e:
            raise TreeError(f"unknown tip label {e.args[0]!r}") from None

    def restrict(self, labels):
        idx = self.index(labels)
        return VcvMatrix(tuple(labels), _frozen(self.matrix[np.ix_(idx, idx)]))

    def cho_factor(self):
        try:
            return cho_factor(self.matrix, lower=True)
        except LinAlgError:
            pass
        jitter = JITTER_SCALE * float(np.mean(np.diag(self.matrix)))
        logger.debug(f"VCV not positive definite, retrying with diagonal jitter {jitter:.3g}")
        try:
            return cho_factor(self.matrix + jitter * np.eye(len(self.tip_labels)), lower=True)
        except LinAlgError:
            raise SingularMatrixError("variance-covariance matrix is singular even after jitter") from None


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


# --- Newick I/O ---

def _clade_length(clade, default_length, name):
    value = clade.branch_length
    if value is None:
        if default_length is None:
            raise NewickError(f"missing branch length on {name}")
        value = default_length
    value = float(value)
    if not math.isfinite(value):
        raise NewickError(f"non-finite branch length {value!r} on {name}")
    if value < 0:
        raise NewickError(f"negative branch length {value!r} on {name}")
    return value


def parse_newick(text, default_length=None):
    """
    Parse a single Newick statement into a PhyloTree.

    Every non-root edge needs a length unless `default_length` is given. The
    root's own length, internal labels and [comments] are read and discarded.
    """
    if text is None or not text.strip() or text.strip() == ";":
        raise NewickError("empty tree")
    if not text.rstrip().endswith(";"):
        raise NewickError("unterminated tree: missing ';'")
    try:
        parsed = Phylo.read(io.StringIO(text), "newick")
    except (NewickIO.NewickError, ValueError) as e:
        raise NewickError(str(e)) from None
    if not parsed.root.clades:
        raise NewickError("empty tree")

    parents, lengths, labels = [], [], []
    stack = [(parsed.root, None)]
    while stack:
        clade, parent = stack.pop()
        node = len(parents)
        tip = not clade.clades
        if tip and not clade.name:
            raise NewickError("tip without a label")
        name = clade.name if tip else f"internal node {node}"
        parents.append(parent)
        lengths.append(0.0 if parent is None else _clade_length(clade, default_length, name))
        labels.append(clade.name if tip else None)
        for kid in reversed(clade.clades):
            stack.append((kid, node))

    tip_labels = [label for label in labels if label is not None]
    if len(set(tip_labels)) != len(tip_labels):
        dupes = sorted({x for x in tip_labels if tip_labels.count(x) > 1})
        raise NewickError(f"duplicate tip label(s): {', '.join(dupes)}")
    return PhyloTree.from_records(parents, lengths, labels)


def write_newick(tree):
    """Newick text with shortest round-trip branch lengths; the root carries ':0.0'."""
    clades = {}
    for node in tree.postorder():
        clades[node] = BaseTree.Clade(
            branch_length=tree.lengths[node],
            name=tree.labels[node],
            clades=[clades.pop(k) for k in tree.children[node]],
        )
    handle = io.StringIO()
    Phylo.write(BaseTree.Tree(root=clades[tree.root], rooted=True), handle, "newick", format_branch_length="%s")
    return handle.getvalue().strip()


# --- Pruning ---

def prune_to_tips(tree, keep):
    keep = set(keep)
    unknown = keep - set(tree.tip_labels)
    if unknown:
        raise TreeError(f"cannot keep unknown tip(s): {', '.join(sorted(unknown))}")
    if len(keep) < 2:
        raise TreeError(f"pruned tree needs at least 2 tips, got {len(keep)}")

    has_kept = [False] * tree.n_nodes
    for node in tree.postorder():
        kids = tree.children[node]
        has_kept[node] = (tree.labels[node] in keep) if not kids else any(has_kept[k] for k in kids)

    parents, lengths, labels = [], [], []
    stack = [(tree.root, None, 0.0)]
    while stack:
        old, new_parent, carried = stack.pop()
        kept_kids = [k for k in tree.children[old] if has_kept[k]]
        if old != tree.root and len(kept_kids) == 1:
            stack.append((kept_kids[0], new_parent, carried + tree.lengths[old]))
            continue
        parents.append(new_parent)
        lengths.append(0.0 if old == tree.root else tree.lengths[old] + carried)
        labels.append(tree.labels[old] if not tree.children[old] else None)
        new_id = len(parents) - 1
        for kid in reversed(kept_kids):
            stack.append((kid, new_id, 0.0))

    return PhyloTree.from_records(parents, lengths, labels)


# --- Variance-covariance ---

def vcv(tree):
    if tree.n_tips < 2:
        raise TreeError("vcv needs at least 2 tips")
    n = tree.n_tips
    C = np.zeros((n, n))
    below = tree.descendant_tips
    for node in range(tree.n_nodes):
        if node == tree.root:
            continue
        idx = np.asarray(below[node])
        C[np.ix_(idx, idx)] += tree.lengths[node]
    return VcvMatrix(tree.tip_labels, _frozen(C))


def read_newick_file(path, default_length=None):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_newick(text, default_length=default_length)
    except NewickError as e:
        raise NewickError(str(e), path=path) from None


def mrca(tree, a, b):
    """Most recent common ancestor of two tip labels."""
    ancestors = set()
    node = tree.tip_index[a]
    while node is not None:
        ancestors.add(node)
        node = tree.parents[node]
    node = tree.tip_index[b]
    while node not in ancestors:
        node = tree.parents[node]
    return node
