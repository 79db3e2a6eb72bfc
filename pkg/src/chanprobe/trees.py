"""Adaptive probing strategies as labeled trees.

A depth-n strategy for an output alphabet of size Y is a full Y-ary rooted
tree whose internal nodes carry input labels: the input transmitted after
observing the output prefix y^{k-1} is the label of the node reached from
the root along those edges. Labels are stored breadth-first: the root is
index 0 and the child of node v along output y is v*Y + y + 1. Leaves are
addressed by integers whose base-Y digits (most significant first) spell
the full output sequence.

The running score of a path adds, at every node labeled with the watched
input `a`, the centered indicator of the watched output `b`; a leaf succeeds
when the final score magnitude strictly exceeds n*mu. This module evaluates
scores and success probabilities exactly (vectorized over batches of trees),
builds the threshold-stopping tree that maximizes the success probability,
and searches all labelings by brute force for use as an oracle.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .channels import Dmc
from .errors import (
    ChanprobeError,
    DepthOverflow,
    EnumerationTooLarge,
    LabelOutOfAlphabet,
    NonpositiveMu,
    PathTooLong,
    SingletonInputAlphabet,
    SymbolOutOfRange,
)

MAX_LEAVES = 1 << 24
MAX_TREES = 1 << 26
_TREE_BLOCK = 1 << 14
_TOTAL_PROB_TOL = 1e-12

StrategyFn = Callable[[int, tuple], int]


def node_count(n: int, y_size: int) -> int:
    """Number of labeled (internal) nodes of a full y_size-ary tree of depth n."""
    return sum(y_size**k for k in range(n))


def level_start(k: int, y_size: int) -> int:
    """Index of the first node at depth k."""
    return node_count(k, y_size)


def child_index(v: int, y: int, y_size: int) -> int:
    return v * y_size + y + 1


def parent_index(v: int, y_size: int) -> int:
    return (v - 1) // y_size


def node_depth(v: int, y_size: int) -> int:
    k = 0
    while level_start(k + 1, y_size) <= v:
        k += 1
    return k


def leaf_path(leaf: int, n: int, y_size: int) -> tuple[int, ...]:
    """Output sequence addressed by a leaf index (base-Y digits, msb first)."""
    digits = []
    for _ in range(n):
        leaf, d = divmod(leaf, y_size)
        digits.append(d)
    return tuple(reversed(digits))


@dataclass(frozen=True)
class StrategyTree:
    """Immutable labeled tree; `labels` holds one input symbol per node."""

    n: int
    x_size: int
    y_size: int
    labels: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("tree depth must be >= 1")
        if self.x_size < 1 or self.y_size < 1:
            raise ValueError("alphabet sizes must be >= 1")
        lab = np.asarray(self.labels, dtype=np.int64)
        expected = node_count(self.n, self.y_size)
        if lab.ndim != 1 or lab.size != expected:
            raise ValueError(f"expected {expected} labels, got {lab.size}")
        if lab.size and (lab.min() < 0 or lab.max() >= self.x_size):
            raise LabelOutOfAlphabet(
                f"labels must lie in 0..{self.x_size - 1}"
            )
        lab = np.ascontiguousarray(lab)
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def num_nodes(self) -> int:
        return int(self.labels.size)

    @property
    def num_leaves(self) -> int:
        return self.y_size**self.n

    def label_on_path(self, y_prefix: Sequence[int]) -> int:
        """Label of the node reached from the root along the given outputs."""
        if len(y_prefix) >= self.n:
            raise PathTooLong(f"prefix of length {len(y_prefix)} has no labeled node")
        v = 0
        for y in y_prefix:
            if not 0 <= y < self.y_size:
                raise SymbolOutOfRange(f"output {y} not in alphabet of size {self.y_size}")
            v = child_index(v, y, self.y_size)
        return int(self.labels[v])


@dataclass(frozen=True)
class ScoreParams:
    """Watched pair (a, b), slack mu, and the channel the scores run against."""

    a: int
    b: int
    mu: float
    dmc: Dmc

    def __post_init__(self):
        if not self.mu > 0:
            raise NonpositiveMu(f"mu must be positive, got {self.mu}")
        if not 0 <= self.a < self.dmc.num_inputs:
            raise SymbolOutOfRange(f"input {self.a} not in alphabet")
        if not 0 <= self.b < self.dmc.num_outputs:
            raise SymbolOutOfRange(f"output {self.b} not in alphabet")

    @property
    def p_ab(self) -> float:
        return float(self.dmc.matrix[self.a, self.b])

    def threshold(self, n: int) -> float:
        return n * self.mu


def tree_from_strategy(h: StrategyFn, n: int, x_size: int, y_size: int) -> StrategyTree:
    """Materialize a strategy function as node labels (bijective for depth n)."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    nc = node_count(n, y_size)
    if nc > MAX_LEAVES:
        raise DepthOverflow(f"tree would need {nc} nodes (cap {MAX_LEAVES})")
    labels = np.empty(nc, dtype=np.int64)
    i = 0
    for k in range(n):
        for prefix in itertools.product(range(y_size), repeat=k):
            x = int(h(k + 1, prefix))
            if not 0 <= x < x_size:
                raise LabelOutOfAlphabet(f"strategy emitted {x} at prefix {prefix}")
            labels[i] = x
            i += 1
    return StrategyTree(n, x_size, y_size, labels)


@dataclass(frozen=True)
class TreeStrategy:
    """Strategy function view of a tree: (k, y^{k-1}) -> input symbol."""

    tree: StrategyTree

    def __call__(self, k: int, y_prefix: Sequence[int]) -> int:
        if k != len(y_prefix) + 1:
            raise ValueError("step index must equal prefix length + 1")
        if k > self.tree.n:
            raise PathTooLong(f"step {k} beyond tree depth {self.tree.n}")
        return self.tree.label_on_path(y_prefix)


def strategy_from_tree(tree: StrategyTree) -> TreeStrategy:
    return TreeStrategy(tree)


@dataclass(frozen=True)
class ThresholdStrategy:
    """Probe with input `a` until the running score magnitude strictly
    exceeds the threshold, then emit `fallback` for the rest of the block
    (the score is frozen from that point on, already a success).

    Continuing on the boundary |s| = threshold matters: a boundary score is
    not yet a success, and another probe can push it strictly outside, so
    stopping there would forfeit probability.
    """

    a: int
    b: int
    p_ab: float
    threshold: float
    fallback: int

    def __call__(self, k: int, y_prefix: Sequence[int]) -> int:
        if k != len(y_prefix) + 1:
            raise ValueError("step index must equal prefix length + 1")
        s = 0.0
        for y in y_prefix:
            if abs(s) <= self.threshold:
                s += (1.0 if y == self.b else 0.0) - self.p_ab
        return self.a if abs(s) <= self.threshold else self.fallback


def smallest_other_symbol(a: int, x_size: int) -> int:
    if x_size < 2:
        raise SingletonInputAlphabet("need at least two input symbols")
    return 0 if a != 0 else 1


def optimal_strategy(n: int, p: ScoreParams) -> ThresholdStrategy:
    """The success-probability maximizer in functional form (any depth)."""
    fallback = smallest_other_symbol(p.a, p.dmc.num_inputs)
    return ThresholdStrategy(p.a, p.b, p.p_ab, p.threshold(n), fallback)


def _scores_and_probs(labels2d: np.ndarray, n: int, y_size: int,
                      dmc: Dmc, a: int, b: int):
    """Leaf scores and path probabilities for a batch of label arrays.

    Returns two (batch, Y**n) arrays; accumulation runs level by level so
    each path's score is the same left-to-right float sum a sequential walk
    would produce.
    """
    rows = dmc.matrix
    p_ab = float(rows[a, b])
    step = (np.arange(y_size) == b).astype(np.float64) - p_ab
    m = labels2d.shape[0]
    scores = np.zeros((m, 1))
    probs = np.ones((m, 1))
    offset = 0
    for k in range(n):
        width = y_size**k
        lab = labels2d[:, offset : offset + width]
        contrib = np.where((lab == a)[:, :, None], step[None, None, :], 0.0)
        scores = (scores[:, :, None] + contrib).reshape(m, width * y_size)
        probs = (probs[:, :, None] * rows[lab]).reshape(m, width * y_size)
        offset += width
    return scores, probs


def _check_total_probability(probs: np.ndarray) -> None:
    totals = probs.sum(axis=1)
    worst = float(np.max(np.abs(totals - 1.0)))
    if worst > _TOTAL_PROB_TOL:
        raise ChanprobeError(f"leaf probabilities sum to 1 += {worst:.3e}")


def leaf_scores_and_probabilities(tree: StrategyTree, p: ScoreParams):
    """Per-leaf (score, probability) arrays in leaf-index order."""
    if tree.num_leaves > MAX_LEAVES:
        raise DepthOverflow(f"{tree.num_leaves} leaves exceed cap {MAX_LEAVES}")
    scores, probs = _scores_and_probs(
        tree.labels[None, :], tree.n, tree.y_size, p.dmc, p.a, p.b
    )
    _check_total_probability(probs)
    return scores[0], probs[0]


def score(tree: StrategyTree, ys: Sequence[int], p: ScoreParams) -> float:
    """Running score after observing the (possibly partial) output path ys."""
    if len(ys) > tree.n:
        raise PathTooLong(f"path of length {len(ys)} on a depth-{tree.n} tree")
    s = 0.0
    v = 0
    for y in ys:
        if not 0 <= y < tree.y_size:
            raise SymbolOutOfRange(f"output {y} not in alphabet of size {tree.y_size}")
        if tree.labels[v] == p.a:
            s += (1.0 if y == p.b else 0.0) - p.p_ab
        v = child_index(v, y, tree.y_size)
    return s


def success_set(tree: StrategyTree, p: ScoreParams) -> np.ndarray:
    """Leaf indices whose final score magnitude strictly exceeds n*mu."""
    scores, _ = leaf_scores_and_probabilities(tree, p)
    return np.flatnonzero(np.abs(scores) > p.threshold(tree.n))


def success_probability(tree: StrategyTree, p: ScoreParams) -> float:
    """Channel-law probability mass of the success leaves."""
    scores, probs = leaf_scores_and_probabilities(tree, p)
    return float(probs[np.abs(scores) > p.threshold(tree.n)].sum())


def optimal_tree(n: int, p: ScoreParams, x_size: int | None = None) -> StrategyTree:
    """Threshold walk: label a node `a` iff the score of the path into it has
    magnitude at most n*mu, else the smallest other symbol.

    The boundary continues probing: a score sitting exactly on n*mu is not a
    success (success needs strict excess), and one more probe can push it
    strictly outside. Stopping there loses probability whenever the walk can
    hit the threshold exactly, so the boundary-continuing rule is the one
    that matches the exhaustive maximum.
    """
    if x_size is None:
        x_size = p.dmc.num_inputs
    fallback = smallest_other_symbol(p.a, x_size)
    y_size = p.dmc.num_outputs
    nc = node_count(n, y_size)
    if nc > MAX_LEAVES:
        raise DepthOverflow(f"tree would need {nc} nodes (cap {MAX_LEAVES})")
    thr = p.threshold(n)
    step = (np.arange(y_size) == p.b).astype(np.float64) - p.p_ab
    levels = []
    scores = np.zeros(1)
    for _ in range(n):
        lab = np.where(np.abs(scores) <= thr, p.a, fallback)
        levels.append(lab)
        contrib = np.where(lab[:, None] == p.a, step[None, :], 0.0)
        scores = (scores[:, None] + contrib).ravel()
    return StrategyTree(n, x_size, y_size, np.concatenate(levels))


def enumerate_trees(n: int, x_size: int, y_size: int) -> Iterator[StrategyTree]:
    """All label assignments in lexicographic order (root most significant)."""
    nc = node_count(n, y_size)
    total = x_size**nc
    if total > MAX_TREES:
        raise EnumerationTooLarge(f"{total} trees exceed cap {MAX_TREES}")
    for combo in itertools.product(range(x_size), repeat=nc):
        yield StrategyTree(n, x_size, y_size, np.array(combo, dtype=np.int64))


def _decode_tree_indices(idx: np.ndarray, nc: int, x_size: int) -> np.ndarray:
    pows = x_size ** np.arange(nc - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // pows[None, :]) % x_size


def _tree_block_argmax(payload) -> tuple[float, int]:
    start, stop, n, x_size, y_size, dmc, a, b, mu = payload
    idx = np.arange(start, stop, dtype=np.int64)
    labels2d = _decode_tree_indices(idx, node_count(n, y_size), x_size)
    scores, probs = _scores_and_probs(labels2d, n, y_size, dmc, a, b)
    _check_total_probability(probs)
    values = np.where(np.abs(scores) > n * mu, probs, 0.0).sum(axis=1)
    j = int(np.argmax(values))
    return float(values[j]), start + j


def exhaustive_max_success(
    n: int,
    p: ScoreParams,
    x_size: int | None = None,
    workers: int = 1,
) -> tuple[StrategyTree, float]:
    """Brute-force argmax of the success probability over every labeling.

    Ties go to the first tree in lexicographic enumeration order. This is
    the exact oracle the threshold-walk construction is checked against.
    """
    if x_size is None:
        x_size = p.dmc.num_inputs
    y_size = p.dmc.num_outputs
    nc = node_count(n, y_size)
    total = x_size**nc
    if total > MAX_TREES:
        raise EnumerationTooLarge(f"{total} trees exceed cap {MAX_TREES}")
    if y_size**n > MAX_LEAVES:
        raise DepthOverflow(f"{y_size**n} leaves exceed cap {MAX_LEAVES}")
    payloads = [
        (start, min(start + _TREE_BLOCK, total), n, x_size, y_size, p.dmc, p.a, p.b, p.mu)
        for start in range(0, total, _TREE_BLOCK)
    ]
    if workers > 1 and len(payloads) > 1:
        with get_context().Pool(workers) as pool:
            results = pool.map(_tree_block_argmax, payloads)
    else:
        results = [_tree_block_argmax(pl) for pl in payloads]
    best_value, best_index = -1.0, -1
    for value, index in results:
        if value > best_value:
            best_value, best_index = value, index
    labels = _decode_tree_indices(np.array([best_index], dtype=np.int64), nc, x_size)[0]
    return StrategyTree(n, x_size, y_size, labels), best_value


# ---------------------------------------------------------------------------
# tree files: "tree n |X| |Y|" then the breadth-first label list
# ---------------------------------------------------------------------------


def format_tree(tree: StrategyTree) -> str:
    head = f"tree {tree.n} {tree.x_size} {tree.y_size}"
    return head + "\n" + " ".join(str(int(v)) for v in tree.labels) + "\n"


def parse_tree(text: str) -> StrategyTree:
    tokens = [
        line.split("#", 1)[0].split()
        for line in text.splitlines()
        if line.split("#", 1)[0].strip()
    ]
    if len(tokens) < 2 or tokens[0][:1] != ["tree"] or len(tokens[0]) != 4:
        raise ChanprobeError("expected 'tree n |X| |Y|' header and a label line")
    try:
        n, x_size, y_size = (int(t) for t in tokens[0][1:])
        labels = [int(t) for line in tokens[1:] for t in line]
    except ValueError:
        raise ChanprobeError("non-integer entry in tree file") from None
    return StrategyTree(n, x_size, y_size, np.array(labels, dtype=np.int64))


def load_tree(path) -> StrategyTree:
    return parse_tree(Path(path).read_text())


def save_tree(tree: StrategyTree, path) -> None:
    Path(path).write_text(format_tree(tree))
