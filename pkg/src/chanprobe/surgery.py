"""Tree surgery toward well-ordered strategies.

A tree is well-ordered for the watched input `a` when no node labeled
otherwise has a descendant labeled `a`. Surgery fixes a violation at a node
v (labeled some other symbol) by replacing v's whole subtree with a deepened
copy of the subtree hanging below one of v's children: the copy keeps its
interior labels, its old leaf positions become nodes labeled like v, and a
fresh layer of leaves is attached. Averaging the resulting success
probability over the child choice, weighted by the channel row of v's
label, reproduces the original tree's success probability exactly, so the
best realization never loses probability. Iterating from the breadth-first
first violating node drives any tree to a well-ordered one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AlreadyWellOrdered,
    ChanprobeError,
    InvalidSite,
    SymbolOutOfRange,
)
from .trees import (
    ScoreParams,
    StrategyTree,
    child_index,
    level_start,
    node_depth,
    parent_index,
    success_probability,
)


def _has_watched_below(tree: StrategyTree, a: int) -> np.ndarray:
    """flags[v] is true when some strict labeled descendant of v carries `a`."""
    y = tree.y_size
    flags = np.zeros(tree.num_nodes, dtype=bool)
    labels = tree.labels
    for k in range(tree.n - 2, -1, -1):
        cs, ce = level_start(k + 1, y), level_start(k + 2, y)
        child_hit = (labels[cs:ce].reshape(-1, y) == a) | flags[cs:ce].reshape(-1, y)
        flags[level_start(k, y) : cs] = child_hit.any(axis=1)
    return flags


def _ancestors_all_watched(tree: StrategyTree, a: int) -> np.ndarray:
    """flags[v] is true when every strict ancestor of v is labeled `a`."""
    y = tree.y_size
    flags = np.ones(tree.num_nodes, dtype=bool)
    labels = tree.labels
    for k in range(tree.n - 1):
        ps, pe = level_start(k, y), level_start(k + 1, y)
        good_parent = flags[ps:pe] & (labels[ps:pe] == a)
        flags[pe : level_start(k + 2, y)] = np.repeat(good_parent, y)
    return flags


def is_well_ordered(tree: StrategyTree, a: int) -> bool:
    """True iff no node labeled other than `a` has a descendant labeled `a`."""
    below = _has_watched_below(tree, a)
    return not bool(np.any((tree.labels != a) & below))


@dataclass(frozen=True)
class SurgerySite:
    """A node eligible for subtree replacement.

    The node is labeled something other than `a`, every ancestor is labeled
    `a`, and either some descendant carries `a` (the violations surgery can
    repair) or the node sits on the deepest labeled level, where replacement
    degenerates to the identity.
    """

    tree: StrategyTree
    node: int
    a: int

    def __post_init__(self):
        tree, v, a = self.tree, self.node, self.a
        if not 0 <= v < tree.num_nodes:
            raise InvalidSite(f"node {v} out of range")
        if not 0 <= a < tree.x_size:
            raise SymbolOutOfRange(f"input {a} not in alphabet of size {tree.x_size}")
        if tree.labels[v] == a:
            raise InvalidSite(f"node {v} is labeled the watched symbol {a}")
        u = v
        while u != 0:
            u = parent_index(u, tree.y_size)
            if tree.labels[u] != a:
                raise InvalidSite(f"ancestor {u} of node {v} is not labeled {a}")
        if self.depth < tree.n - 1 and not _has_watched_below(tree, a)[v]:
            raise InvalidSite(f"no descendant of node {v} is labeled {a}")

    @property
    def depth(self) -> int:
        return node_depth(self.node, self.tree.y_size)

    @property
    def displaced_label(self) -> int:
        """The non-watched label currently on the node."""
        return int(self.tree.labels[self.node])


def find_surgery_sites(tree: StrategyTree, a: int) -> list[SurgerySite]:
    """Repairable sites in breadth-first order; empty iff well-ordered.

    Deepest-level degenerate sites are excluded because replacing them
    changes nothing.
    """
    mask = (
        (tree.labels != a)
        & _ancestors_all_watched(tree, a)
        & _has_watched_below(tree, a)
    )
    return [SurgerySite(tree, int(v), a) for v in np.flatnonzero(mask)]


def _subtree_levels(tree: StrategyTree, v: int) -> list[np.ndarray]:
    """Global node indices of v's subtree, one array per relative depth."""
    y = tree.y_size
    levels = [np.array([v], dtype=np.int64)]
    depth = node_depth(v, y)
    for _ in range(tree.n - 1 - depth):
        prev = levels[-1]
        kids = prev[:, None] * y + 1 + np.arange(y, dtype=np.int64)[None, :]
        levels.append(kids.ravel())
    return levels


def augmented_subtree(site: SurgerySite, y: int) -> StrategyTree:
    """Deepened copy of the subtree below site's child along edge y.

    The copy keeps the child subtree's interior labels one level shallower
    and gains a full frontier level labeled with the site's displaced
    symbol, so its depth is n minus the site's depth: one more than the
    child subtree's.
    """
    tree = site.tree
    ys = tree.y_size
    if not 0 <= y < ys:
        raise SymbolOutOfRange(f"output {y} not in alphabet of size {ys}")
    depth = site.depth
    result_depth = tree.n - depth
    atilde = site.displaced_label
    pieces = []
    if result_depth > 1:
        child_levels = _subtree_levels(tree, child_index(site.node, y, ys))
        pieces = [tree.labels[idx] for idx in child_levels]
    frontier = np.full(ys ** (result_depth - 1), atilde, dtype=np.int64)
    labels = np.concatenate([*pieces, frontier])
    return StrategyTree(result_depth, tree.x_size, ys, labels)


def replacement_realization(site: SurgerySite, y: int) -> StrategyTree:
    """Full-depth tree with the site's subtree swapped for augmented_subtree;
    all labels outside that subtree are untouched."""
    aug = augmented_subtree(site, y)
    tree = site.tree
    new_labels = np.array(tree.labels)
    ys = tree.y_size
    for rel, idx in enumerate(_subtree_levels(tree, site.node)):
        start, stop = level_start(rel, ys), level_start(rel + 1, ys)
        new_labels[idx] = aug.labels[start:stop]
    return StrategyTree(tree.n, tree.x_size, ys, new_labels)


def expected_replacement_success(site: SurgerySite, p: ScoreParams) -> float:
    """Average success probability over the replacement choice, weighted by
    the channel row of the displaced label. Equals the success probability
    of the unmodified tree exactly (up to float roundoff)."""
    row = p.dmc.row(site.displaced_label)
    return float(
        sum(
            row[y] * success_probability(replacement_realization(site, y), p)
            for y in range(site.tree.y_size)
        )
    )


def well_order_step(tree: StrategyTree, p: ScoreParams) -> StrategyTree:
    """One surgery at the breadth-first first repairable site, keeping the
    realization with the largest success probability (ties: smallest y).

    The result never loses more than float roundoff relative to the input,
    since the best realization is at least the average.
    """
    sites = find_surgery_sites(tree, p.a)
    if not sites:
        raise AlreadyWellOrdered("every watched label already sits below watched nodes")
    site = sites[0]
    best_tree, best_value = None, -1.0
    for y in range(tree.y_size):
        candidate = replacement_realization(site, y)
        value = success_probability(candidate, p)
        if value > best_value:
            best_tree, best_value = candidate, value
    return best_tree


def well_order(tree: StrategyTree, p: ScoreParams, max_steps: int | None = None):
    """Iterate well_order_step until the tree is well-ordered.

    Returns (tree, steps). `max_steps` defaults to the node count, which the
    exhaustive audits confirm is enough.
    """
    if max_steps is None:
        max_steps = tree.num_nodes
    steps = 0
    while not is_well_ordered(tree, p.a):
        if steps >= max_steps:
            raise ChanprobeError(f"surgery did not terminate in {max_steps} steps")
        tree = well_order_step(tree, p)
        steps += 1
    return tree, steps
