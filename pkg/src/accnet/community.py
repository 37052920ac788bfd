"""Weighted modularity and Louvain community detection.

Modularity uses the ordered-pair convention::

    Q = 1/(2W) * sum_ij (w_ij - s_i s_j / (2W)) * delta(c_i, c_j)

where ``2W = sum_ij w_ij`` over ordered pairs and ``s_i`` is the strength
of node i. The whole graph as one community scores exactly 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import UndefinedModularityError, ValidationError
from .simgraph import SimilarityGraph, is_fragmented, prune

logger = logging.getLogger(__name__)

MIN_LEVEL_GAIN = 1e-10
_MOVE_EPS = 1e-14


@dataclass
class Partition:
    assignment: dict[str, int]
    modularity: float
    threshold_used: float = 0.0

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))

    def labels(self, nodes: Sequence[str]) -> np.ndarray:
        return np.array([self.assignment[n] for n in nodes], dtype=int)

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for node, c in self.assignment.items():
            out.setdefault(c, []).append(node)
        return out


def modularity_matrix(adjacency: np.ndarray, labels: Sequence[int]) -> float:
    """Modularity of integer ``labels`` over a symmetric weight matrix."""
    a = np.asarray(adjacency, dtype=float)
    labels = np.asarray(labels)
    total = a.sum()
    if not total > 0:
        raise UndefinedModularityError("modularity undefined for a graph with zero total weight")
    _, dense = np.unique(labels, return_inverse=True)
    k = dense.max() + 1 if dense.size else 0
    h = np.zeros((len(dense), k))
    h[np.arange(len(dense)), dense] = 1.0
    inner = np.einsum("ic,ij,jc->c", h, a, h)
    tot = h.T @ a.sum(axis=1)
    return float(np.sum(inner / total - (tot / total) ** 2))


def eval_modularity(graph: SimilarityGraph, assignment: Mapping[str, int]) -> float:
    missing = [n for n in graph.nodes if n not in assignment]
    if missing:
        raise ValidationError(f"assignment lacks {len(missing)} node(s), e.g. {missing[0]!r}")
    return modularity_matrix(graph.adjacency(), [assignment[n] for n in graph.nodes])


def _dense_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    remap: dict[int, int] = {}
    return np.array([remap.setdefault(int(c), len(remap)) for c in labels], dtype=int)


def _one_level(a: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Local-moving phase on a (possibly self-looped) weight matrix.

    Returns community labels per node and whether any node moved.
    """
    n = a.shape[0]
    two_w = a.sum()
    k = a.sum(axis=1)
    labels = np.arange(n)
    tot = k.copy()
    order = rng.permutation(n)
    nbrs = [np.flatnonzero((a[i] > 0) & (np.arange(n) != i)) for i in range(n)]
    moved_any = False
    while True:
        level_gain = 0.0
        moves = 0
        for i in order:
            old = labels[i]
            tot[old] -= k[i]
            links = np.bincount(labels[nbrs[i]], weights=a[i, nbrs[i]], minlength=n)
            candidates = np.union1d(labels[nbrs[i]], [old])
            # gain of joining c, up to the common factor 1/W
            gains = links[candidates] - tot[candidates] * k[i] / two_w
            best = candidates[int(np.argmax(gains))]  # argmax returns the lowest label on ties
            old_gain = gains[np.searchsorted(candidates, old)]
            if gains.max() > old_gain + _MOVE_EPS:
                labels[i] = best
                level_gain += (gains.max() - old_gain) / (two_w / 2)
                moves += 1
            tot[labels[i]] += k[i]
        if moves:
            moved_any = True
        if moves == 0 or level_gain < MIN_LEVEL_GAIN:
            break
    return labels, moved_any


def louvain_labels(adjacency: np.ndarray, rng_seed: int | None = 0) -> np.ndarray:
    """Louvain on a dense symmetric weight matrix; returns dense labels."""
    a = np.asarray(adjacency, dtype=float)
    if not a.sum() > 0:
        raise UndefinedModularityError("modularity undefined for a graph with zero total weight")
    rng = np.random.default_rng(rng_seed)
    membership = np.arange(a.shape[0])
    while True:
        labels, moved = _one_level(a, rng)
        if not moved:
            break
        labels = _dense_by_first_appearance(labels)
        membership = labels[membership]
        h = np.zeros((a.shape[0], labels.max() + 1))
        h[np.arange(a.shape[0]), labels] = 1.0
        a = h.T @ a @ h
        if a.shape[0] == 1:
            break
    return _dense_by_first_appearance(membership)


def louvain(graph: SimilarityGraph, rng_seed: int | None = 0, threshold_used: float = 0.0) -> Partition:
    """Greedy two-phase modularity maximization.

    Node visiting order is shuffled once per level from ``rng_seed``; among
    equally good target communities the lowest label wins, and a node only
    moves when the gain strictly beats staying. Labels in the result are
    numbered by first appearance in ``graph.nodes``.
    """
    adjacency = graph.adjacency()
    labels = louvain_labels(adjacency, rng_seed)
    assignment = {n: int(c) for n, c in zip(graph.nodes, labels)}
    q = modularity_matrix(adjacency, labels)
    return Partition(assignment, q, threshold_used)


@dataclass
class SweepResult:
    threshold: float
    partition: Partition
    fragmented: bool
    largest_component_fraction: float


def threshold_sweep(
    graph: SimilarityGraph, thresholds: Sequence[float], rng_seed: int | None = 0
) -> list[SweepResult]:
    """Prune at each threshold and run Louvain on what is left.

    A threshold that removes every edge yields the singleton partition with
    modularity ``nan``.
    """
    if list(thresholds) != sorted(thresholds):
        raise ValidationError("sweep thresholds must be ascending")
    results = []
    for t in thresholds:
        pruned = prune(graph, t, warn=False)
        fraction = pruned.largest_component_fraction()
        fragmented = is_fragmented(pruned)
        if fragmented and pruned.n_nodes:
            logger.warning(
                "year %s: pruning at %.3g fragments the graph (largest component %.1f%% of nodes)",
                graph.year, t, 100 * fraction,
            )
        if pruned.n_edges == 0 or not pruned.adjacency().sum() > 0:
            part = Partition({n: i for i, n in enumerate(pruned.nodes)}, math.nan, t)
        else:
            part = louvain(pruned, rng_seed, threshold_used=t)
        results.append(SweepResult(float(t), part, fragmented, fraction))
    return results


def align_communities(reference: Mapping[str, int], current: Mapping[str, int], next_id: int) -> tuple[dict[str, int], int]:
    """Relabel ``current`` to track communities of ``reference`` over time.

    Communities are matched one-to-one to maximize shared members; unmatched
    ones (and those sharing nobody) receive fresh ids from ``next_id``.
    Returns the relabeled assignment and the next unused id.
    """
    cur_ids = sorted(set(current.values()))
    ref_ids = sorted(set(reference.values()))
    mapping: dict[int, int] = {}
    if cur_ids and ref_ids:
        overlap = np.zeros((len(cur_ids), len(ref_ids)))
        ci = {c: i for i, c in enumerate(cur_ids)}
        ri = {r: j for j, r in enumerate(ref_ids)}
        for node, c in current.items():
            if node in reference:
                overlap[ci[c], ri[reference[node]]] += 1
        rows, cols = linear_sum_assignment(-overlap)
        for r, c in zip(rows, cols):
            if overlap[r, c] > 0:
                mapping[cur_ids[r]] = ref_ids[c]
    for c in cur_ids:
        if c not in mapping:
            mapping[c] = next_id
            next_id += 1
    return {node: mapping[c] for node, c in current.items()}, next_id
