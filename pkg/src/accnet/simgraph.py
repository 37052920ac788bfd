"""Cosine-similarity graphs with a permutation significance filter."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import UndefinedSimilarityError, ValidationError
from .features import FeatureMatrix
from .io import read_table, write_table

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 1000
DEFAULT_ALPHA = 0.05
DEFAULT_PRUNE = 0.4
FRAGMENTATION_FRACTION = 0.95
_COSINE_SLACK = 1e-9
# rounding noise on a cosine; parallel rows land within this of +/-1
_COSINE_EPS = 1e-12


@dataclass
class SimilarityGraph:
    """Weighted undirected graph over banks, stored as dense symmetric arrays.

    ``edge_mask[i, j]`` marks an edge; ``cosine`` and ``weight`` are only
    meaningful where it is set. The diagonal is always empty.
    """

    year: int
    nodes: list[str]
    cosine: np.ndarray
    weight: np.ndarray
    edge_mask: np.ndarray
    significant: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.significant is None:
            self.significant = self.edge_mask.copy()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.edge_mask, 1)))

    def index(self, node: str) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise KeyError(f"node {node!r} not in graph {self.year}") from None

    def adjacency(self) -> np.ndarray:
        """Weight matrix with zeros where there is no edge."""
        return np.where(self.edge_mask, self.weight, 0.0)

    def edges(self) -> Iterator[tuple[str, str, float, float, bool]]:
        ii, jj = np.nonzero(np.triu(self.edge_mask, 1))
        for i, j in zip(ii, jj):
            yield (
                self.nodes[i],
                self.nodes[j],
                float(self.cosine[i, j]),
                float(self.weight[i, j]),
                bool(self.significant[i, j]),
            )

    def largest_component_fraction(self) -> float:
        if self.n_nodes == 0:
            return 0.0
        _, labels = connected_components(csr_matrix(self.edge_mask), directed=False)
        return float(np.bincount(labels).max() / self.n_nodes)


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise UndefinedSimilarityError("cosine similarity undefined for a zero-norm vector")
    return float(_snap(np.dot(u, v) / (nu * nv)))


def _snap(c):
    """Clip to [-1, 1] and round values within rounding noise of +/-1 onto them."""
    c = np.clip(c, -1.0, 1.0)
    return np.where(np.abs(c) > 1.0 - _COSINE_EPS, np.sign(c), c)


def metric_weight(cosine):
    """Map a cosine in [-1, 1] to the edge weight ``1 - sqrt(1 - c**2)``.

    Accepts scalars or arrays. Values up to 1e-9 past +/-1 are clamped.
    """
    c = np.asarray(cosine, dtype=float)
    if np.any(np.abs(c) > 1.0 + _COSINE_SLACK):
        raise ValidationError("cosine outside [-1, 1]")
    c = np.clip(c, -1.0, 1.0)
    w = 1.0 - np.sqrt(1.0 - c * c)
    return float(w) if w.ndim == 0 else w


def pair_seed(rng_seed: int, a: str, b: str, year: int | None = None) -> int:
    """Stable per-pair seed, independent of node order and scheduling."""
    lo, hi = sorted((a, b))
    key = f"{rng_seed}\x1f{year}\x1f{lo}\x1f{hi}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def upper_quantile(sample: np.ndarray, q: float) -> float:
    """Same value as ``np.quantile(sample, q)`` (linear method), via partial sort."""
    n = sample.size
    h = (n - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, n - 1)
    part = np.partition(sample, (lo, hi))
    return float(part[lo] + (h - lo) * (part[hi] - part[lo]))


def permutation_null(u: np.ndarray, v: np.ndarray, samples: int, rng: np.random.Generator) -> np.ndarray:
    """|cosine(u, pi(v))| for ``samples`` random permutations pi."""
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    shuffled = rng.permuted(np.broadcast_to(v, (samples, v.size)), axis=1)
    return np.abs(shuffled @ u) / norm


def significance_test(
    u,
    v,
    samples: int = DEFAULT_SAMPLES,
    alpha: float = DEFAULT_ALPHA,
    rng_seed: int | np.random.Generator = 0,
) -> bool:
    """One-sided Monte Carlo test of |cosine(u, v)| against permutations of v.

    True iff the observed |cosine| strictly exceeds the ``1 - alpha`` quantile
    of the null sample.
    """
    if samples < 100:
        raise ValidationError("significance_test needs at least 100 samples")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(u) == 0 or np.linalg.norm(v) == 0:
        raise UndefinedSimilarityError("cosine similarity undefined for a zero-norm vector")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    null = permutation_null(u, v, samples, rng)
    observed = abs(v @ u) / (np.linalg.norm(u) * np.linalg.norm(v))
    # ties within rounding noise (e.g. a constant v, whose permutations are all v) are not exceedances
    return bool(observed > upper_quantile(null, 1.0 - alpha) + _COSINE_EPS)


def build_graph(
    matrix: FeatureMatrix,
    samples: int = DEFAULT_SAMPLES,
    alpha: float = DEFAULT_ALPHA,
    rng_seed: int = 0,
    keep_insignificant: bool = False,
) -> SimilarityGraph:
    """Complete cosine graph, minus the links that fail the significance test.

    Each pair draws its null sample from its own stream seeded by
    ``pair_seed(rng_seed, bank_a, bank_b, year)``.
    """
    n = matrix.n_banks
    x = matrix.values
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise UndefinedSimilarityError("feature matrix contains a zero row")
    unit = x / norms[:, None]
    cos = _snap(unit @ unit.T)
    np.fill_diagonal(cos, 1.0)
    weight = metric_weight(cos)

    sig = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            rng = np.random.default_rng(
                pair_seed(rng_seed, matrix.bank_ids[i], matrix.bank_ids[j], matrix.year)
            )
            sig[i, j] = sig[j, i] = significance_test(x[i], x[j], samples, alpha, rng)

    mask = np.ones((n, n), dtype=bool) if keep_insignificant else sig.copy()
    np.fill_diagonal(mask, False)
    return SimilarityGraph(matrix.year, list(matrix.bank_ids), cos, weight, mask, sig)


def prune(graph: SimilarityGraph, threshold: float, warn: bool = True) -> SimilarityGraph:
    """Drop edges lighter than ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError("prune threshold must lie in [0, 1]")
    pruned = replace(graph, edge_mask=graph.edge_mask & (graph.weight >= threshold))
    if warn and pruned.n_nodes and pruned.largest_component_fraction() < FRAGMENTATION_FRACTION:
        logger.warning(
            "year %s: pruning at %.3g fragments the graph (largest component %.1f%% of nodes)",
            graph.year, threshold, 100 * pruned.largest_component_fraction(),
        )
    return pruned


def is_fragmented(graph: SimilarityGraph) -> bool:
    return graph.largest_component_fraction() < FRAGMENTATION_FRACTION


# -- edge-list files ---------------------------------------------------------

EDGE_COLUMNS = ("src_bank", "dst_bank", "cosine", "weight", "significant")


def write_edge_list(graph: SimilarityGraph, path: str | os.PathLike):
    rows = ((a, b, c, w, str(s).lower()) for a, b, c, w, s in graph.edges())
    return write_table(path, EDGE_COLUMNS, rows, delimiter="\t")


def write_node_list(graph: SimilarityGraph, path: str | os.PathLike):
    return write_table(path, ["bank_id"], ([n] for n in graph.nodes), delimiter="\t")


def read_graph(edge_path, node_path, year: int) -> SimilarityGraph:
    nodes = [r["bank_id"] for r in read_table(node_path, delimiter="\t")]
    index = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    cos = np.eye(n)
    weight = np.eye(n)
    mask = np.zeros((n, n), dtype=bool)
    sig = np.zeros((n, n), dtype=bool)
    for r in read_table(edge_path, delimiter="\t"):
        i, j = index[r["src_bank"]], index[r["dst_bank"]]
        cos[i, j] = cos[j, i] = float(r["cosine"])
        weight[i, j] = weight[j, i] = float(r["weight"])
        mask[i, j] = mask[j, i] = True
        sig[i, j] = sig[j, i] = r["significant"] == "true"
    return SimilarityGraph(year, nodes, cos, weight, mask, sig)
