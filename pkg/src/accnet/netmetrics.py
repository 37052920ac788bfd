"""Node statistics, economic indicators and their yearly correlations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, UndefinedCorrelationError, ValidationError
from .ingest import TOTAL_ASSETS, BankPanel
from .simgraph import SimilarityGraph

logger = logging.getLogger(__name__)

NET_INCOME = "NET_INCOME"
TOTAL_DEBT = "BS_TOT_DEBT"
DEFAULT_PAIRS = (("strength", "leverage"), ("strength", "size"), ("clustering", "roa"))


@dataclass(frozen=True)
class NodeMetrics:
    bank_id: str
    strength: float
    clustering: float


@dataclass(frozen=True)
class EconIndicators:
    bank_id: str
    roa: float
    leverage: float
    size: float


@dataclass(frozen=True)
class CorrelationPoint:
    year: int
    x_name: str
    y_name: str
    r: float
    p_value: float
    n: int
    significant: bool


@dataclass(frozen=True)
class SkippedPoint:
    year: int
    x_name: str
    y_name: str
    reason: str


def node_strength(graph: SimilarityGraph, node: str) -> float:
    i = graph.index(node)
    return float(graph.weight[i, graph.edge_mask[i]].sum())


def clustering_coefficient(graph: SimilarityGraph, node: str) -> float:
    """Local clustering on the unweighted skeleton: 2T / (k(k-1))."""
    i = graph.index(node)
    nbrs = np.flatnonzero(graph.edge_mask[i])
    k = nbrs.size
    if k < 2:
        return 0.0
    links = np.count_nonzero(graph.edge_mask[np.ix_(nbrs, nbrs)]) / 2
    return float(2 * links / (k * (k - 1)))


def node_metrics(graph: SimilarityGraph) -> list[NodeMetrics]:
    a = graph.edge_mask.astype(float)
    strength = graph.adjacency().sum(axis=1)
    deg = a.sum(axis=1)
    triangles = np.einsum("ij,jk,ki->i", a, a, a) / 2
    possible = deg * (deg - 1) / 2
    clustering = np.divide(triangles, possible, out=np.zeros_like(triangles), where=possible > 0)
    return [
        NodeMetrics(n, float(s), float(c)) for n, s, c in zip(graph.nodes, strength, clustering)
    ]


def economic_indicators(
    panel: BankPanel,
    year: int,
    net_income_code: str = NET_INCOME,
    total_debt_code: str = TOTAL_DEBT,
    size_code: str = TOTAL_ASSETS,
) -> EconIndicators | None:
    """ROA, leverage and size for one bank-year; ``nan`` where an input is missing.

    Returns None when total assets are missing or non-positive.
    """
    stmt = panel.years.get(year)
    if stmt is None:
        return None
    ta = stmt.get(size_code, math.nan)
    if not ta > 0:
        return None
    return EconIndicators(
        panel.bank_id,
        stmt.get(net_income_code, math.nan) / ta,
        stmt.get(total_debt_code, math.nan) / ta,
        ta,
    )


def pearson_with_test(x, y, alpha: float = 0.05, year: int = 0, x_name: str = "x", y_name: str = "y") -> CorrelationPoint:
    """Sample Pearson r with a two-sided t-test on n - 2 degrees of freedom."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be aligned 1-d series")
    n = x.size
    if n < 3:
        raise InsufficientDataError(f"pearson test needs n >= 3, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant series")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1 - r * r))
        p = float(min(1.0, 2 * stats.t.sf(abs(t), n - 2)))
    return CorrelationPoint(year, x_name, y_name, r, p, n, p < alpha)


def _series(name: str, metrics: Mapping[str, NodeMetrics], econ: Mapping[str, EconIndicators]) -> dict[str, float]:
    if name in ("strength", "clustering"):
        return {b: getattr(m, name) for b, m in metrics.items()}
    if name in ("roa", "leverage", "size"):
        return {b: getattr(e, name) for b, e in econ.items()}
    raise ValidationError(f"unknown series {name!r}")


def yearly_correlation_series(
    graphs: Mapping[int, SimilarityGraph],
    indicators: Mapping[int, Iterable[EconIndicators]],
    pairs: Sequence[tuple[str, str]] = DEFAULT_PAIRS,
    alpha: float = 0.05,
) -> tuple[list[CorrelationPoint], list[SkippedPoint]]:
    """One correlation point per (year, pair) over the banks present in both.

    Banks lacking either value are dropped for that pair only. Years where
    the test is undefined come back as skipped points with a reason.
    """
    points: list[CorrelationPoint] = []
    skipped: list[SkippedPoint] = []
    for year in sorted(graphs):
        metrics = {m.bank_id: m for m in node_metrics(graphs[year])}
        econ = {e.bank_id: e for e in indicators.get(year, ())}
        for x_name, y_name in pairs:
            xs, ys = _series(x_name, metrics, econ), _series(y_name, metrics, econ)
            banks = sorted(
                b for b in xs.keys() & ys.keys() if math.isfinite(xs[b]) and math.isfinite(ys[b])
            )
            try:
                points.append(
                    pearson_with_test(
                        [xs[b] for b in banks], [ys[b] for b in banks], alpha, year, x_name, y_name
                    )
                )
            except InsufficientDataError:
                skipped.append(SkippedPoint(year, x_name, y_name, "insufficient_sample"))
            except UndefinedCorrelationError:
                skipped.append(SkippedPoint(year, x_name, y_name, "constant_series"))
    return points, skipped
