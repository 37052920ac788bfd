"""Scaled PCA characterization of communities.

For each community and year, measures are standardized and the correlation
matrix is eigendecomposed. Components with eigenvalue above 1 are kept, and
each measure's contribution is its communality over those components: the
share of its unit variance they explain. Contributions are averaged within
sub-periods and ranked.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_PERIODS = ((2001, 2006), (2007, 2009), (2010, 2013))
_TIE_TOL = 1e-12


@dataclass
class PcaModel:
    measure_codes: list[str]
    eigenvalues: np.ndarray
    loadings: np.ndarray
    retained: int
    dropped_constant: list[str] = field(default_factory=list)


@dataclass
class ContributionRanking:
    community_id: int
    period: tuple[int, int]
    contributions: dict[str, float]
    top3: list[tuple[str, float]]
    bottom3: list[tuple[str, float]]

    @property
    def period_label(self) -> str:
        return format_period(self.period)


def format_period(period: tuple[int, int]) -> str:
    return f"{period[0]}-{period[1]}"


def parse_periods(text: str) -> list[tuple[int, int]]:
    """Parse ``"2001-2006,2007-2009"``; a bare year is a one-year period."""
    periods = []
    for chunk in filter(None, (c.strip() for c in text.split(","))):
        lo, _, hi = chunk.partition("-")
        try:
            start, end = int(lo), int(hi or lo)
        except ValueError:
            raise ValidationError(f"bad period {chunk!r}") from None
        if end < start:
            raise ValidationError(f"period {chunk!r} ends before it starts")
        periods.append((start, end))
    return periods


def _orient(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_scaled_pca(data, measure_codes: Sequence[str]) -> PcaModel:
    """PCA on the correlation matrix of ``data`` (members x measures).

    Constant columns are dropped with a warning before fitting.

    Raises:
        InsufficientDataError: fewer than 2 members, or fewer than 2
            non-constant measures.
    """
    x = np.asarray(data, dtype=float)
    codes = list(measure_codes)
    if x.ndim != 2 or x.shape[1] != len(codes):
        raise ValidationError("data columns must match measure_codes")
    if x.shape[0] < 2:
        raise InsufficientDataError(f"PCA needs at least 2 members, got {x.shape[0]}")
    sd = x.std(axis=0)
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(x).max(axis=0))
    dropped = [c for c, k in zip(codes, constant) if k]
    if dropped:
        logger.warning("constant measure(s) dropped from PCA: %s", ", ".join(dropped))
        x = x[:, ~constant]
        codes = [c for c, k in zip(codes, constant) if not k]
    if len(codes) < 2:
        raise InsufficientDataError("PCA needs at least 2 non-constant measures")

    z = (x - x.mean(axis=0)) / x.std(axis=0)
    corr = (z.T @ z) / z.shape[0]
    corr = (corr + corr.T) / 2
    values, vectors = np.linalg.eigh(corr)
    values = np.clip(values, 0.0, None)
    vectors = _orient(vectors)

    # descending eigenvalue; near-ties ordered by the eigenvector itself
    order = sorted(
        range(len(values)),
        key=lambda k: (-round(values[k] / _TIE_TOL) * _TIE_TOL, tuple(-vectors[:, k])),
    )
    values = values[order]
    vectors = vectors[:, order]
    loadings = vectors * np.sqrt(values)
    retained = int(np.count_nonzero(values > 1.0))
    return PcaModel(codes, values, loadings, retained, dropped)


def measure_contributions(model: PcaModel, n_components: int | None = None) -> dict[str, float]:
    """Sum of squared loadings over the retained components, per measure.

    Raises:
        InsufficientDataError: no component passes the eigenvalue cut; pass
            ``n_components=1`` to fall back to the leading component.
    """
    k = model.retained if n_components is None else n_components
    if k < 1:
        raise InsufficientDataError(
            "no component has eigenvalue > 1; retry with n_components=1"
        )
    comm = np.sum(model.loadings[:, :k] ** 2, axis=1)
    return {c: float(min(max(v, 0.0), 1.0)) for c, v in zip(model.measure_codes, comm)}


def _rank(means: Mapping[str, float]) -> tuple[list[tuple[str, float]], list[tuple[str, float]]]:
    items = sorted(means.items(), key=lambda kv: (-kv[1], kv[0]))
    return items[:3], items[::-1][:3]


def period_rankings(
    yearly: Mapping[int, Mapping[int, Mapping[str, float]]],
    periods: Sequence[tuple[int, int]] = DEFAULT_PERIODS,
) -> tuple[list[ContributionRanking], list[tuple[int, str, str]]]:
    """Average yearly contributions within each period and rank them.

    ``yearly`` maps community id -> year -> measure -> contribution. A
    measure's mean is taken over the years in which it was fitted. Returns the
    rankings and a list of (community, period, reason) for skipped cells.
    """
    _check_disjoint(periods)
    rankings: list[ContributionRanking] = []
    skipped: list[tuple[int, str, str]] = []
    for community in sorted(yearly):
        by_year = yearly[community]
        for period in periods:
            years = [y for y in sorted(by_year) if period[0] <= y <= period[1]]
            if not years:
                skipped.append((community, format_period(period), "absent_in_period"))
                continue
            sums: dict[str, list[float]] = {}
            for y in years:
                for m, v in by_year[y].items():
                    sums.setdefault(m, []).append(v)
            means = {m: float(np.mean(v)) for m, v in sums.items()}
            top, bottom = _rank(means)
            rankings.append(ContributionRanking(community, period, means, top, bottom))
    return rankings, skipped


def _check_disjoint(periods: Sequence[tuple[int, int]]) -> None:
    spans = sorted(periods)
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 <= a1:
            raise ValidationError(f"periods {a0}-{a1} and {b0}-{b1} overlap")
