"""Per-year bank x variable matrices of total-assets-normalized ratios."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import TOTAL_ASSETS, BankPanel
from .io import write_table

logger = logging.getLogger(__name__)


@dataclass
class FeatureMatrix:
    """Ratios for one fiscal year.

    Missing entries are stored as 0 with ``presence_mask`` False, so they add
    nothing to dot products. ``total_assets`` keeps the size proxy that was
    divided out; its own column is left out of ``values``.
    """

    year: int
    bank_ids: list[str]
    variable_codes: list[str]
    values: np.ndarray
    presence_mask: np.ndarray
    total_assets: np.ndarray

    def __post_init__(self):
        shape = (len(self.bank_ids), len(self.variable_codes))
        if self.values.shape != shape or self.presence_mask.shape != shape:
            raise ValueError(f"matrix shape {self.values.shape} does not match labels {shape}")

    @property
    def n_banks(self) -> int:
        return len(self.bank_ids)

    def row(self, bank_id: str) -> np.ndarray:
        return self.values[self.bank_ids.index(bank_id)]


def build_feature_matrix(
    panels: Iterable[BankPanel],
    year: int,
    size_code: str = TOTAL_ASSETS,
    include_size: bool = False,
) -> FeatureMatrix:
    """Divide every variable of every bank by that bank's total assets.

    Banks without a statement for ``year`` are skipped silently; banks whose
    total assets are missing or non-positive, and banks left with an all-zero
    row, are skipped with a warning. Columns are the sorted union of codes
    observed that year.
    """
    rows: list[tuple[str, dict[str, float], float]] = []
    for p in sorted(panels, key=lambda p: p.bank_id):
        stmt = p.years.get(year)
        if stmt is None:
            continue
        ta = stmt.get(size_code)
        if ta is None or not math.isfinite(ta) or ta <= 0:
            logger.warning("%s %d: total assets missing or non-positive; bank-year excluded", p.bank_id, year)
            continue
        rows.append((p.bank_id, stmt, ta))

    codes = sorted(
        {c for _, stmt, _ in rows for c in stmt if include_size or c != size_code}
    )
    col = {c: j for j, c in enumerate(codes)}
    values = np.zeros((len(rows), len(codes)))
    mask = np.zeros((len(rows), len(codes)), dtype=bool)
    for i, (_, stmt, ta) in enumerate(rows):
        for c, v in stmt.items():
            j = col.get(c)
            if j is not None and math.isfinite(v):
                values[i, j] = v / ta
                mask[i, j] = True

    keep = np.any(values != 0.0, axis=1) if codes else np.zeros(len(rows), dtype=bool)
    for i in np.flatnonzero(~keep):
        logger.warning("%s %d: feature row is entirely zero; bank-year excluded", rows[i][0], year)
    return FeatureMatrix(
        year=year,
        bank_ids=[rows[i][0] for i in np.flatnonzero(keep)],
        variable_codes=codes,
        values=values[keep],
        presence_mask=mask[keep],
        total_assets=np.array([rows[i][2] for i in np.flatnonzero(keep)], dtype=float),
    )


def popular_variables(matrices: Sequence[FeatureMatrix], presence_fraction: float) -> set[str]:
    """Codes observed in at least ``presence_fraction`` of all bank-years."""
    if not 0.0 < presence_fraction <= 1.0:
        raise ValueError("presence_fraction must lie in (0, 1]")
    total = sum(m.n_banks for m in matrices)
    if total == 0:
        return set()
    counts: dict[str, int] = {}
    for m in matrices:
        for code, n in zip(m.variable_codes, m.presence_mask.sum(axis=0)):
            counts[code] = counts.get(code, 0) + int(n)
    return {c for c, n in counts.items() if n / total >= presence_fraction}


def write_feature_matrix(matrix: FeatureMatrix, path: str | os.PathLike):
    rows = (
        [bank] + [float(v) for v in matrix.values[i]]
        for i, bank in enumerate(matrix.bank_ids)
    )
    return write_table(path, ["bank_id", *matrix.variable_codes], rows)
