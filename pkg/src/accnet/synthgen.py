"""Seeded synthetic statement panels with planted bank groups."""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import date

import numpy as np

from .errors import ValidationError
from .ingest import TOTAL_ASSETS, StatementRecord, write_statements
from .io import write_table
from .netmetrics import NET_INCOME, TOTAL_DEBT

COUNTRIES = ("US", "JP", "DE", "GB", "FR", "IT", "ES", "CH", "IN", "BR")


@dataclass
class SyntheticSpec:
    """Generator parameters.

    ``missing_rate_jitter`` widens the per-bank missing rate to
    ``missing_rate +/- jitter`` so that Quality Ratios spread across banks;
    the default 0 gives every bank the same rate.
    """

    n_banks: int = 60
    n_groups: int = 3
    n_variables: int = 20
    start_year: int = 2001
    end_year: int = 2013
    within_noise: float = 0.05
    between_separation: float = 1.0
    missing_rate: float = 0.05
    size_log_range: tuple[float, float] = (8.0, 12.0)
    rng_seed: int = 0
    missing_rate_jitter: float = 0.0

    def validate(self) -> None:
        if self.n_banks < 1 or self.n_groups < 1 or self.n_groups > self.n_banks:
            raise ValidationError("need 1 <= n_groups <= n_banks")
        if self.n_variables < 2:
            raise ValidationError("need at least 2 variables (total debt and net income)")
        if self.end_year < self.start_year:
            raise ValidationError("end_year precedes start_year")
        if self.within_noise < 0 or self.between_separation < 0:
            raise ValidationError("noise and separation must be nonnegative")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValidationError("missing_rate must lie in [0, 1)")
        if self.missing_rate_jitter < 0:
            raise ValidationError("missing_rate_jitter must be nonnegative")
        lo, hi = self.size_log_range
        if hi < lo:
            raise ValidationError("size_log_range must be (low, high)")

    @property
    def years(self) -> range:
        return range(self.start_year, self.end_year + 1)

    @property
    def variable_codes(self) -> list[str]:
        return [TOTAL_DEBT, NET_INCOME] + [f"VAR_{k:02d}" for k in range(2, self.n_variables)]


@dataclass
class GroundTruth:
    groups: dict[str, int]
    quality_ratio: dict[str, float]


def generate(spec: SyntheticSpec) -> tuple[list[StatementRecord], GroundTruth]:
    """Draw a panel whose ratio vectors cluster around one template per group.

    Each group template is a shared positive base plus
    ``between_separation`` times a standard normal vector; each bank-year
    adds ``within_noise`` Gaussian noise and is scaled by a log-uniform total
    assets (base 10 exponents in ``size_log_range``). Total assets are always
    reported; other observations are dropped i.i.d. at the bank's missing
    rate. Half the banks close their fiscal year on March 31 instead of
    December 31.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    n_vars = spec.n_variables
    codes = spec.variable_codes
    years = list(spec.years)

    base = rng.uniform(0.01, 0.1, n_vars)
    templates = base + spec.between_separation * rng.standard_normal((spec.n_groups, n_vars))
    groups = np.arange(spec.n_banks) % spec.n_groups
    rng.shuffle(groups)
    log_size = rng.uniform(*spec.size_log_range, spec.n_banks)
    growth = rng.normal(0.03, 0.02, (spec.n_banks, len(years)))
    march_close = rng.random(spec.n_banks) < 0.5
    lo = max(0.0, spec.missing_rate - spec.missing_rate_jitter)
    hi = min(spec.missing_rate + spec.missing_rate_jitter, 0.999)
    rates = rng.uniform(lo, hi, spec.n_banks) if hi > lo else np.full(spec.n_banks, spec.missing_rate)

    records: list[StatementRecord] = []
    truth_groups: dict[str, int] = {}
    truth_qr: dict[str, float] = {}
    width = len(str(spec.n_banks - 1))
    for b in range(spec.n_banks):
        bank = f"B{b:0{width}d}"
        country = COUNTRIES[groups[b] % len(COUNTRIES)]
        truth_groups[bank] = int(groups[b])
        ratios = templates[groups[b]] + spec.within_noise * rng.standard_normal((len(years), n_vars))
        present = rng.random((len(years), n_vars)) >= rates[b]
        ta = 10.0 ** (log_size[b] + np.cumsum(np.log10(1.0 + np.clip(growth[b], -0.5, None))))
        for t, year in enumerate(years):
            when = date(year + 1, 3, 31) if march_close[b] else date(year, 12, 31)
            records.append(StatementRecord(bank, country, when, TOTAL_ASSETS, float(ta[t])))
            for j in np.flatnonzero(present[t]):
                records.append(
                    StatementRecord(bank, country, when, codes[j], float(ratios[t, j] * ta[t]))
                )
        # total assets always present: one column of len(years) observed cells
        observed = len(years) + int(present.sum())
        truth_qr[bank] = observed / ((n_vars + 1) * len(years))
    return records, GroundTruth(truth_groups, truth_qr)


def write_generated(records, truth: GroundTruth, statements_path: str | os.PathLike, truth_path: str | os.PathLike):
    write_statements(records, statements_path)
    rows = ((b, truth.groups[b], truth.quality_ratio[b]) for b in sorted(truth.groups))
    write_table(truth_path, ["bank_id", "group", "qr"], rows)
