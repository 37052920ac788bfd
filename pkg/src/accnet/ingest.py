"""Parsing, validation and filtering of annual statement panels.

Input is a long-format table with one row per (bank, statement date,
variable). Rows are grouped into per-bank panels keyed by fiscal year,
scored by their Quality Ratio (observed variable-years over possible
variable-years) and filtered on coverage and reporting continuity.

Values are assumed to be already expressed in one common currency.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Iterable, Sequence

from .errors import ConfigError, FiscalYearError, ValidationError
from .io import format_float, require, write_table

logger = logging.getLogger(__name__)

TOTAL_ASSETS = "BS_TOT_ASSET"
INPUT_COLUMNS = ("bank_id", "country", "statement_date", "variable_code", "value")
MAX_REPORTED_ERRORS = 20


@dataclass(frozen=True)
class StatementRecord:
    bank_id: str
    country: str
    statement_date: date
    variable_code: str
    value: float

    def __post_init__(self):
        if not self.variable_code:
            raise ValidationError("variable_code must be nonempty")
        if not isinstance(self.statement_date, date):
            raise ValidationError(f"statement_date must be a date, got {self.statement_date!r}")


@dataclass
class FilterConfig:
    qr_threshold: float = 0.5
    min_statements: int = 10
    max_sample_years: int = 13
    max_gap_days: int = 700
    fiscal_window_months: int = 3
    sample_start_year: int = 2001
    sample_end_year: int = 2013

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.qr_threshold <= 1.0:
            raise ConfigError(f"qr_threshold must lie in [0, 1], got {self.qr_threshold}")
        if self.min_statements > self.max_sample_years:
            raise ConfigError("min_statements cannot exceed max_sample_years")
        if self.min_statements < 0 or self.max_gap_days < 0:
            raise ConfigError("min_statements and max_gap_days must be nonnegative")
        if self.fiscal_window_months < 0:
            raise ConfigError("fiscal_window_months must be nonnegative")
        if self.sample_end_year < self.sample_start_year:
            raise ConfigError("sample_end_year precedes sample_start_year")

    @property
    def sample_years(self) -> range:
        return range(self.sample_start_year, self.sample_end_year + 1)


@dataclass
class BankPanel:
    """Annual statements of one bank, keyed by fiscal year."""

    bank_id: str
    years: dict[int, dict[str, float]]
    statement_dates: list[date]
    quality_ratio: float = 0.0
    country: str = ""

    @property
    def n_statements(self) -> int:
        return len(self.years)

    @property
    def max_gap_days(self) -> int:
        if len(self.statement_dates) < 2:
            return 0
        return max(
            (b - a).days for a, b in zip(self.statement_dates, self.statement_dates[1:])
        )


@dataclass
class IngestResult:
    panels: list[BankPanel]
    retained_codes: frozenset[str]
    warnings: list[str] = field(default_factory=list)


# -- parsing -----------------------------------------------------------------


def read_statements(path: str | os.PathLike) -> list[StatementRecord]:
    """Read the delimited statement file.

    Raises:
        ValidationError: listing the line numbers of every row whose date or
            value could not be parsed.
    """
    require(path, "generate")
    records: list[StatementRecord] = []
    errors: list[str] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        missing = [c for c in INPUT_COLUMNS if c not in header]
        if missing:
            raise ValidationError(f"{path}: header lacks columns {missing}")
        col = {name: header.index(name) for name in INPUT_COLUMNS}
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                errors.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                continue
            try:
                records.append(_parse_row(row, col))
            except ValueError as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors:
        shown = errors[:MAX_REPORTED_ERRORS]
        more = len(errors) - len(shown)
        msg = "; ".join(shown) + (f"; ... and {more} more" if more else "")
        raise ValidationError(f"{path}: {len(errors)} rejected row(s): {msg}")
    return records


def _parse_row(row: Sequence[str], col: dict[str, int]) -> StatementRecord:
    bank_id = row[col["bank_id"]].strip()
    if not bank_id:
        raise ValueError("empty bank_id")
    raw_date = row[col["statement_date"]].strip()
    try:
        when = date.fromisoformat(raw_date)
    except ValueError:
        raise ValueError(f"unparsable statement_date {raw_date!r}") from None
    raw_value = row[col["value"]].strip()
    try:
        value = float(raw_value)
    except ValueError:
        raise ValueError(f"unparsable value {raw_value!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {raw_value!r}")
    code = row[col["variable_code"]].strip()
    if not code:
        raise ValueError("empty variable_code")
    return StatementRecord(bank_id, row[col["country"]].strip(), when, code, value)


def write_statements(records: Iterable[StatementRecord], path: str | os.PathLike):
    rows = (
        (r.bank_id, r.country, r.statement_date.isoformat(), r.variable_code, format_float(r.value))
        for r in records
    )
    return write_table(path, INPUT_COLUMNS, rows)


# -- operations --------------------------------------------------------------


def assign_fiscal_year(statement_date: date, window_months: int = 3) -> int:
    """Map a statement date to the fiscal year whose end it is closest to.

    A date within ``window_months`` calendar months before or after
    December 31 of year Y belongs to Y: with the default window, dates from
    October 1 of Y through March 31 of Y+1 map to Y.

    Raises:
        FiscalYearError: the date lies outside every window (possible whenever
            ``window_months < 6``; e.g. a June 30 year-end with a 3-month window).
    """
    if window_months < 0:
        raise ConfigError("window_months must be nonnegative")
    month, year = statement_date.month, statement_date.year
    candidates = []
    if month > 12 - window_months or (month, statement_date.day) == (12, 31):
        candidates.append(year)
    if month <= window_months:
        candidates.append(year - 1)
    if not candidates:
        raise FiscalYearError(
            f"{statement_date.isoformat()} is outside the +/-{window_months}-month "
            "window around any calendar year-end"
        )
    if len(candidates) == 1:
        return candidates[0]
    # overlapping windows (window_months > 6): nearest year-end, ties to the later year
    to_this = (date(year, 12, 31) - statement_date).days
    to_prev = (statement_date - date(year - 1, 12, 31)).days
    return year if to_this <= to_prev else year - 1


def drop_redundant_variables(
    records: Iterable[StatementRecord],
    redundant_codes: Iterable[str],
    size_code: str = TOTAL_ASSETS,
) -> list[StatementRecord]:
    """Remove total and sub-total measures; the size proxy always survives."""
    redundant = set(redundant_codes)
    if size_code in redundant:
        logger.warning(
            "size proxy %s listed as redundant; it is retained for normalization", size_code
        )
        redundant.discard(size_code)
    if not redundant:
        return list(records)
    return [r for r in records if r.variable_code not in redundant]


def compute_quality_ratio(
    panel: BankPanel, retained_codes: Iterable[str], sample_years: Iterable[int]
) -> float:
    """Observed (variable, year) cells over all possible ones."""
    codes = set(retained_codes)
    years = list(sample_years)
    if not codes or not years:
        raise ConfigError("quality ratio needs a nonempty code set and year range")
    observed = 0
    for y in years:
        stmt = panel.years.get(y)
        if stmt:
            observed += sum(1 for c in codes if c in stmt and math.isfinite(stmt[c]))
    return observed / (len(codes) * len(years))


def build_panels(
    records: Sequence[StatementRecord],
    config: FilterConfig,
    retained_codes: Iterable[str] | None = None,
) -> IngestResult:
    """Group records into per-bank fiscal-year panels and score each one.

    When two statement dates of one bank fall into the same fiscal year, the
    date closest to December 31 wins (ties to the later date).
    """
    warnings: list[str] = []

    def warn(msg):
        logger.warning(msg)
        warnings.append(msg)

    codes = frozenset(retained_codes) if retained_codes is not None else frozenset(
        r.variable_code for r in records
    )
    years = config.sample_years

    # bank -> date -> code -> value
    by_bank: dict[str, dict[date, dict[str, float]]] = {}
    country: dict[str, str] = {}
    out_of_window: set[tuple[str, date]] = set()
    duplicates = 0
    for r in records:
        stmts = by_bank.setdefault(r.bank_id, {})
        stmt = stmts.setdefault(r.statement_date, {})
        if r.variable_code in stmt:
            duplicates += 1
        stmt[r.variable_code] = r.value
        if r.country and not country.get(r.bank_id):
            country[r.bank_id] = r.country
    if duplicates:
        warn(f"{duplicates} duplicate (bank, date, variable) rows; last occurrence kept")

    panels = []
    collisions = 0
    for bank_id in sorted(by_bank):
        chosen: dict[int, date] = {}
        for when in sorted(by_bank[bank_id]):
            try:
                fy = assign_fiscal_year(when, config.fiscal_window_months)
            except FiscalYearError:
                out_of_window.add((bank_id, when))
                continue
            if fy not in years:
                continue
            if fy in chosen:
                collisions += 1
                chosen[fy] = _closer_to_year_end(chosen[fy], when, fy)
            else:
                chosen[fy] = when
        if not chosen:
            continue
        panel = BankPanel(
            bank_id=bank_id,
            years={fy: dict(by_bank[bank_id][d]) for fy, d in sorted(chosen.items())},
            statement_dates=sorted(chosen.values()),
            country=country.get(bank_id, ""),
        )
        if codes:
            panel.quality_ratio = compute_quality_ratio(panel, codes, years)
        panels.append(panel)
    if collisions:
        warn(f"{collisions} statement(s) shared a fiscal year with another; kept the one nearest Dec 31")
    if out_of_window:
        warn(f"{len(out_of_window)} statement date(s) outside every fiscal-year window were dropped")
    return IngestResult(panels, codes, warnings)


def _closer_to_year_end(a: date, b: date, fiscal_year: int) -> date:
    end = date(fiscal_year, 12, 31)
    da, db = abs((a - end).days), abs((b - end).days)
    if da != db:
        return a if da < db else b
    return max(a, b)


def filter_banks(panels: Iterable[BankPanel], config: FilterConfig) -> list[BankPanel]:
    """Keep banks meeting the QR, statement-count and reporting-gap criteria."""
    kept = [
        p
        for p in panels
        if p.quality_ratio >= config.qr_threshold
        and p.n_statements >= config.min_statements
        and p.max_gap_days <= config.max_gap_days
    ]
    return sorted(kept, key=lambda p: p.bank_id)


@dataclass(frozen=True)
class QrSweepRow:
    threshold: float
    year: int
    node_count: int
    edge_count: int


def qr_sweep(
    panels: Sequence[BankPanel],
    thresholds: Sequence[float],
    graph_builder: Callable[[list[BankPanel], int], object],
    config: FilterConfig,
) -> list[QrSweepRow]:
    """Node and edge counts per year for each QR threshold.

    ``graph_builder(panels, year)`` must return an object exposing ``n_nodes``
    and ``n_edges``, or ``None`` when the year yields no graph.
    """
    if list(thresholds) != sorted(thresholds):
        raise ConfigError("QR sweep thresholds must be ascending")
    rows = []
    for t in thresholds:
        cfg = FilterConfig(**{**config.__dict__, "qr_threshold": t})
        kept = filter_banks(panels, cfg)
        for year in config.sample_years:
            graph = graph_builder(kept, year)
            nodes = graph.n_nodes if graph is not None else 0
            edges = graph.n_edges if graph is not None else 0
            rows.append(QrSweepRow(float(t), year, nodes, edges))
    return rows
