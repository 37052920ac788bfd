"""Stage orchestration: ingest -> graphs -> communities -> metrics -> PCA.

Every stage reads the files written by the stages before it, so stages can
be run one at a time or chained by :func:`run_pipeline`; both paths write
identical files. All randomness derives from ``PipelineConfig.seed``.
"""

from __future__ import annotations

import json
import logging
import math
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import community as cm
from . import features as ft
from . import ingest
from . import netmetrics as nm
from . import pca
from . import simgraph as sg
from .errors import ConfigError, InsufficientDataError, InvariantError
from .io import atomic_write_text, format_float, read_table, require, write_table

logger = logging.getLogger("accnet")

MANIFEST = "manifest.json"
PANELS = "ingest/panels.csv"
BANKS = "ingest/banks.csv"
GRAPH_DIR = "graphs"
FEATURE_DIR = "features"
PARTITIONS = "partitions.csv"
PARTITION_SUMMARY = "partition_summary.csv"
CORRELATIONS = "correlations.csv"
PCA_CONTRIBUTIONS = "pca_contributions.csv"
PCA_RANKINGS = "pca_rankings.csv"
QR_SWEEP = "qr_sweep.csv"
ROA = "RETURN_ON_ASSET"
ROC = "RETURN_ON_CAP"
LEVERAGE = "TOT_DEBT_TO_TOT_ASSET"


@dataclass
class PipelineConfig:
    input: str = ""
    out: str = "accnet-out"
    qr_threshold: float = 0.5
    min_statements: int = 10
    max_sample_years: int = 13
    max_gap_days: int = 700
    fiscal_window_months: int = 3
    sample_start_year: int = 2001
    sample_end_year: int = 2013
    mc_samples: int = 1000
    alpha: float = 0.05
    prune: tuple[float, ...] = (0.4,)
    presence_fraction: float = 0.8
    periods: tuple[tuple[int, int], ...] = pca.DEFAULT_PERIODS
    seed: int = 0
    redundant_codes: tuple[str, ...] = ()
    total_assets_code: str = ingest.TOTAL_ASSETS
    net_income_code: str = nm.NET_INCOME
    total_debt_code: str = nm.TOTAL_DEBT
    equity_code: str = ""  # enables the return-on-capital measure when set
    qr_sweep: tuple[float, ...] = (0.3, 0.5, 0.8)
    min_community_size: int = 5
    dump_matrices: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.filter_config()  # raises on bad filter fields
        if self.mc_samples < 100:
            raise ConfigError("mc_samples must be at least 100")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.prune or any(not 0.0 <= t <= 1.0 for t in self.prune):
            raise ConfigError("prune thresholds must lie in [0, 1]")
        if list(self.prune) != sorted(self.prune):
            raise ConfigError("prune thresholds must be ascending")
        if not 0.0 < self.presence_fraction <= 1.0:
            raise ConfigError("presence_fraction must lie in (0, 1]")
        if any(not 0.0 <= t <= 1.0 for t in self.qr_sweep) or list(self.qr_sweep) != sorted(self.qr_sweep):
            raise ConfigError("qr_sweep thresholds must be ascending within [0, 1]")
        if self.min_community_size < 2:
            raise ConfigError("min_community_size must be at least 2")
        pca._check_disjoint(self.periods)

    def filter_config(self) -> ingest.FilterConfig:
        return ingest.FilterConfig(
            qr_threshold=self.qr_threshold,
            min_statements=self.min_statements,
            max_sample_years=self.max_sample_years,
            max_gap_days=self.max_gap_days,
            fiscal_window_months=self.fiscal_window_months,
            sample_start_year=self.sample_start_year,
            sample_end_year=self.sample_end_year,
        )

    @property
    def primary_threshold(self) -> float:
        """Threshold used by the correlation and PCA stages: lower median of ``prune``."""
        return self.prune[(len(self.prune) - 1) // 2]

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def echo(self) -> dict[str, Any]:
        """Config as recorded in the manifest; the output path is left out."""
        d = asdict(self)
        d.pop("out")
        d["prune"] = list(self.prune)
        d["qr_sweep"] = list(self.qr_sweep)
        d["redundant_codes"] = list(self.redundant_codes)
        d["periods"] = [pca.format_period(p) for p in self.periods]
        return d


# -- configuration parsing ---------------------------------------------------


def _split(text: str) -> list[str]:
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _coerce(name: str, value: Any) -> Any:
    if name in ("prune", "qr_sweep"):
        items = value if isinstance(value, (list, tuple)) else _split(value)
        return tuple(float(v) for v in items)
    if name == "redundant_codes":
        items = value if isinstance(value, (list, tuple)) else _split(value)
        return tuple(str(v) for v in items)
    if name == "periods":
        text = ",".join(value) if isinstance(value, (list, tuple)) else str(value)
        return tuple(pca.parse_periods(text))
    if name == "dump_matrices":
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    kind = {f.name: f.type for f in fields(PipelineConfig)}[name]
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return str(value)


def load_config_file(path: str | os.PathLike) -> dict[str, Any]:
    """Read ``key = value`` lines, or the ``config`` block of a run manifest."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def make_config(values: dict[str, Any]) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    try:
        return PipelineConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# -- manifest and warning capture --------------------------------------------


class _Collector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(record.getMessage())


@contextmanager
def stage(config: PipelineConfig, name: str) -> Iterator[dict[str, Any]]:
    """Collect warnings and counts of one stage into the run manifest."""
    collector = _Collector()
    logger.addHandler(collector)
    info: dict[str, Any] = {"counts": {}}
    try:
        yield info
    finally:
        logger.removeHandler(collector)
    info["warnings"] = collector.messages
    path = config.out_dir / MANIFEST
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest["config"] = config.echo()
    manifest["seed"] = config.seed
    manifest.setdefault("stages", {})[name] = info
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- ingest ------------------------------------------------------------------


PANEL_COLUMNS = ("bank_id", "country", "fiscal_year", "statement_date", "variable_code", "value")
BANK_COLUMNS = ("bank_id", "country", "n_statements", "max_gap_days", "quality_ratio", "retained")


def stage_ingest(config: PipelineConfig) -> tuple[list[ingest.BankPanel], list[ingest.BankPanel]]:
    """Parse, clean and score the input; returns (all panels, retained panels)."""
    with stage(config, "ingest-check") as info:
        records = ingest.read_statements(config.input)
        records = ingest.drop_redundant_variables(records, config.redundant_codes, config.total_assets_code)
        result = ingest.build_panels(records, config.filter_config())
        kept = ingest.filter_banks(result.panels, config.filter_config())
        if not kept:
            logger.warning("no bank passes the filters; downstream reports will be empty")
        write_panels(result.panels, {p.bank_id for p in kept}, config.out_dir)
        info["counts"] = {
            "records": len(records),
            "banks": len(result.panels),
            "banks_retained": len(kept),
            "variable_codes": len(result.retained_codes),
        }
    return result.panels, kept


def write_panels(panels, retained: set[str], out_dir: Path) -> None:
    rows = []
    for p in panels:
        for (fy, stmt), when in zip(sorted(p.years.items()), p.statement_dates):
            for code in sorted(stmt):
                rows.append((p.bank_id, p.country, fy, when.isoformat(), code, float(stmt[code])))
    write_table(out_dir / PANELS, PANEL_COLUMNS, rows)
    write_table(
        out_dir / BANKS,
        BANK_COLUMNS,
        (
            (p.bank_id, p.country, p.n_statements, p.max_gap_days, float(p.quality_ratio),
             int(p.bank_id in retained))
            for p in panels
        ),
    )


def read_panels(out_dir: Path) -> tuple[list[ingest.BankPanel], list[ingest.BankPanel]]:
    require(out_dir / PANELS, "ingest-check")
    require(out_dir / BANKS, "ingest-check")
    banks = read_table(out_dir / BANKS)
    panels = {
        b["bank_id"]: ingest.BankPanel(b["bank_id"], {}, [], float(b["quality_ratio"]), b["country"])
        for b in banks
    }
    for r in read_table(out_dir / PANELS):
        p = panels[r["bank_id"]]
        fy = int(r["fiscal_year"])
        if fy not in p.years:
            p.years[fy] = {}
            p.statement_dates.append(date.fromisoformat(r["statement_date"]))
        p.years[fy][r["variable_code"]] = float(r["value"])
    for p in panels.values():
        p.statement_dates.sort()
    all_panels = [panels[b["bank_id"]] for b in banks]
    kept = [panels[b["bank_id"]] for b in banks if b["retained"] == "1"]
    return all_panels, sorted(kept, key=lambda p: p.bank_id)


# -- graphs ------------------------------------------------------------------


def _edge_path(out_dir: Path, year: int) -> Path:
    return out_dir / GRAPH_DIR / f"edges_{year}.tsv"


def _node_path(out_dir: Path, year: int) -> Path:
    return out_dir / GRAPH_DIR / f"nodes_{year}.tsv"


def graph_for_year(panels, year: int, config: PipelineConfig) -> sg.SimilarityGraph | None:
    matrix = ft.build_feature_matrix(panels, year, config.total_assets_code)
    if matrix.n_banks == 0:
        return None
    return sg.build_graph(matrix, config.mc_samples, config.alpha, config.seed)


def stage_graphs(config: PipelineConfig, kept=None) -> dict[int, sg.SimilarityGraph]:
    if kept is None:
        _, kept = read_panels(config.out_dir)
    graphs: dict[int, sg.SimilarityGraph] = {}
    with stage(config, "build-graphs") as info:
        for year in config.filter_config().sample_years:
            matrix = ft.build_feature_matrix(kept, year, config.total_assets_code)
            if config.dump_matrices:
                ft.write_feature_matrix(matrix, config.out_dir / FEATURE_DIR / f"matrix_{year}.csv")
            if matrix.n_banks == 0:
                graph = sg.SimilarityGraph(year, [], np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0), bool))
            else:
                graph = sg.build_graph(matrix, config.mc_samples, config.alpha, config.seed)
            _check_weights(graph)
            graphs[year] = graph
            sg.write_edge_list(graph, _edge_path(config.out_dir, year))
            sg.write_node_list(graph, _node_path(config.out_dir, year))
            info["counts"][str(year)] = {"nodes": graph.n_nodes, "edges": graph.n_edges}
    return graphs


def _check_weights(graph: sg.SimilarityGraph) -> None:
    c = graph.cosine[graph.edge_mask]
    if c.size and np.max(np.abs(graph.weight[graph.edge_mask] - (1 - np.sqrt(1 - c * c)))) > 1e-12:
        raise InvariantError(f"year {graph.year}: edge weights disagree with the cosine transform")


def read_graphs(config: PipelineConfig) -> dict[int, sg.SimilarityGraph]:
    graphs = {}
    for year in config.filter_config().sample_years:
        edges = require(_edge_path(config.out_dir, year), "build-graphs")
        nodes = require(_node_path(config.out_dir, year), "build-graphs")
        graphs[year] = sg.read_graph(edges, nodes, year)
    return graphs


# -- communities -------------------------------------------------------------

PARTITION_COLUMNS = ("year", "threshold", "bank_id", "community_id", "country")
SUMMARY_COLUMNS = ("year", "threshold", "modularity", "n_communities", "largest_component_fraction")


def stage_communities(config: PipelineConfig, graphs=None, panels=None) -> dict[tuple[int, float], cm.Partition]:
    if graphs is None:
        graphs = read_graphs(config)
    if panels is None:
        panels, _ = read_panels(config.out_dir)
    country = {p.bank_id: p.country for p in panels}
    parts: dict[tuple[int, float], cm.Partition] = {}
    rows, summary = [], []
    with stage(config, "communities") as info:
        for year, graph in sorted(graphs.items()):
            if graph.n_nodes == 0:
                continue
            for res in cm.threshold_sweep(graph, config.prune, rng_seed=[config.seed, year]):
                part = res.partition
                _check_partition(graph, res)
                parts[(year, res.threshold)] = part
                for bank in graph.nodes:
                    rows.append((year, res.threshold, bank, part.assignment[bank], country.get(bank, "")))
                summary.append(
                    (year, res.threshold, float(part.modularity), part.n_communities,
                     float(res.largest_component_fraction))
                )
        write_table(config.out_dir / PARTITIONS, PARTITION_COLUMNS, rows)
        write_table(config.out_dir / PARTITION_SUMMARY, SUMMARY_COLUMNS, summary)
        info["counts"] = {"partitions": len(summary)}
    return parts


def _check_partition(graph, res: cm.SweepResult) -> None:
    part = res.partition
    if math.isnan(part.modularity):
        return
    pruned = sg.prune(graph, res.threshold, warn=False)
    singleton = cm.eval_modularity(pruned, {n: i for i, n in enumerate(pruned.nodes)})
    if part.modularity < singleton - 1e-12 or part.modularity > 1.0:
        raise InvariantError(f"year {graph.year}: Louvain modularity {part.modularity} out of bounds")


def read_partitions(config: PipelineConfig) -> dict[tuple[int, float], dict[str, int]]:
    require(config.out_dir / PARTITIONS, "communities")
    parts: dict[tuple[int, float], dict[str, int]] = {}
    for r in read_table(config.out_dir / PARTITIONS):
        key = (int(r["year"]), float(r["threshold"]))
        parts.setdefault(key, {})[r["bank_id"]] = int(r["community_id"])
    return parts


# -- correlations ------------------------------------------------------------

CORRELATION_COLUMNS = ("year", "x_name", "y_name", "r", "p_value", "n", "significant")


def indicators_by_year(kept, config: PipelineConfig) -> dict[int, list[nm.EconIndicators]]:
    out = {}
    for year in config.filter_config().sample_years:
        econ = (
            nm.economic_indicators(p, year, config.net_income_code, config.total_debt_code, config.total_assets_code)
            for p in kept
        )
        out[year] = [e for e in econ if e is not None]
    return out


def stage_correlations(config: PipelineConfig, graphs=None, kept=None) -> list[nm.CorrelationPoint]:
    if graphs is None:
        graphs = read_graphs(config)
    if kept is None:
        _, kept = read_panels(config.out_dir)
    with stage(config, "correlations") as info:
        pruned = {
            y: sg.prune(g, config.primary_threshold, warn=False) for y, g in graphs.items() if g.n_nodes
        }
        points, skipped = nm.yearly_correlation_series(pruned, indicators_by_year(kept, config), alpha=config.alpha)
        rows = (
            (p.year, p.x_name, p.y_name, p.r, p.p_value, p.n, str(p.significant).lower()) for p in points
        )
        write_table(config.out_dir / CORRELATIONS, CORRELATION_COLUMNS, rows)
        info["counts"] = {"points": len(points), "skipped": len(skipped)}
        info["skipped"] = [f"{s.year} {s.x_name}~{s.y_name}: {s.reason}" for s in skipped]
    return points


# -- PCA ---------------------------------------------------------------------

CONTRIBUTION_COLUMNS = ("year", "community_id", "measure_code", "contribution", "n_members", "retained")
RANKING_COLUMNS = ("community_id", "period", "rank_type", "rank", "measure_code", "mean_contribution")


def track_communities(assignments: dict[int, dict[str, int]]) -> dict[int, dict[str, int]]:
    """Give communities ids that persist from one year to the next."""
    tracked: dict[int, dict[str, int]] = {}
    previous: dict[str, int] = {}
    next_id = 0
    for year in sorted(assignments):
        tracked[year], next_id = cm.align_communities(previous, assignments[year], next_id)
        previous = tracked[year]
    return tracked


def pca_measures(kept, config: PipelineConfig) -> list[str]:
    matrices = [ft.build_feature_matrix(kept, y, config.total_assets_code) for y in config.filter_config().sample_years]
    popular = ft.popular_variables(matrices, config.presence_fraction)
    derived = [ROA, ROC, LEVERAGE] if config.equity_code else [ROA, LEVERAGE]
    return sorted(popular | {config.total_assets_code}) + derived


def _measure_value(stmt: dict[str, float], code: str, config: PipelineConfig) -> float:
    ta = stmt.get(config.total_assets_code, math.nan)
    if code == ROA:
        return stmt.get(config.net_income_code, math.nan) / ta
    if code == ROC:
        equity = stmt.get(config.equity_code, math.nan)
        return stmt.get(config.net_income_code, math.nan) / equity if equity else math.nan
    if code == LEVERAGE:
        return stmt.get(config.total_debt_code, math.nan) / ta
    return stmt.get(code, math.nan)


def stage_pca(config: PipelineConfig, partitions=None, kept=None) -> list[pca.ContributionRanking]:
    if partitions is None:
        partitions = read_partitions(config)
    if kept is None:
        _, kept = read_panels(config.out_dir)
    by_bank = {p.bank_id: p for p in kept}
    with stage(config, "pca") as info:
        t = config.primary_threshold
        chosen = {y: a for (y, th), a in partitions.items() if th == t}
        tracked = track_communities(chosen)
        measures = pca_measures(kept, config) if kept else []
        yearly: dict[int, dict[int, dict[str, float]]] = {}
        contrib_rows, skipped = [], []
        for year, assignment in sorted(tracked.items()):
            members: dict[int, list[str]] = {}
            for bank, c in sorted(assignment.items()):
                members.setdefault(c, []).append(bank)
            for c, banks in sorted(members.items()):
                if len(banks) < config.min_community_size:
                    continue
                data = [
                    [_measure_value(by_bank[b].years[year], m, config) for m in measures]
                    for b in banks
                    if b in by_bank and year in by_bank[b].years
                ]
                data = np.array([row for row in data if all(math.isfinite(v) for v in row)])
                try:
                    model = pca.fit_scaled_pca(data.reshape(len(data), len(measures)), measures)
                except InsufficientDataError as exc:
                    skipped.append(f"{year} C{c}: {exc}")
                    continue
                try:
                    contrib = pca.measure_contributions(model)
                except InsufficientDataError:
                    logger.warning("%d C%d: no eigenvalue above 1; using the leading component", year, c)
                    contrib = pca.measure_contributions(model, n_components=1)
                yearly.setdefault(c, {})[year] = contrib
                for m in model.measure_codes:
                    contrib_rows.append((year, c, m, contrib[m], len(data), model.retained))
        rankings, skipped_periods = pca.period_rankings(yearly, config.periods)
        rank_rows = []
        for rk in rankings:
            for kind, ranked in (("top", rk.top3), ("bottom", rk.bottom3)):
                for i, (m, v) in enumerate(ranked, 1):
                    rank_rows.append((rk.community_id, rk.period_label, kind, i, m, float(v)))
        write_table(config.out_dir / PCA_CONTRIBUTIONS, CONTRIBUTION_COLUMNS, contrib_rows)
        write_table(config.out_dir / PCA_RANKINGS, RANKING_COLUMNS, rank_rows)
        info["counts"] = {"fits": sum(len(v) for v in yearly.values()), "rankings": len(rankings)}
        info["skipped"] = skipped + [f"C{c} {p}: {why}" for c, p, why in skipped_periods]
    return rankings


# -- QR sweep ----------------------------------------------------------------

QR_COLUMNS = ("threshold", "year", "node_count", "edge_count")


def _graph_key(kept, year: int) -> tuple:
    return (year, tuple(p.bank_id for p in kept if year in p.years))


def stage_qr_sweep(config: PipelineConfig, panels=None, known=None) -> list[ingest.QrSweepRow]:
    """``known`` optionally maps year -> graph already built from the retained banks."""
    if panels is None:
        panels, _ = read_panels(config.out_dir)
    # thresholds that keep the same banks in a year share one graph
    cache: dict[tuple, sg.SimilarityGraph | None] = {}
    if known:
        kept = ingest.filter_banks(panels, config.filter_config())
        for year, graph in known.items():
            cache[_graph_key(kept, year)] = graph if graph.n_nodes else None

    def builder(kept, year):
        key = _graph_key(kept, year)
        if key not in cache:
            cache[key] = graph_for_year(kept, year, config)
        return cache[key]

    with stage(config, "sweep-qr") as info:
        rows = ingest.qr_sweep(panels, config.qr_sweep, builder, config.filter_config())
        write_table(
            config.out_dir / QR_SWEEP, QR_COLUMNS,
            ((r.threshold, r.year, r.node_count, r.edge_count) for r in rows),
        )
        info["counts"] = {"rows": len(rows)}
    return rows


# -- full run ----------------------------------------------------------------


@dataclass
class PipelineResult:
    panels: list[ingest.BankPanel]
    kept: list[ingest.BankPanel]
    graphs: dict[int, sg.SimilarityGraph]
    partitions: dict[tuple[int, float], cm.Partition]
    correlations: list[nm.CorrelationPoint]
    rankings: list[pca.ContributionRanking]
    qr_rows: list[ingest.QrSweepRow] = field(default_factory=list)


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage in order, passing results in memory."""
    manifest = config.out_dir / MANIFEST
    if manifest.exists():
        manifest.unlink()
    panels, kept = stage_ingest(config)
    graphs = stage_graphs(config, kept)
    partitions = stage_communities(config, graphs, panels)
    points = stage_correlations(config, graphs, kept)
    assignments = {k: p.assignment for k, p in partitions.items()}
    rankings = stage_pca(config, assignments, kept)
    qr_rows = stage_qr_sweep(config, panels, graphs)
    return PipelineResult(panels, kept, graphs, partitions, points, rankings, qr_rows)
