from __future__ import annotations

from datetime import date

import numpy as np
import pytest

from accnet.ingest import TOTAL_ASSETS, BankPanel
from accnet.simgraph import SimilarityGraph

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def make_panel(bank_id, years, codes=("A", "B"), dates=None, qr=1.0, ta=100.0):
    """Panel with every code present in every listed year, dated Dec 31."""
    stmts = {y: {TOTAL_ASSETS: ta, **{c: 1.0 for c in codes}} for y in years}
    dates = dates or [date(y, 12, 31) for y in years]
    return BankPanel(bank_id, stmts, sorted(dates), qr)


def graph_from_weights(w, nodes=None, year=2000) -> SimilarityGraph:
    """Graph whose edges are the positive off-diagonal entries of ``w``.

    Cosines are set to the value mapping back to each weight.
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    nodes = nodes or [f"n{i}" for i in range(n)]
    mask = w > 0
    np.fill_diagonal(mask, False)
    cos = np.sqrt(1 - (1 - np.clip(w, 0, 1)) ** 2)
    return SimilarityGraph(year, list(nodes), cos, w.copy(), mask)


def two_cliques(k=4, weight=1.0, bridge=0.0):
    n = 2 * k
    w = np.zeros((n, n))
    w[:k, :k] = weight
    w[k:, k:] = weight
    np.fill_diagonal(w, 0)
    if bridge:
        w[k - 1, k] = w[k, k - 1] = bridge
    return w


@pytest.fixture
def clique_graph():
    return graph_from_weights(two_cliques())
