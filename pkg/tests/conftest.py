from pathlib import Path

import numpy as np
import pytest

from graphhop.data import generate_synthetic
from graphhop.graph import NodeSplit, build_graph

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
CONFIGS = ROOT / "configs"


def random_graph(rng, n, p):
    """Erdos-Renyi edge list on ``n`` nodes."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return build_graph(np.column_stack([iu[keep], ju[keep]]), n=n)


def random_connected_graph(rng, n, extra):
    """Random spanning tree plus ``extra`` random edges."""
    parents = [int(rng.integers(0, i)) for i in range(1, n)]
    edges = list(zip(parents, range(1, n)))
    edges += [tuple(rng.choice(n, size=2, replace=False)) for _ in range(extra)]
    return build_graph(edges, n=n)


@pytest.fixture
def two_clique():
    bundle = generate_synthetic("two_clique", seed=0, sizes=(5, 5))
    split = NodeSplit(10, [0, 5], [1, 6], [2, 3, 4, 7, 8, 9])
    return bundle, split


# -- acceptance report -------------------------------------------------------

_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    number = dict(report.user_properties).get("criterion")
    if number is None:
        return
    if report.when == "call" or report.outcome != "passed":
        state = _criteria.setdefault(number, {"titles": [], "outcomes": []})
        title = dict(report.user_properties).get("title")
        if title not in state["titles"]:
            state["titles"].append(title)
        outcome = report.outcome
        if report.skipped and report.longrepr:
            outcome = f"skipped ({report.longrepr[2].removeprefix('Skipped: ')})"
        state["outcomes"].append(outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        state = _criteria[number]
        outcomes = state["outcomes"]
        if any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        elif all(o.startswith("skipped") for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        note = next((o for o in outcomes if o.startswith("skipped")), "")
        line = f"criterion {number:>2} {verdict}  {'; '.join(state['titles'])}"
        if note and verdict == "PASS":
            note = "partly " + note
        terminalreporter.write_line(line + (f"  [{note}]" if note else ""))


@pytest.fixture
def criterion(request, record_property):
    """Tag an acceptance test: ``criterion(n, title)``."""
    def tag(number, title):
        record_property("criterion", number)
        record_property("title", title)
    return tag
