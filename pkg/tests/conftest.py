from pathlib import Path

import pytest

from minireduce.engine import JobContext

FIXTURES = Path(__file__).parent / "fixtures"
CORPORA = FIXTURES / "corpora"
BUNDLED_CORPORA = ["piccolo.txt", "medio.txt", "grande.txt"]


@pytest.fixture(scope="session")
def ctx():
    with JobContext(worker_count=4) as context:
        yield context


@pytest.fixture
def tiny_corpus() -> Path:
    return CORPORA / "tiny.txt"


# -- acceptance reporting ----------------------------------------------------

_CRITERIA: dict[int, dict] = {}


def record_note(number: int, text: str) -> None:
    _CRITERIA.setdefault(number, {"title": "", "outcomes": [], "notes": []})["notes"].append(text)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, gating=True): acceptance criterion a test belongs to")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _markers.get(report.nodeid)
    if marker is None:
        return
    number, title, gating = marker
    entry = _CRITERIA.setdefault(number, {"title": "", "outcomes": [], "notes": []})
    entry["title"] = title
    entry["gating"] = gating
    entry["outcomes"].append(report.outcome)


_markers: dict[str, tuple[int, str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _markers[item.nodeid] = (*mark.args, mark.kwargs.get("gating", True))


def pytest_terminal_summary(terminalreporter):
    rows = [(n, c) for n, c in sorted(_CRITERIA.items()) if c["outcomes"]]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, c in rows:
        ok = all(o == "passed" for o in c["outcomes"])
        status = ("PASS" if ok else "FAIL") if c.get("gating", True) else "INFO"
        terminalreporter.write_line(f"criterion {number}: {status}  {c['title']}")
        for note in c["notes"]:
            terminalreporter.write_line(f"    {note}")
