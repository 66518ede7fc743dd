import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

_CRITERIA: dict[int, tuple[str, list[str]]] = {}
_NOTES: dict[int, list[str]] = {}


@pytest.fixture
def note(request):
    """Record a measured value shown under the criterion's summary line."""
    m = request.node.get_closest_marker("criterion")
    key = m.args[0] if m else 0
    return lambda text: _NOTES.setdefault(key, []).append(text)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    if report.when != "call" and report.outcome == "passed":
        return
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    n, title = marker
    _, outcomes = _CRITERIA.setdefault(n, (title, []))
    outcomes.append(report.outcome)


def pytest_itemcollected(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcomes = _CRITERIA[n]
        ok = outcomes and all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}")
        for text in _NOTES.get(n, []):
            terminalreporter.write_line(f"         {text}")
