import numpy as np
import pytest

from condfilter.data import EmbeddingSet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rows(*values):
    """1-D embedding set from scalars."""
    return EmbeddingSet(np.asarray(values, dtype=np.float32).reshape(-1, 1))


_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "cases": 0})
    entry["seconds"] += report.duration
    if report.when == "call":
        entry["cases"] += 1
    if report.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(
            f"criterion {number}: {status}  {e['title']}  ({e['cases']} tests, {e['seconds']:.2f}s)"
        )
