import os
import sys
from collections import defaultdict

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_results: dict[int, list] = defaultdict(list)
_titles: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    n, title = crit
    _titles[n] = title
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[n].append((report.nodeid.split("::")[-1], report.outcome, report.duration))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        checks = _results[n]
        ok = all(o == "passed" for _, o, _ in checks)
        secs = sum(d for _, _, d in checks)
        failed = [name for name, o, _ in checks if o != "passed"]
        extra = f"  failing: {', '.join(failed)}" if failed else ""
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {_titles[n]}  ({secs:.1f}s){extra}")
