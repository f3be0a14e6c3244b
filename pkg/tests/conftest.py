"""Prints one pass/fail line per acceptance criterion at the end of the run."""

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "ran": False})
    if call.when in ("setup", "call"):
        # module-scoped fixtures do their work during setup
        entry["seconds"] += call.duration
    if call.when == "call":
        entry["ran"] = True
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        r = _results[number]
        status = "PASS" if r["ok"] and r["ran"] else ("FAIL" if r["ran"] or not r["ok"] else "SKIP")
        terminalreporter.write_line(
            f"criterion {number}: {status}  {r['title']} ({r['seconds']:.1f} s)")
