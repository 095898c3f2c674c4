"""Shared pytest configuration.

Tests marked ``acceptance(n, title)`` are collected into a one-line-per-
criterion summary printed at the end of the session.
"""
import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        notes = [str(v) for k, v in item.user_properties if k == "note"]
        _RESULTS[number] = (report.outcome, title, report.duration, notes)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        outcome, title, duration, notes = _RESULTS[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {number:>2} {verdict}  {title}  ({duration:.2f}s)")
        for note in notes:
            terminalreporter.write_line(f"    note: {note}")
