"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""
import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, text = marker.args
    results = item.config.stash[_KEY]
    failed = report.failed or (report.when == "call" and report.skipped)
    if report.when == "call" or failed:
        prev = results.get(number, (text, True))
        results[number] = (text, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        text, ok = results[number]
        terminalreporter.write_line(f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {text}")
