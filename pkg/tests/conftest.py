import pytest

_CRITERIA: list[tuple[str, str, float]] = []
_SETUP: dict[str, float] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "setup" and report.passed:
        _SETUP[item.nodeid] = report.duration
    elif report.when in ("setup", "call"):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _CRITERIA.append((mark.args[0], status, report.duration + _SETUP.pop(item.nodeid, 0.0)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, duration in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}  ({duration:.1f}s)")
