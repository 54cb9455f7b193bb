import pytest

_results: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    if rep.failed or (rep.when == "call" and n not in _results):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _results[n] = (status, title)
    elif rep.skipped:
        _results[n] = ("SKIP", title)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, title = _results[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}")
