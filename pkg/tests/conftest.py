import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    key = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _RESULTS[key] = (mark.args[1], "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS):
        title, status = _RESULTS[key]
        terminalreporter.write_line(f"criterion {key:>2}  {status}  {title}")
