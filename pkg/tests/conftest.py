import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, text = mark.args
    prev = _CRITERIA.get(num, ("PASS", text))[0]
    if rep.when == "call" or rep.failed:
        status = "PASS" if (rep.passed and prev == "PASS") else "FAIL"
        _CRITERIA[num] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, text = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {text}")
