import pytest

CRITERIA: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def _line(n: int, passed: bool, detail: str) -> str:
    return f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


@pytest.fixture
def criterion(request):
    """Record the verdict of the test's acceptance criterion; returns ``passed``."""
    n = request.node.get_closest_marker("criterion").args[0]

    def record(passed: bool, detail: str) -> bool:
        CRITERIA[n] = _line(n, passed, detail)
        print(CRITERIA[n])
        return passed

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n = marker.args[0]
    if rep.failed and (n not in CRITERIA or "PASS" in CRITERIA[n]):
        CRITERIA[n] = _line(n, False, "raised before all checks completed")


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
