import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    def record(criterion: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[criterion] = (bool(passed), detail)
        assert passed, f"criterion {criterion}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed and marker.args[0] not in ACCEPTANCE:
        ACCEPTANCE[marker.args[0]] = (False, f"error: {call.excinfo.typename}: {call.excinfo.value}"[:300])
