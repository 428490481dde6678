import pytest

ACCEPTANCE = {}


@pytest.fixture
def record():
    """Record one acceptance line, print it, then assert the outcome."""

    def _record(criterion, ok, detail):
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[criterion] = line
        print("\n" + line)
        assert ok, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
