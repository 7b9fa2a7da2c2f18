import pytest

ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one acceptance line: report(number, title, passed, detail)."""

    def _record(num, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:>2}: {title} ({detail})"
        ACCEPTANCE[num] = line
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
