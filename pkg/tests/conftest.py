import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def acceptance_report():
    """Record one summary line per acceptance criterion."""

    def record(key: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[key] = f"{key} {'PASS' if passed else 'FAIL'}: {detail}"
        print(ACCEPTANCE_LINES[key])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
