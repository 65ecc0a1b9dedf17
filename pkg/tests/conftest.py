from __future__ import annotations

import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def report():
    """Record the one-line verdict of an acceptance criterion."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[criterion] = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
