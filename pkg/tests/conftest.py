"""Collects one verdict line per acceptance criterion and prints them at the end."""
import pytest

_LINES = {}


@pytest.fixture
def verdict():
    def record(number, title, ok, detail):
        _LINES[number] = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
