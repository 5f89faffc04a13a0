"""Shared pytest plumbing: acceptance verdicts are echoed in the terminal summary."""
import pytest

_VERDICTS = {}


@pytest.fixture
def verdict(request):
    """Call ``verdict(criterion, passed, detail)`` to register a one-line result."""

    def record(criterion, passed, detail=""):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _VERDICTS[criterion] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[key])
