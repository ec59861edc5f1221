"""Shared test plumbing: acceptance criteria get one PASS/FAIL line each."""

import pytest

_criteria: dict[str, tuple[int, str]] = {}
_outcomes: dict[str, str] = {}


@pytest.fixture()
def criterion(request):
    """Register the calling test as an acceptance criterion."""

    def register(number: int, description: str):
        _criteria[request.node.nodeid] = (number, description)

    return register


def pytest_runtest_logreport(report):
    if report.when == "call" and report.nodeid in _criteria:
        _outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    lines = []
    for nodeid, (number, desc) in sorted(_criteria.items(), key=lambda kv: kv[1][0]):
        outcome = _outcomes.get(nodeid, "not run")
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        lines.append(f"criterion {number:2d}: {status}  {desc}")
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
