import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Print one PASS/FAIL line for an acceptance criterion and remember it for the summary."""
    def _report(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        print(line, flush=True)
        _LINES.append(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
