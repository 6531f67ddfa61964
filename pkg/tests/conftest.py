import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion for the summary."""

    def report(n: int, ok: bool, text: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}"
        ACCEPTANCE[n] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
