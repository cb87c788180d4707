import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
