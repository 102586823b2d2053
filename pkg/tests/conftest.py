import pytest

# filled by tests/test_acceptance.py through the ``acceptance_report`` fixture
_LINES: dict = {}


@pytest.fixture
def acceptance_report():
    def report(number: int, ok: bool, detail: str = ""):
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _LINES[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_LINES):
            terminalreporter.write_line(_LINES[k])
