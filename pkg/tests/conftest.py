import pytest

# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []
# supporting tables (per-seed grid results), shown after the criteria
ACCEPTANCE_TABLES: list[str] = []


@pytest.fixture
def report():
    def emit(criterion: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    if ACCEPTANCE_TABLES:
        terminalreporter.section("acceptance grid")
        for table in ACCEPTANCE_TABLES:
            terminalreporter.write(table)
