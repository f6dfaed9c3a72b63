import pytest

CRITERIA: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    line = f"CRITERION {number:2d} {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
