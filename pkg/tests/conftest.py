import pytest

_REPORT = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """``report(number, passed, detail)`` records one acceptance line."""
    def report(number, passed, detail):
        _REPORT[number] = (bool(passed), detail)
        line = f"acceptance {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_REPORT):
        passed, detail = _REPORT[number]
        terminalreporter.write_line(
            f"acceptance {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")

