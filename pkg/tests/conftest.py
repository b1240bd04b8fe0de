import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Records one PASS/FAIL line per criterion and fails the test on FAIL."""

    def report(n, passed, text):
        line = f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
