import pytest

CRITERIA = []  # (label, passed, detail) in execution order


@pytest.fixture
def report():
    def record(label, passed, detail=""):
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
