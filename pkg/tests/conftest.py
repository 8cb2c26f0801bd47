import pytest

_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for a numbered acceptance criterion."""

    def record(number, checks):
        passed = all(ok for _, ok, _ in checks)
        detail = "; ".join(f"{name} {'ok' if ok else 'FAILED'} ({info})" for name, ok, info in checks)
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
