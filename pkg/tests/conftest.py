import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def accept():
    def record(number: int, ok: bool | None, detail: str) -> None:
        # ok=None marks a criterion that was not evaluated in this run
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"{status} criterion {number:>2}: {detail}")
        if ok is None:
            pytest.skip(detail)
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
