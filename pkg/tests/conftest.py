import pytest

_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    """Append one ``PASS``/``FAIL`` line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
