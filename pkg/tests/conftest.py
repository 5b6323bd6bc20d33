"""Shared pytest plumbing: the acceptance checklist verdict log."""

import pytest


class AcceptanceLog:
    """One verdict line per acceptance check, echoed into the run summary."""

    def __init__(self) -> None:
        self.lines: list[str] = []

    def record(self, number: int, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] acceptance {number:02d}: {detail}"
        self.lines.append(line)
        print(line)
        assert ok, line


_LOG = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceLog:
    return _LOG


def pytest_terminal_summary(terminalreporter):
    if _LOG.lines:
        terminalreporter.section("acceptance checklist")
        for line in _LOG.lines:
            terminalreporter.write_line(line)
