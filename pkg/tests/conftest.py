import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# (criterion id, passed, detail), filled by the acceptance tests
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert on it."""

    def record(cid: str, passed: bool, detail: str):
        ACCEPTANCE.append((cid, bool(passed), detail))
        assert passed, f"criterion {cid}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def key(item):
        head = item[0].split()[0]
        return (int("".join(c for c in head if c.isdigit()) or 0), head)

    for cid, passed, detail in sorted(ACCEPTANCE, key=key):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {cid}: {detail}")
