import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = []
_START = time.monotonic()
SUITE_BUDGET_S = 600


@pytest.fixture
def criterion():
    """Record one acceptance line; returns a checker that asserts after recording."""

    def check(name: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" :: {detail}" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
        elapsed = time.monotonic() - _START
        ok = elapsed < SUITE_BUDGET_S
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] 9d full suite runtime :: {elapsed:.0f}s "
            f"(budget {SUITE_BUDGET_S}s)")
