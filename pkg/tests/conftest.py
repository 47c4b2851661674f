from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "logfrag",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("logfrag")

ACCEPTANCE_COUNT = 13
_acceptance_key = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_record(request):
    """Record the outcome of one acceptance criterion for the end-of-run table."""
    table = request.config.stash.setdefault(_acceptance_key, {})

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        table[number] = (title, bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_acceptance_key, None)
    if table is None:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, ACCEPTANCE_COUNT + 1):
        if k in table:
            title, ok, detail = table[k]
            terminalreporter.write_line(f"criterion {k:2d}  {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}  MISSING  no result recorded (deselected or errored before recording)")
