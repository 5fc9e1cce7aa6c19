from __future__ import annotations

import pytest

from feddct.core import SimConfig
from feddct.engine import SimOptions

# small data so engine-level unit tests stay fast
SMALL = SimOptions(samples_per_class=120, test_per_class=40)


@pytest.fixture
def small_options() -> SimOptions:
    return SMALL


@pytest.fixture
def small_config() -> SimConfig:
    return SimConfig(rounds=12, seed=3)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
