import numpy as np
import pytest
from hypothesis import settings

from epbolt import PeriodicGrid

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# criterion number -> list of (check name, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[number]
        failed = [name for name, ok, _ in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        summary = f"{len(checks) - len(failed)}/{len(checks)} checks"
        if failed:
            summary += "; failing: " + ", ".join(failed)
        terminalreporter.write_line(f"criterion {number}: {status} ({summary})")
        for name, ok, detail in checks:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_grid():
    return PeriodicGrid(4, 1.0)
