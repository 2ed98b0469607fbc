from __future__ import annotations

import pytest

from chanbond.scenario import bundled_scenario

# criterion number -> (label, passed, detail), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def ex1():
    return bundled_scenario("unsat_ex1")


@pytest.fixture(scope="session")
def ex2():
    return bundled_scenario("unsat_ex2")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        label, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k:>2}: {label} -- {detail}")
