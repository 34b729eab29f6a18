import numpy as np
import pytest

from covnet.world import Scenario, ScenarioParams

# Two-robot example with a bystander: robot 0 (FORWARD) covers {t3, t4}, robot 1
# (LEFT) covers {t1, t2, t3}; robots 0 and 1 share a link, robot 2 is within
# robot 0's sensing range but out of communication range and covers nothing.
PAIR_ROBOTS = [(54.0, 43.0), (58.0, 50.0), (66.0, 33.0)]
PAIR_TARGETS = [(40.5, 50.5), (44.5, 48.5), (54.5, 50.5), (54.5, 60.5)]
T1, T2, T3, T4 = range(4)


@pytest.fixture
def pair_layout():
    return Scenario(ScenarioParams(), np.array(PAIR_ROBOTS), np.array(PAIR_TARGETS), 100.0, seed=None)


def make_scenario(robots, targets, side=100.0, **params):
    return Scenario(ScenarioParams(**params), np.array(robots, dtype=float).reshape(-1, 2),
                    np.array(targets, dtype=float).reshape(-1, 2), side)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def report():
    def _report(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
