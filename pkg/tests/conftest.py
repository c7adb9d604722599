from __future__ import annotations

import numpy as np
import pytest

from gpseg.grid import interval
from gpseg.model import StatePair, SystemParams
from gpseg.solver import MinimaxSeed, canonical_representative, continue_in_beta, minimax_init, newton_refine


@pytest.fixture(scope="session")
def grid199():
    return interval(np.pi, 199)


@pytest.fixture(scope="session")
def params50():
    return SystemParams(-1.0, -1.0, 50.0)


@pytest.fixture(scope="session")
def k2_solution(grid199, params50):
    init = minimax_init(grid199, MinimaxSeed(2), params50)
    res = newton_refine(grid199, params50, init)
    assert res.converged
    res.state = canonical_representative(grid199, res.state)
    return res


@pytest.fixture(scope="session")
def k2_branch(grid199, params50, k2_solution):
    return continue_in_beta(grid199, params50, k2_solution.state, (50.0, 1e2, 1e3, 1e4))


def random_state(grid, rng, scale=1.0) -> StatePair:
    return StatePair(scale * rng.standard_normal(grid.N), scale * rng.standard_normal(grid.N))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
