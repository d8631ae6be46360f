import sys

import numpy as np
import pytest

from contactdyn.hj import Grid, solve_hj
from contactdyn.model import HamiltonianModel


@pytest.fixture(scope="session")
def pendulum():
    return HamiltonianModel.pendulum(1.0)


@pytest.fixture(scope="session")
def torus2():
    return HamiltonianModel.torus2(1.0)


@pytest.fixture(scope="session")
def u_pendulum_256(pendulum):
    return solve_hj(pendulum, Grid(1, 256))


@pytest.fixture(scope="session")
def u_pendulum_512(pendulum):
    return solve_hj(pendulum, Grid(1, 512))


@pytest.fixture(scope="session")
def u_torus2_64(torus2):
    return solve_hj(torus2, Grid(2, 64))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _acceptance_lines(results):
    lines = []
    for k in map(str, range(1, 11)):
        if k == "5":
            parts = {key: v for key, v in results.items() if key.startswith("5")}
            if not parts:
                continue
            ok = all(v[0] for v in parts.values())
            detail = "; ".join(f"({key[1]}) {'ok' if v[0] else 'FAIL'}: {v[1]}" for key, v in sorted(parts.items()))
        elif k in results:
            ok, detail = results[k]
        else:
            continue
        lines.append(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    return lines


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines(results):
            terminalreporter.write_line(line)
