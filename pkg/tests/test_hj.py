import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from contactdyn.errors import ContractError, InputDomainError, NonConvergenceError, SolverFailure
from contactdyn.hj import (Grid, GridFunction, SolutionKind, constant_bounds, convergence_constant,
                           hj_residual_on_characteristics, interpolate, one_sided_gradients, solve_hj)
from contactdyn.model import Family, HamiltonianModel, MonotoneSign, PotentialTerm


def test_grid_validation():
    g = Grid(1, 64)
    assert g.spacing_over_pi * g.N == Fraction(2)
    assert g.h * g.N == pytest.approx(2 * math.pi, rel=1e-15)
    for bad in (16, 100):
        with pytest.raises(InputDomainError):
            Grid(1, bad)
    assert Grid(2, 32).nodes().shape == (32, 32, 2)


def test_constant_bounds_examples(pendulum):
    lo, hi = constant_bounds(pendulum)
    assert lo == pytest.approx(-1.0, abs=1e-12) and hi == pytest.approx(1.0, abs=1e-12)
    q = HamiltonianModel.quadratic_test(2.0, c=0.6)
    lo, hi = constant_bounds(q, Grid(1, 32))
    assert lo == pytest.approx(-0.3) and hi == pytest.approx(-0.3)


def test_constant_bounds_unbracketed():
    m = HamiltonianModel(Family.MECHANICAL, 1e-9, potential=(PotentialTerm((0,), 1e4),))
    with pytest.raises(SolverFailure):
        constant_bounds(m, Grid(1, 32))


def test_quadratic_exact_solution():
    for c in (0.0, 0.7, -1.3):
        m = HamiltonianModel.quadratic_test(1.5, c=c)
        gf = solve_hj(m, Grid(1, 64))
        assert np.max(np.abs(gf.values + c / 1.5)) <= 1e-9
        assert hj_residual_on_characteristics(m, gf) <= 1e-9


def test_pendulum_sandwich_and_monotone_iteration(u_pendulum_256):
    gf = u_pendulum_256
    assert gf.values.min() >= -1 - 1e-6 and gf.values.max() <= 1 + 1e-6
    assert gf.diagnostics["max_increase"] <= 0.0
    assert gf.kind is SolutionKind.U_MINUS


def test_gradient_bound(u_pendulum_256, u_torus2_64):
    for gf in (u_pendulum_256, u_torus2_64):
        g = one_sided_gradients(gf)
        assert g.max_norm.max() <= gf.lipschitz_bound + 10 * gf.grid.h
    assert u_pendulum_256.lipschitz_bound == pytest.approx(2.0)


def test_neighbour_lipschitz(u_pendulum_256):
    gf = u_pendulum_256
    d = np.abs(np.diff(np.append(gf.values, gf.values[0])))
    assert np.all(d <= gf.lipschitz_bound * gf.grid.h * (1 + 1e-6))


def test_one_sided_gradients_shift(u_torus2_64):
    g = one_sided_gradients(u_torus2_64)
    for k in range(2):
        assert np.array_equal(g.forward[k], np.roll(g.backward[k], -1, axis=k))


def test_residual_examples(pendulum, u_pendulum_256, u_pendulum_512):
    r256 = hj_residual_on_characteristics(pendulum, u_pendulum_256)
    r512 = hj_residual_on_characteristics(pendulum, u_pendulum_512)
    assert r256 <= 0.1
    assert r512 <= 0.05 + 1e-6
    assert u_pendulum_256.residual_norm / u_pendulum_512.residual_norm >= 1.7
    assert u_pendulum_256.residual_norm == pytest.approx(r256)
    # subsampling can only lower the max
    assert hj_residual_on_characteristics(pendulum, u_pendulum_256, samples=32) <= r256


def test_sign_transform_duality():
    plus = HamiltonianModel.pendulum(0.8, MonotoneSign.PLUS, amplitude=0.6)
    gp = solve_hj(plus, Grid(1, 128))
    gm = solve_hj(plus.mirrored(), Grid(1, 128))
    assert gp.kind is SolutionKind.U_PLUS
    assert np.array_equal(gp.values, -gm.values)
    lo, hi = constant_bounds(plus, gp.grid)
    assert gp.values.min() >= lo - 1e-6 and gp.values.max() <= hi + 1e-6


def _characteristic_oracle(model, xs):
    """u_- on (0, pi] from the unstable branch of the saddle at x = 0 (first passage)."""
    z = np.array([0.0, 0.0, -1.0 / model.lam])
    w, V = np.linalg.eig(model.field_jacobian(z))
    v = V[:, np.argmax(w.real)].real
    v = v / np.sign(v[0])
    hit = lambda t, y: y[0] - np.pi
    hit.terminal = True
    sol = solve_ivp(lambda t, y: model.field(y), (0, 200), z + 1e-8 * v, method="DOP853",
                    rtol=1e-13, atol=1e-15, events=hit, dense_output=True)
    ts = np.linspace(0, sol.t[-1], 20000)
    Z = sol.sol(ts)
    return np.interp(xs, Z[0], Z[2])


def test_against_characteristics(pendulum, u_pendulum_256, u_pendulum_512):
    # the graph of u_- on (0, pi) is the unstable branch of the saddle
    xs = np.linspace(0.05, np.pi, 300)
    exact = _characteristic_oracle(pendulum, xs)
    e256 = np.max(np.abs(interpolate(u_pendulum_256, xs[:, None]) - exact))
    e512 = np.max(np.abs(interpolate(u_pendulum_512, xs[:, None]) - exact))
    assert e256 <= u_pendulum_256.slack
    assert e512 <= 0.6 * e256
    assert exact[-1] == pytest.approx(0.89963, abs=1e-4)


def test_grid_convergence_constant(pendulum, u_pendulum_256, u_pendulum_512):
    g128 = solve_hj(pendulum, Grid(1, 128))
    c1 = convergence_constant(g128, u_pendulum_256)
    c2 = convergence_constant(u_pendulum_256, u_pendulum_512)
    # measured 0.55 and 0.65; C stays below the Lipschitz bound
    assert c1 <= 2.0 and c2 <= 2.0
    with pytest.raises(ContractError):
        convergence_constant(u_pendulum_256, u_pendulum_256)


def test_interpolation_exact_at_nodes_and_periodic(u_torus2_64):
    gf = u_torus2_64
    nodes = gf.grid.nodes()
    assert np.allclose(interpolate(gf, nodes), gf.values, atol=1e-14)
    assert np.allclose(interpolate(gf, nodes + 2 * np.pi), gf.values, atol=1e-12)


def test_torus2_symmetry(u_torus2_64):
    v = u_torus2_64.values
    assert np.allclose(v, v.T, atol=1e-12)
    assert v.min() >= -2 - 1e-6 and v.max() <= 2 + 1e-6


def test_save_load_round_trip(tmp_path, u_pendulum_256):
    u_pendulum_256.save(tmp_path / "u")
    raw = (tmp_path / "u.bin").read_bytes()
    assert len(raw) == 256 * 8
    assert np.array_equal(np.frombuffer(raw, "<f8"), u_pendulum_256.values)
    back = GridFunction.load(tmp_path / "u")
    assert np.array_equal(back.values, u_pendulum_256.values)
    assert back.lipschitz_bound == u_pendulum_256.lipschitz_bound
    assert back.residual_norm == u_pendulum_256.residual_norm
    u_pendulum_256.to_csv(tmp_path / "u.csv")
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "x1,value" and len(lines) == 257


def test_non_convergence_reports_last_update(pendulum):
    with pytest.raises(NonConvergenceError) as info:
        solve_hj(pendulum, Grid(1, 64), max_iters=5)
    assert info.value.last_update > 0


def test_dimension_mismatch(pendulum):
    with pytest.raises(ContractError):
        solve_hj(pendulum, Grid(2, 32))


def test_runtime_512(pendulum):
    t0 = time.perf_counter()
    solve_hj(pendulum, Grid(1, 512))
    assert time.perf_counter() - t0 < 60
