import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from contactdyn.errors import ContractError, InputDomainError
from contactdyn.flow import (Direction, IntegratorConfig, TerminationKind, check_first_lyapunov,
                             check_second_lyapunov, classify_limit, energy_residual, integrate, integrate_batch,
                             second_lyapunov_values, sign_preserved)
from contactdyn.hj import GridFunction, interpolate
from contactdyn.model import HamiltonianModel, MonotoneSign, random_states, torus_diff


def state_with_energy(model, x, p, H):
    # pendulum-like registry: solve lam*sign*u = H - kinetic - V
    kin = 0.5 * model.kinetic_scale * p**2
    return np.array([x, p, (H - kin - model.V(np.array([x]))) / (model.sign * model.lam)])


def test_config_validation():
    with pytest.raises(InputDomainError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(InputDomainError):
        IntegratorConfig(t_final=-1.0)
    assert IntegratorConfig(direction="backward").t_end == -10.0


def test_energy_decay_closed_form(pendulum):
    z0 = state_with_energy(pendulum, 0.4, 0.3, 1.0)
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=1.0))
    assert tr.termination.kind is TerminationKind.REACHED_T_FINAL
    assert tr.times[-1] == 1.0
    assert tr.h_values[-1] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_trajectory_matches_scipy(pendulum):
    z0 = np.array([0.5, 1.2, 0.3])
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=6.0, rel_tol=1e-11, abs_tol=1e-13))
    ref = solve_ivp(lambda t, z: pendulum.field(z), (0, 6.0), z0, method="DOP853", rtol=1e-13, atol=1e-15)
    zr = ref.y[:, -1]
    assert abs(torus_diff(tr.points[-1, 0], zr[0])) < 1e-8
    assert np.allclose(tr.points[-1, 1:], zr[1:], atol=1e-8)


def test_x_is_wrapped_and_times_monotone(pendulum):
    tr = integrate(pendulum, np.array([6.0, 3.0, 0.0]), IntegratorConfig(t_final=5.0))
    assert np.all((tr.x >= 0) & (tr.x < 2 * np.pi))
    assert np.all(np.diff(tr.times) > 0)
    assert len(tr.times) == len(tr.points) == len(tr.h_values)


def test_dense_output_consistent(pendulum):
    tr = integrate(pendulum, np.array([1.0, 0.5, 0.2]), IntegratorConfig(t_final=3.0))
    mid = 0.5 * (tr.times[3] + tr.times[4])
    ref = solve_ivp(lambda t, z: pendulum.field(z), (0, mid), tr.points[0], method="DOP853",
                    rtol=1e-13, atol=1e-15).y[:, -1]
    z = tr(mid)[0]
    assert abs(torus_diff(z[0], ref[0])) < 1e-8 and np.allclose(z[1:], ref[1:], atol=1e-8)
    assert np.allclose(tr(tr.times[5])[0], tr.points[5], atol=1e-12)


def test_equilibrium_start_terminates(pendulum):
    tr = integrate(pendulum, np.array([0.0, 0.0, -1.0]), IntegratorConfig(t_final=5.0))
    assert tr.termination.kind is TerminationKind.EQUILIBRIUM
    assert np.allclose(tr.points, [0.0, 0.0, -1.0])


def test_backward_run_blows_up(pendulum):
    z0 = state_with_energy(pendulum, 1.0, 0.5, 0.01)
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=20.0, direction="backward"))
    assert tr.termination.kind is TerminationKind.BLOW_UP
    assert tr.termination.time > -20.0
    assert np.all(np.diff(tr.times) < 0)
    # |H| grows like exp(lam |t|) until the escape
    k = len(tr) // 2
    # backward runs amplify the integration error at the same rate
    assert abs(tr.h_values[k]) == pytest.approx(0.01 * math.exp(-tr.times[k]), rel=1e-4)


def test_energy_residual_examples(pendulum, rng):
    z = random_states(pendulum, 5, rng)
    for z0 in z:
        tr = integrate(pendulum, z0, IntegratorConfig(t_final=20.0))
        assert energy_residual(pendulum, tr) <= 1e-8
        assert sign_preserved(tr)
    # orbit on H = 0
    z0 = state_with_energy(pendulum, 2.0, 0.7, 0.0)
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=10.0, rel_tol=1e-10, abs_tol=1e-12))
    assert energy_residual(pendulum, tr) <= 1e-10
    assert np.max(np.abs(tr.h_values)) <= 1e-10
    single = integrate(pendulum, z0, IntegratorConfig(t_final=0.0))
    assert len(single) == 1 and energy_residual(pendulum, single) == 0.0


def test_energy_residual_non_constant_rate():
    # a mechanical (M+) model has dH/du = -lam: identity with exp(+lam t) backwards
    m = HamiltonianModel.pendulum(0.8, MonotoneSign.PLUS)
    tr = integrate(m, np.array([1.0, 0.2, 0.3]), IntegratorConfig(t_final=5.0, direction="backward"))
    assert energy_residual(m, tr) <= 1e-8


def test_tolerance_scaling(pendulum, rng):
    z = random_states(pendulum, 10, rng)
    for z0 in z:
        a = energy_residual(pendulum, integrate(pendulum, z0, IntegratorConfig(t_final=10.0, rel_tol=1e-8)))
        b = energy_residual(pendulum, integrate(pendulum, z0, IntegratorConfig(t_final=10.0, rel_tol=5e-9)))
        assert b <= 2 * a + 1e-15


def test_first_lyapunov_examples(pendulum):
    z0 = state_with_energy(pendulum, 0.4, 0.3, 1.0)
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=5.0))
    assert check_first_lyapunov(pendulum, tr)
    eq = integrate(pendulum, np.array([np.pi, 0.0, 1.0]), IntegratorConfig(t_final=3.0))
    assert eq.h_values[0] == 0.0 and check_first_lyapunov(pendulum, eq)
    mirror = pendulum.mirrored()
    z0m = z0 * np.array([1, -1, -1])
    trm = integrate(mirror, z0m, IntegratorConfig(t_final=5.0, direction="backward"))
    assert check_first_lyapunov(mirror, trm)


def test_first_lyapunov_detects_violation(pendulum):
    z0 = state_with_energy(pendulum, 0.4, 0.3, 1.0)
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=2.0))
    tr.h_values = tr.h_values.copy()
    tr.h_values[-1] *= 1.01
    v = check_first_lyapunov(pendulum, tr)
    assert not v and v.witness_time == tr.times[-1]


def test_time_reversal_mirror(pendulum, rng):
    mirror = pendulum.mirrored()
    flip = np.array([1.0, -1.0, -1.0])
    cfg = IntegratorConfig(t_final=4.0, rel_tol=1e-11, abs_tol=1e-13)
    for z0 in random_states(pendulum, 5, rng):
        a = integrate(pendulum, z0, cfg)
        b = integrate(mirror, z0 * flip, IntegratorConfig(4.0 * 0 + 1e-11, 1e-13, t_final=4.0, direction="backward"))
        zb = b.points[-1] * flip
        assert abs(torus_diff(a.points[-1, 0], zb[0])) < 1e-8
        assert np.allclose(a.points[-1, 1:], zb[1:], atol=1e-8)


def test_third_lyapunov_on_zero_level(pendulum, rng):
    for x0, p0 in rng.uniform([0, -2], [2 * np.pi, 2], (10, 2)):
        z0 = state_with_energy(pendulum, x0, p0, 0.0)
        tr = integrate(pendulum, z0, IntegratorConfig(t_final=15.0))
        du = np.diff(tr.u)
        assert np.all(du >= -1e-9 * np.diff(tr.times))


def test_second_lyapunov_examples(pendulum, u_pendulum_256):
    gf = u_pendulum_256
    x0 = np.array([2.0])
    z0 = np.array([2.0, 0.3, float(interpolate(gf, x0)) - 2.0])
    assert second_lyapunov_values(pendulum, gf, z0[None])[0] == pytest.approx(2.0)
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=10.0), uref=gf)
    assert check_second_lyapunov(pendulum, tr, gf)
    assert np.all(tr.f_values <= 2 * np.exp(-tr.times) + gf.slack)
    # F <= 0 at the start: vacuous for negative F, and F stays below the slack
    z1 = np.array([1.0, 0.2, float(interpolate(gf, np.array([1.0]))) + 0.5])
    tr1 = integrate(pendulum, z1, IntegratorConfig(t_final=10.0), uref=gf)
    assert check_second_lyapunov(pendulum, tr1, gf)
    assert np.all(tr1.f_values <= gf.slack)


def test_second_lyapunov_on_graph(pendulum, u_pendulum_256):
    gf = u_pendulum_256
    i = 40
    x = gf.grid.nodes().ravel()[i]
    p = (gf.values[i + 1] - gf.values[i - 1]) / (2 * gf.grid.h)
    z0 = np.array([x, p, gf.values[i]])
    tr = integrate(pendulum, z0, IntegratorConfig(t_final=10.0), uref=gf)
    assert np.max(tr.f_values) <= gf.slack
    # the orbit lies on the graph of u_- until it first reaches x = pi; past
    # that it spirals into (pi, 0, 1) where F = u_-(pi) - 1 < 0
    first = np.argmax(tr.x[:, 0] >= np.pi)
    assert first > 0
    assert np.max(np.abs(tr.f_values[:first])) <= gf.slack
    assert tr.f_values[-1] == pytest.approx(gf(np.array([np.pi])) - 1.0, abs=1e-3)


def test_second_lyapunov_sign_mismatch(pendulum, u_pendulum_256):
    plus = pendulum.mirrored()
    tr = integrate(plus, np.array([0.1, 0.0, 0.0]), IntegratorConfig(t_final=1.0, direction="backward"))
    with pytest.raises(ContractError):
        check_second_lyapunov(plus, tr, u_pendulum_256)


def test_classify_limit(pendulum):
    eqs = [np.array([0.0, 0.0, -1.0]), np.array([np.pi, 0.0, 1.0])]
    v = classify_limit(pendulum, np.array([0.1, 0.0, -math.cos(0.1)]), eqs)
    assert v.kind == "equilibrium" and v.equilibrium_id == 1
    v = classify_limit(pendulum, eqs[0], eqs)
    assert v.kind == "equilibrium" and v.equilibrium_id == 0
    v = classify_limit(pendulum, np.array([1.0, 2.5, 3.0]), eqs)
    assert v.kind == "equilibrium" and v.equilibrium_id == 1
    v = classify_limit(pendulum, np.array([1.0, 2.5, 3.0]), eqs, t_max=1.0)
    assert v.kind == "undecided"


def test_batch_matches_single(pendulum, rng):
    Z = random_states(pendulum, 8, rng)
    b = integrate_batch(pendulum, Z, IntegratorConfig(t_final=5.0), t_eval=[0.0, 2.5, 5.0])
    assert b.points.shape == (3, 8, 3)
    for i, z0 in enumerate(Z):
        s = integrate(pendulum, z0, IntegratorConfig(t_final=5.0))
        assert abs(torus_diff(b.points[-1, i, 0], s.points[-1, 0])) < 1e-7
        assert np.allclose(b.points[-1, i, 1:], s.points[-1, 1:], atol=1e-7)


def test_batch_reports_blow_up(pendulum):
    Z = np.array([[1.0, 0.5, 2.0], [1.0, 0.5, -0.5]])
    b = integrate_batch(pendulum, Z, IntegratorConfig(t_final=30.0, direction="backward"))
    assert b.termination is TerminationKind.BLOW_UP and b.blown_up.any()


def test_batch_empty(pendulum):
    b = integrate_batch(pendulum, np.zeros((0, 3)), IntegratorConfig(t_final=1.0), t_eval=[1.0])
    assert b.points.shape == (1, 0, 3)


def test_trajectory_export(tmp_path, pendulum, u_pendulum_256):
    tr = integrate(pendulum, np.array([1.0, 0.0, 0.0]), IntegratorConfig(t_final=1.0), uref=u_pendulum_256)
    tr.save(tmp_path / "traj")
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "t,x1,p1,u,H,F"
    assert len(lines) == len(tr) + 1
    assert '"kind": "reached-t-final"' in (tmp_path / "traj.json").read_text()
