"""Integration of the contact flow and the Lyapunov diagnostics along orbits."""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _dopri
from .errors import ContractError, InputDomainError
from .hj import GridFunction, SolutionKind, interpolate
from .io import write_csv, write_json
from .model import HamiltonianModel, MonotoneSign, PhasePoint, as_state, split_state, torus_distance, wrap

log = logging.getLogger(__name__)


class Direction(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"

    @property
    def factor(self) -> float:
        return 1.0 if self is Direction.FORWARD else -1.0


class TerminationKind(str, enum.Enum):
    REACHED_T_FINAL = "reached-t-final"
    EQUILIBRIUM = "converged-to-equilibrium"
    BLOW_UP = "blow-up"
    STEP_UNDERFLOW = "step-underflow"


@dataclass
class Termination:
    kind: TerminationKind
    time: float
    point: np.ndarray

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "time": self.time, "point": self.point.tolist()}


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = math.inf
    t_final: float = 10.0
    direction: Direction = Direction.FORWARD
    blow_up_radius: float = 1e6
    equilibrium_tol: float = 1e-9

    def __post_init__(self):
        self.direction = Direction(self.direction)
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InputDomainError("integrator tolerances must be positive")
        if not (self.max_step > 0 and self.t_final >= 0 and self.blow_up_radius > 0 and self.equilibrium_tol >= 0):
            raise InputDomainError(f"invalid integrator configuration {self}")

    @property
    def t_end(self) -> float:
        return self.direction.factor * self.t_final


@dataclass
class Trajectory:
    """Orbit samples at accepted steps plus the dense-output coefficients.

    ``points`` has shape (m, 2n+1) with x wrapped into [0, 2pi).  ``dense[i]``
    holds the continuous-extension coefficients of the step from
    ``times[i]`` to ``times[i+1]``.
    """

    dim: int
    times: np.ndarray
    points: np.ndarray
    h_values: np.ndarray
    termination: Termination
    dense: np.ndarray = field(repr=False, default=None)
    f_values: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    @property
    def x(self):
        return self.points[:, : self.dim]

    @property
    def p(self):
        return self.points[:, self.dim : 2 * self.dim]

    @property
    def u(self):
        return self.points[:, 2 * self.dim]

    @property
    def final(self) -> PhasePoint:
        return PhasePoint.from_array(self.points[-1])

    def __call__(self, t):
        """Dense-output state at time(s) t within the computed span."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        sgn = 1.0 if len(self.times) < 2 or self.times[-1] > self.times[0] else -1.0
        key = sgn * self.times
        idx = np.clip(np.searchsorted(key, sgn * t, side="right") - 1, 0, max(len(self.times) - 2, 0))
        if len(self.times) < 2:
            out = np.repeat(self.points[:1], len(t), axis=0)
        else:
            h = self.times[idx + 1] - self.times[idx]
            sigma = (t - self.times[idx]) / h
            powers = np.stack([sigma, sigma**2, sigma**3, sigma**4], axis=-1)
            out = self.points[idx] + h[:, None] * np.einsum("kdj,kj->kd", self.dense[idx], powers)
        out[:, : self.dim] = wrap(out[:, : self.dim])
        return out

    def to_rows(self):
        f = self.f_values if self.f_values is not None else np.full(len(self.times), math.nan)
        for t, z, hv, fv in zip(self.times, self.points, self.h_values, f):
            yield [t, *z, hv, fv]

    def header(self) -> list:
        n = self.dim
        return ["t"] + [f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["u", "H", "F"]

    def metadata(self) -> dict:
        return {
            "dim": self.dim,
            "steps": len(self.times),
            "t_start": float(self.times[0]),
            "t_end": float(self.times[-1]),
            "termination": self.termination.to_dict(),
        }

    def save(self, stem):
        from pathlib import Path

        stem = Path(stem)
        write_csv(stem.with_suffix(".csv"), self.header(), self.to_rows())
        write_json(stem.with_suffix(".json"), self.metadata())


def second_lyapunov_values(model: HamiltonianModel, uref: GridFunction, states) -> np.ndarray:
    """F = u_-(x) - u for (M-), F = u - u_+(x) for (M+), interpolated from the grid."""
    _check_uref(model, uref)
    x, _, u = split_state(np.asarray(states), model.dim)
    ux = interpolate(uref, x)
    return ux - u if model.monotone_sign is MonotoneSign.MINUS else u - ux


def _check_uref(model, uref):
    want = SolutionKind.U_MINUS if model.monotone_sign is MonotoneSign.MINUS else SolutionKind.U_PLUS
    if uref.kind is not want:
        raise ContractError(f"model with sign {model.monotone_sign.value} needs a {want.value} grid function")
    if uref.grid.dim != model.dim:
        raise ContractError("grid function and model dimensions differ")


def _wrap_x(n):
    def post(y):
        y = y.copy()
        y[..., :n] = wrap(y[..., :n])
        return y
    return post


def integrate(model: HamiltonianModel, z0, cfg: IntegratorConfig | None = None,
              uref: GridFunction | None = None) -> Trajectory:
    """Integrate X_H from z0 over [0, t_final] (or [-t_final, 0] backwards).

    Stops early on blow-up (|u| + |p| > blow_up_radius), on convergence to an
    equilibrium (|X_H| < equilibrium_tol at both ends of an accepted step) and
    on step-size underflow; the reason is recorded in ``termination``.
    """
    cfg = cfg or IntegratorConfig()
    n = model.dim
    y0 = as_state(z0, n).copy()
    y0[:n] = wrap(y0[:n])
    fwd_ok = (model.monotone_sign is MonotoneSign.MINUS) == (cfg.direction is Direction.FORWARD)
    if not fwd_ok:
        log.debug("integrating against the complete direction; blow-up is possible")

    solver = _dopri.DOPRI5(lambda t, y: model.field(y), 0.0, y0, cfg.t_end, cfg.rel_tol, cfg.abs_tol,
                           cfg.max_step, post_step=_wrap_x(n))
    times, points, dense = [0.0], [y0], []
    kind = TerminationKind.REACHED_T_FINAL
    speed_old = float(np.linalg.norm(solver.f))

    def radius(y):
        return abs(y[2 * n]) + float(np.linalg.norm(y[n : 2 * n]))

    if radius(y0) > cfg.blow_up_radius:
        kind = TerminationKind.BLOW_UP
    while kind is TerminationKind.REACHED_T_FINAL and solver.step():
        times.append(solver.t)
        points.append(solver.y)
        dense.append(solver.Q)
        speed = float(np.linalg.norm(solver.f))
        if radius(solver.y) > cfg.blow_up_radius:
            kind = TerminationKind.BLOW_UP
        elif speed < cfg.equilibrium_tol and speed_old < cfg.equilibrium_tol:
            kind = TerminationKind.EQUILIBRIUM
        speed_old = speed
    if solver.status == "underflow":
        kind = TerminationKind.STEP_UNDERFLOW

    times = np.asarray(times)
    points = np.asarray(points)
    dense = np.asarray(dense) if dense else np.zeros((0, 2 * n + 1, 4))
    h_values = model.hamiltonian(points)
    f_values = second_lyapunov_values(model, uref, points) if uref is not None else None
    term = Termination(kind, float(times[-1]), points[-1].copy())
    return Trajectory(n, times, points, h_values, term, dense, f_values)


@dataclass
class BatchTrajectory:
    """Many orbits advanced with a shared adaptive step.

    ``points`` has shape (k, m, 2n+1): k stored times, m orbits.  When
    ``t_eval`` was given the stored times are exactly those instants.
    """

    dim: int
    times: np.ndarray
    points: np.ndarray
    h_values: np.ndarray
    termination: TerminationKind
    blown_up: np.ndarray

    def orbit(self, i: int) -> Trajectory:
        """View orbit ``i`` as a plain Trajectory (without dense output)."""
        pts = self.points[:, i, :]
        term = Termination(self.termination, float(self.times[-1]), pts[-1].copy())
        return Trajectory(self.dim, self.times, pts, self.h_values[:, i], term, None)

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]


def integrate_batch(model: HamiltonianModel, Z0, cfg: IntegratorConfig | None = None,
                    t_eval=None) -> BatchTrajectory:
    """Integrate m initial states at once; x is wrapped after every step.

    The step size is shared, so every orbit is integrated at least as accurately
    as it would be alone.  Integration stops at the first step where some orbit
    leaves the blow-up radius; ``blown_up`` flags those rows.  Equilibrium
    detection is not performed in batch mode.
    """
    cfg = cfg or IntegratorConfig()
    n = model.dim
    Y0 = np.array(Z0, dtype=float).reshape(-1, model.state_dim)
    Y0[:, :n] = wrap(Y0[:, :n])
    if not np.all(np.isfinite(Y0)):
        raise InputDomainError("initial states must be finite")
    m = len(Y0)
    if m == 0:
        t = np.zeros(1) if t_eval is None else np.asarray(t_eval, dtype=float)
        return BatchTrajectory(n, t, np.zeros((len(t), 0, model.state_dim)), np.zeros((len(t), 0)),
                               TerminationKind.REACHED_T_FINAL, np.zeros(0, bool))

    solver = _dopri.DOPRI5(lambda t, y: model.field(y), 0.0, Y0, cfg.t_end, cfg.rel_tol, cfg.abs_tol,
                           cfg.max_step, post_step=_wrap_x(n))

    def radius(Y):
        return np.abs(Y[:, 2 * n]) + np.linalg.norm(Y[:, n : 2 * n], axis=-1)

    sgn = cfg.direction.factor
    if t_eval is None:
        times, points = [0.0], [Y0]
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(sgn * np.diff(t_eval) < 0) or np.any(sgn * t_eval < 0) or np.any(np.abs(t_eval) > cfg.t_final):
            raise InputDomainError("t_eval must be ordered along the integration direction within t_final")
        times, points = [], []
        k = 0
        while k < len(t_eval) and t_eval[k] == 0.0:
            times.append(0.0)
            points.append(Y0)
            k += 1
    kind = TerminationKind.REACHED_T_FINAL
    blown = radius(Y0) > cfg.blow_up_radius
    if np.any(blown):
        kind = TerminationKind.BLOW_UP
    while kind is TerminationKind.REACHED_T_FINAL and solver.step():
        if t_eval is None:
            times.append(solver.t)
            points.append(solver.y)
        else:
            while k < len(t_eval) and sgn * (t_eval[k] - solver.t) <= 0:
                Y = solver.dense(t_eval[k])
                Y[:, :n] = wrap(Y[:, :n])
                if t_eval[k] == solver.t:
                    Y = solver.y.copy()
                times.append(float(t_eval[k]))
                points.append(Y)
                k += 1
        blown = radius(solver.y) > cfg.blow_up_radius
        if np.any(blown):
            kind = TerminationKind.BLOW_UP
    if solver.status == "underflow":
        kind = TerminationKind.STEP_UNDERFLOW
    if kind is TerminationKind.BLOW_UP and t_eval is not None:
        times.append(solver.t)
        points.append(solver.y)
    times = np.asarray(times)
    points = np.asarray(points).reshape(len(times), m, model.state_dim)
    return BatchTrajectory(n, times, points, model.hamiltonian(points), kind, blown)


# -- diagnostics ---------------------------------------------------------------


def _cumulative_du_integral(model: HamiltonianModel, traj: Trajectory) -> np.ndarray:
    """Cumulative integral of dH/du along the orbit, Simpson per step on dense output."""
    if len(traj) < 2:
        return np.zeros(len(traj))
    n = model.dim
    mids = traj(0.5 * (traj.times[:-1] + traj.times[1:]))
    x, p, u = split_state(traj.points, n)
    end_vals = model.dH_du(x, p, u)
    xm, pm, um = split_state(mids, n)
    mid_vals = model.dH_du(xm, pm, um)
    dt = np.diff(traj.times)
    inc = dt / 6.0 * (end_vals[:-1] + 4.0 * mid_vals + end_vals[1:])
    return np.concatenate([[0.0], np.cumsum(inc)])


def energy_residual(model: HamiltonianModel, traj: Trajectory) -> float:
    """max_t |H(z(t)) - exp(-int_0^t dH/du ds) H(z(0))| over stored steps."""
    if len(traj) < 2:
        return 0.0
    integral = _cumulative_du_integral(model, traj)
    predicted = np.exp(-integral) * traj.h_values[0]
    return float(np.max(np.abs(traj.h_values - predicted)))


def sign_preserved(traj: Trajectory, zero_tol: float = 1e-12) -> bool:
    """True when H keeps one sign along the orbit (values below zero_tol count as zero)."""
    h = np.where(np.abs(traj.h_values) <= zero_tol, 0.0, traj.h_values)
    return not (np.any(h > 0) and np.any(h < 0))


@dataclass
class LyapunovVerdict:
    passed: bool
    max_violation: float
    witness_time: float | None = None
    note: str = ""

    def __bool__(self):
        return self.passed


def check_first_lyapunov(model: HamiltonianModel, traj: Trajectory, rel_slack: float = 1e-7,
                         abs_floor: float = 0.0) -> LyapunovVerdict:
    """Check |H(z(t))| <= exp(-lam |t|) |H(z0)| (1 + rel_slack) + abs_floor at every step.

    With the default ``abs_floor`` of zero the bound is purely relative, so once
    exp(-lam t) |H(z0)| rel_slack drops below the rounding error of H the check
    can fail on correct orbits; pass a small floor to compare against that noise.
    """
    bound = np.exp(-model.lam * np.abs(traj.times)) * abs(traj.h_values[0]) * (1 + rel_slack) + abs_floor
    excess = np.abs(traj.h_values) - bound
    i = int(np.argmax(excess))
    if excess[i] <= 0:
        return LyapunovVerdict(True, float(excess[i]))
    return LyapunovVerdict(False, float(excess[i]), float(traj.times[i]), "|H| exceeds exponential bound")


def check_second_lyapunov(model: HamiltonianModel, traj: Trajectory, uref: GridFunction,
                          slack: float | None = None) -> LyapunovVerdict:
    """Check F(z(t+s)) <= exp(-lam s) F(z(t)) + C h for all stored t with F(z(t)) >= 0.

    ``slack`` defaults to the grid function's Lipschitz bound times its spacing.
    """
    _check_uref(model, uref)
    slack = uref.slack if slack is None else slack
    F = second_lyapunov_values(model, uref, traj.points)
    t = np.abs(traj.times)
    worst, witness = -math.inf, None
    for i in np.flatnonzero(F >= 0):
        later = slice(i + 1, None)
        bound = np.exp(-model.lam * (t[later] - t[i])) * F[i] + slack
        if bound.size == 0:
            continue
        ex = F[later] - bound
        j = int(np.argmax(ex))
        if ex[j] > worst:
            worst, witness = float(ex[j]), float(traj.times[i + 1 + j])
    if witness is None:
        return LyapunovVerdict(True, -math.inf, note="vacuous: F < 0 along the orbit")
    return LyapunovVerdict(worst <= 0, worst, None if worst <= 0 else witness)


# -- limit classification ------------------------------------------------------


@dataclass
class LimitVerdict:
    kind: str  # "equilibrium", "none" or "undecided"
    equilibrium_id: int | None = None
    time: float = 0.0
    note: str = ""
    trajectory: Trajectory | None = field(default=None, repr=False)


def classify_limit(model: HamiltonianModel, z0, equilibria, cfg: IntegratorConfig | None = None,
                   t_max: float = 200.0, proximity: float = 1e-6) -> LimitVerdict:
    """Identify the equilibrium an orbit converges to (forward for (M-), backward for (M+)).

    ``equilibria`` is a sequence of packed equilibrium states or objects with a
    ``state`` attribute; the returned id indexes into it.
    """
    base = cfg or IntegratorConfig()
    direction = Direction.FORWARD if model.monotone_sign is MonotoneSign.MINUS else Direction.BACKWARD
    run = IntegratorConfig(base.rel_tol, base.abs_tol, base.max_step, t_max, direction,
                           base.blow_up_radius, base.equilibrium_tol)
    eq_states = np.array([getattr(e, "state", e) for e in equilibria], dtype=float).reshape(-1, model.state_dim)
    traj = integrate(model, z0, run)
    term = traj.termination
    if term.kind is TerminationKind.BLOW_UP:
        return LimitVerdict("none", time=term.time, note="blow-up before a decision", trajectory=traj)
    end = traj.points[-1]
    speed = float(np.linalg.norm(model.field(end)))
    if len(eq_states) and speed < run.equilibrium_tol:
        n = model.dim
        d = np.sqrt(torus_distance(eq_states[:, :n], end[:n]) ** 2
                    + np.sum((eq_states[:, n:] - end[n:]) ** 2, axis=-1))
        k = int(np.argmin(d))
        if d[k] <= proximity:
            return LimitVerdict("equilibrium", k, term.time, trajectory=traj)
    return LimitVerdict("undecided", time=term.time, note=f"T_max={t_max} reached without convergence",
                        trajectory=traj)


def export_json(path, obj):
    write_json(path, obj)


__all__ = [
    "Direction", "IntegratorConfig", "Trajectory", "Termination", "TerminationKind", "integrate",
    "energy_residual", "sign_preserved", "check_first_lyapunov", "check_second_lyapunov",
    "second_lyapunov_values", "classify_limit", "LimitVerdict", "LyapunovVerdict",
]
