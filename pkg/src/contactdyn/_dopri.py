"""Dormand-Prince 5(4) stepper with PI step control and dense output.

The stepper is generic over the right-hand side.  States may be 1-D (a single
ODE) or 2-D of shape (m, d) for a batch of independent systems advanced with a
shared step; the error norm is then the worst per-row RMS norm.
"""

from __future__ import annotations

import math

import numpy as np

C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th order solution and the embedded 4th order one
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension (Shampine), columns multiply sigma, sigma^2, sigma^3, sigma^4
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

ORDER = 5
SAFETY = 0.9
BETA = 0.04
ALPHA = 1 / ORDER - 0.75 * BETA
FAC_MIN, FAC_MAX = 0.2, 10.0


def _norm(x) -> float:
    x = np.asarray(x)
    if x.ndim <= 1:
        return float(np.sqrt(np.mean(x * x)))
    return float(np.max(np.sqrt(np.mean(x * x, axis=-1))))


def dense_eval(y_old, h, Q, sigma):
    """Evaluate the continuous extension at fractions ``sigma`` of a step.

    ``Q`` has shape state_shape + (4,); ``sigma`` may be a scalar or 1-D array.
    """
    sigma = np.asarray(sigma, dtype=float)
    powers = np.stack([sigma, sigma**2, sigma**3, sigma**4], axis=-1)
    if sigma.ndim == 0:
        return y_old + h * (Q @ powers)
    return y_old[None] + h * np.moveaxis(np.tensordot(Q, powers, axes=([-1], [-1])), -1, 0)


class DOPRI5:
    """Adaptive integrator state machine.

    After each successful call to :meth:`step`, ``t_old``, ``y_old``, ``t``,
    ``y``, ``h_last`` and ``Q`` (dense output coefficients) describe the
    accepted step.  ``status`` becomes ``"finished"`` at ``t_bound`` and
    ``"underflow"`` if the step size collapses.
    """

    def __init__(self, fun, t0, y0, t_bound, rtol=1e-9, atol=1e-11, max_step=math.inf,
                 first_step=None, post_step=None):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.t_bound = float(t_bound)
        self.rtol, self.atol = float(rtol), float(atol)
        self.max_step = float(max_step)
        self.post_step = post_step
        self.direction = 1.0 if self.t_bound >= self.t else -1.0
        self.f = np.asarray(fun(self.t, self.y), dtype=float)
        self.nfev = 1
        self.err_old = 1e-4
        self.status = "running" if self.t != self.t_bound else "finished"
        if self.status == "finished":
            self.h_abs = 0.0
        else:
            self.h_abs = min(first_step if first_step else self._initial_step(), self.max_step)
        self.t_old = self.y_old = self.Q = self.h_last = None
        self.f_old = None

    def _initial_step(self) -> float:
        # Hairer, Norsett & Wanner, Solving ODEs I, II.4
        scale = self.atol + np.abs(self.y) * self.rtol
        d0, d1 = _norm(self.y / scale), _norm(self.f / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, abs(self.t_bound - self.t))
        y1 = self.y + h0 * self.direction * self.f
        f1 = np.asarray(self.fun(self.t + h0 * self.direction, y1))
        self.nfev += 1
        d2 = _norm((f1 - self.f) / scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / ORDER)
        return max(min(100 * h0, h1), 1e-12)

    def _stages(self, t, y, f, h):
        K = np.empty((7,) + y.shape)
        K[0] = f
        for s in range(1, 6):
            dy = sum(a * K[j] for j, a in enumerate(A[s])) * h
            K[s] = self.fun(t + C[s] * h, y + dy)
        y_new = y + h * np.tensordot(B, K[:6], axes=1)
        K[6] = self.fun(t + h, y_new)
        self.nfev += 6
        return y_new, K

    def step(self) -> bool:
        if self.status != "running":
            return False
        t, y = self.t, self.y
        min_step = max(1e-14 * abs(self.t_bound), 10 * np.spacing(abs(t)), 1e-300)
        h_abs = self.h_abs
        rejected = False
        while True:
            if h_abs < min_step:
                self.status = "underflow"
                return False
            h = h_abs * self.direction
            t_new = t + h
            if self.direction * (t_new - self.t_bound) > 0:
                t_new = self.t_bound
            h = t_new - t
            h_abs = abs(h)
            with np.errstate(all="ignore"):
                y_new, K = self._stages(t, y, self.f, h)
                scale = self.atol + np.maximum(np.abs(y), np.abs(y_new)) * self.rtol
                err = _norm(h * np.tensordot(E, K, axes=1) / scale)
            if not math.isfinite(err) or not np.all(np.isfinite(y_new)):
                h_abs *= FAC_MIN
                rejected = True
                continue
            if err <= 1.0:
                if err == 0.0:
                    fac = FAC_MAX
                else:
                    fac = SAFETY * err ** (-ALPHA) * self.err_old ** BETA
                    fac = min(FAC_MAX, max(FAC_MIN, fac))
                if rejected:
                    fac = min(1.0, fac)
                self.err_old = max(err, 1e-4)
                break
            h_abs *= max(FAC_MIN, SAFETY * err ** (-ALPHA))
            rejected = True

        self.Q = np.tensordot(K, P, axes=([0], [0]))
        self.t_old, self.y_old, self.f_old = t, y, self.f
        self.h_last = h
        if self.post_step is not None:
            y_new = self.post_step(y_new)
        self.t, self.y, self.f = t_new, y_new, K[6]
        self.h_abs = min(h_abs * fac, self.max_step)
        if self.direction * (self.t - self.t_bound) >= 0:
            self.status = "finished"
        return True

    def dense(self, t):
        """State at time(s) ``t`` inside the last accepted step (before post_step)."""
        sigma = (np.asarray(t, dtype=float) - self.t_old) / self.h_last
        return dense_eval(self.y_old, self.h_last, self.Q, sigma)


def solve(fun, t0, y0, t_bound, rtol=1e-9, atol=1e-11, max_step=math.inf, t_eval=None, post_step=None):
    """Integrate to ``t_bound`` and return (times, states) at accepted steps or at ``t_eval``."""
    solver = DOPRI5(fun, t0, y0, t_bound, rtol, atol, max_step, post_step=post_step)
    if t_eval is None:
        ts, ys = [solver.t], [solver.y.copy()]
        while solver.step():
            ts.append(solver.t)
            ys.append(solver.y.copy())
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        ts, ys = [], []
        k = 0
        while k < len(t_eval) and solver.direction * (t_eval[k] - t0) <= 0:
            ts.append(t_eval[k])
            ys.append(solver.y.copy())
            k += 1
        while k < len(t_eval) and solver.step():
            while k < len(t_eval) and solver.direction * (t_eval[k] - solver.t) <= 0:
                ts.append(t_eval[k])
                ys.append(solver.dense(t_eval[k]))
                k += 1
    if solver.status == "underflow":
        raise RuntimeError(f"step size underflow at t={solver.t}")
    return np.asarray(ts), np.asarray(ys)
