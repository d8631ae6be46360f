"""Phase space, Hamiltonian families and the contact vector field.

The configuration space is the flat torus T^n (n = 1 or 2).  A phase point is
z = (x, p, u) with x on the torus, p a covector and u a real scalar.  All model
evaluations are vectorized: ``x`` and ``p`` have shape ``(..., n)`` and ``u``
has shape ``(...)``.  Packed states are arrays of shape ``(..., 2n + 1)``
laid out as ``[x_1..x_n, p_1..p_n, u]``.

The registry families are

* ``mechanical``:     H = k/2 |p - s|^2 + V(x) + sign * lam * u
* ``discounted``:     mechanical with sign fixed to +1 (the (M-) case)
* ``quadratic_test``: mechanical with a constant potential

where ``k`` is the kinetic scale, ``s`` an optional momentum shift (zero
except in tests of the minimizer map) and V a trigonometric polynomial.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from .errors import InputDomainError, SolverFailure

TWO_PI = 2.0 * math.pi


class Family(str, enum.Enum):
    MECHANICAL = "mechanical"
    DISCOUNTED = "discounted"
    QUADRATIC_TEST = "quadratic_test"


class MonotoneSign(str, enum.Enum):
    """Which monotonicity assumption the model satisfies."""

    MINUS = "minus"  # dH/du >= lam
    PLUS = "plus"  # dH/du <= -lam

    @property
    def factor(self) -> float:
        return 1.0 if self is MonotoneSign.MINUS else -1.0

    def flipped(self) -> "MonotoneSign":
        return MonotoneSign.PLUS if self is MonotoneSign.MINUS else MonotoneSign.MINUS


# -- torus helpers -----------------------------------------------------------


def wrap(x):
    """Canonical representative of angles in [0, 2pi)."""
    w = np.mod(x, TWO_PI)
    # np.mod can return exactly 2pi for tiny negative inputs
    return np.where(w >= TWO_PI, 0.0, w)


def torus_diff(a, b):
    """Shortest signed difference a - b per coordinate, in [-pi, pi)."""
    return np.mod(np.asarray(a) - np.asarray(b) + math.pi, TWO_PI) - math.pi


def torus_distance(a, b):
    """Flat periodic distance on T^n (last axis holds the coordinates)."""
    return np.linalg.norm(torus_diff(a, b), axis=-1)


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.ndim != 1 or c.size not in (1, 2):
            raise InputDomainError(f"torus dimension must be 1 or 2, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputDomainError("non-finite torus coordinate")
        object.__setattr__(self, "coords", tuple(float(v) for v in wrap(c)))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords)

    def distance(self, other: "TorusPoint") -> float:
        return float(torus_distance(self.as_array(), other.as_array()))


@dataclass(frozen=True)
class PhasePoint:
    """A point z = (x, p, u); x is wrapped onto [0, 2pi)^n on construction."""

    x: np.ndarray
    p: np.ndarray
    u: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        u = float(self.u)
        if x.shape != p.shape or x.ndim != 1 or x.size not in (1, 2):
            raise InputDomainError(f"x and p must be matching 1- or 2-vectors, got {x.shape}, {p.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p)) and math.isfinite(u)):
            raise InputDomainError("phase point has non-finite components")
        object.__setattr__(self, "x", wrap(x))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.x.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.p, [self.u]])

    @classmethod
    def from_array(cls, z) -> "PhasePoint":
        z = np.asarray(z, dtype=float)
        n = (z.size - 1) // 2
        return cls(z[:n], z[n : 2 * n], z[2 * n])

    def __eq__(self, other):
        if not isinstance(other, PhasePoint):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    __hash__ = None


def split_state(z, n: int):
    """Views (x, p, u) of a packed state array of shape (..., 2n+1)."""
    return z[..., :n], z[..., n : 2 * n], z[..., 2 * n]


def pack_state(x, p, u):
    x, p = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.concatenate([x, p, u[..., None]], axis=-1)


def as_state(z, n: int | None = None) -> np.ndarray:
    """Accept a PhasePoint or array-like and return a finite packed state array."""
    if isinstance(z, PhasePoint):
        arr = z.as_array()
    else:
        arr = np.asarray(z, dtype=float)
    if n is not None and arr.shape[-1] != 2 * n + 1:
        raise InputDomainError(f"state has length {arr.shape[-1]}, expected {2 * n + 1}")
    if not np.all(np.isfinite(arr)):
        raise InputDomainError("state contains NaN or Inf")
    return arr


# -- potentials and models ---------------------------------------------------


@dataclass(frozen=True)
class PotentialTerm:
    """One term ``amplitude * cos(<freq, x> + phase)`` of a trigonometric polynomial."""

    freq: tuple
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "freq", tuple(int(k) for k in np.atleast_1d(self.freq)))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "phase", float(self.phase))
        if not (math.isfinite(self.amplitude) and math.isfinite(self.phase)):
            raise InputDomainError("potential coefficients must be finite")

    @property
    def is_constant(self) -> bool:
        return all(k == 0 for k in self.freq)


@dataclass(frozen=True)
class HamiltonianModel:
    """Parametric monotone contact Hamiltonian with exact derivatives.

    Immutable after construction and safe to share between threads.
    """

    family: Family
    lam: float
    monotone_sign: MonotoneSign = MonotoneSign.MINUS
    potential: tuple = ()
    kinetic_scale: float = 1.0
    dim: int = 1
    momentum_shift: tuple | None = None

    def __post_init__(self):
        family = Family(self.family)
        sign = MonotoneSign(self.monotone_sign)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "monotone_sign", sign)
        terms = tuple(t if isinstance(t, PotentialTerm) else PotentialTerm(*t) for t in self.potential)
        object.__setattr__(self, "potential", terms)
        if self.dim not in (1, 2):
            raise InputDomainError(f"torus dimension must be 1 or 2, got {self.dim}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise InputDomainError(f"lambda must be a finite positive number, got {self.lam}")
        if not (math.isfinite(self.kinetic_scale) and self.kinetic_scale > 0):
            raise InputDomainError(f"kinetic_scale must be positive, got {self.kinetic_scale}")
        for t in terms:
            if len(t.freq) != self.dim:
                raise InputDomainError(f"frequency {t.freq} does not match dimension {self.dim}")
        if family is Family.DISCOUNTED and sign is not MonotoneSign.MINUS:
            raise InputDomainError("discounted family is defined with the (M-) sign")
        if family is Family.QUADRATIC_TEST and not all(t.is_constant for t in terms):
            raise InputDomainError("quadratic_test family requires a constant potential")
        if self.momentum_shift is not None:
            s = tuple(float(v) for v in np.atleast_1d(self.momentum_shift))
            if len(s) != self.dim or not all(math.isfinite(v) for v in s):
                raise InputDomainError("momentum_shift must be a finite vector of length dim")
            object.__setattr__(self, "momentum_shift", s if any(s) else None)

    # -- convenience constructors --

    @classmethod
    def pendulum(cls, lam: float = 1.0, sign=MonotoneSign.MINUS, amplitude: float = 1.0) -> "HamiltonianModel":
        family = Family.DISCOUNTED if MonotoneSign(sign) is MonotoneSign.MINUS else Family.MECHANICAL
        return cls(family, lam, sign, (PotentialTerm((1,), amplitude),))

    @classmethod
    def quadratic_test(cls, lam: float = 1.0, c: float = 0.0, dim: int = 1, sign=MonotoneSign.MINUS):
        terms = (PotentialTerm((0,) * dim, c),) if c else ()
        return cls(Family.QUADRATIC_TEST, lam, sign, terms, dim=dim)

    @classmethod
    def torus2(cls, lam: float = 1.0) -> "HamiltonianModel":
        """V = cos x1 + cos x2 on the 2-torus, discounted."""
        return cls(Family.DISCOUNTED, lam, MonotoneSign.MINUS,
                   (PotentialTerm((1, 0), 1.0), PotentialTerm((0, 1), 1.0)), dim=2)

    def mirrored(self) -> "HamiltonianModel":
        """The model H(x, -p, -u), which swaps (M-) and (M+)."""
        family = Family.MECHANICAL if self.family is Family.DISCOUNTED else self.family
        shift = None if self.momentum_shift is None else tuple(-v for v in self.momentum_shift)
        return HamiltonianModel(family, self.lam, self.monotone_sign.flipped(), self.potential,
                                self.kinetic_scale, self.dim, shift)

    # -- basic properties --

    @property
    def sign(self) -> float:
        return self.monotone_sign.factor

    @property
    def state_dim(self) -> int:
        return 2 * self.dim + 1

    @property
    def shift(self) -> np.ndarray:
        if self.momentum_shift is None:
            return np.zeros(self.dim)
        return np.asarray(self.momentum_shift)

    def to_dict(self) -> dict:
        d = {
            "family": self.family.value,
            "lambda": self.lam,
            "monotone_sign": self.monotone_sign.value,
            "potential": [[list(t.freq), t.amplitude, t.phase] for t in self.potential],
            "kinetic_scale": self.kinetic_scale,
            "dim": self.dim,
        }
        if self.momentum_shift is not None:
            d["momentum_shift"] = list(self.momentum_shift)
        return d

    # -- potential --

    def _phases(self, x):
        x = np.asarray(x, dtype=float)
        return [(t, x @ np.asarray(t.freq, dtype=float) + t.phase) for t in self.potential]

    def V(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for t, arg in self._phases(x):
            out = out + t.amplitude * np.cos(arg)
        return out

    def grad_V(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for t, arg in self._phases(x):
            k = np.asarray(t.freq, dtype=float)
            out = out - (t.amplitude * np.sin(arg))[..., None] * k
        return out

    def hess_V(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.dim,))
        for t, arg in self._phases(x):
            k = np.asarray(t.freq, dtype=float)
            out = out - (t.amplitude * np.cos(arg))[..., None, None] * np.outer(k, k)
        return out

    @cached_property
    def min_potential(self) -> float:
        """Global minimum of V over the torus (grid search, then local polish)."""
        if all(t.is_constant for t in self.potential):
            return float(self.V(np.zeros(self.dim)))
        m = 256 if self.dim == 1 else 96
        axis = np.arange(m) * (TWO_PI / m)
        pts = np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        vals = self.V(pts)
        best = float(vals.min())
        for i in np.argsort(vals)[:4]:
            res = optimize.minimize(lambda y: float(self.V(y)), pts[i], jac=lambda y: self.grad_V(y),
                                    method="BFGS", options={"gtol": 1e-13})
            best = min(best, float(res.fun))
        return best

    @cached_property
    def max_potential(self) -> float:
        neg = HamiltonianModel(self.family, self.lam, self.monotone_sign,
                               tuple(PotentialTerm(t.freq, -t.amplitude, t.phase) for t in self.potential),
                               self.kinetic_scale, self.dim)
        return -neg.min_potential

    # -- Hamiltonian and derivatives --

    def H(self, x, p, u):
        q = np.asarray(p, dtype=float) - self.shift
        return 0.5 * self.kinetic_scale * np.sum(q * q, axis=-1) + self.V(x) + self.sign * self.lam * np.asarray(u)

    def dH_dx(self, x, p, u):
        return self.grad_V(x) + 0.0 * np.asarray(p)

    def dH_dp(self, x, p, u):
        return self.kinetic_scale * (np.asarray(p, dtype=float) - self.shift)

    def dH_du(self, x, p, u):
        return np.full(np.broadcast_shapes(np.shape(u), np.shape(p)[:-1]), self.sign * self.lam)

    def d2H_dp2(self, x, p, u):
        shape = np.shape(p)[:-1]
        return np.broadcast_to(self.kinetic_scale * np.eye(self.dim), shape + (self.dim, self.dim)).copy()

    def d2H_dx2(self, x, p, u):
        return self.hess_V(x)

    # -- packed-state forms --

    def hamiltonian(self, z):
        x, p, u = split_state(np.asarray(z, dtype=float), self.dim)
        return self.H(x, p, u)

    def field(self, z):
        """Contact vector field X_H on packed states of shape (..., 2n+1)."""
        z = np.asarray(z, dtype=float)
        x, p, u = split_state(z, self.dim)
        Hp = self.dH_dp(x, p, u)
        Hu = self.dH_du(x, p, u)
        out = np.empty_like(z)
        out[..., : self.dim] = Hp
        out[..., self.dim : 2 * self.dim] = -self.dH_dx(x, p, u) - Hu[..., None] * p
        out[..., 2 * self.dim] = np.sum(Hp * p, axis=-1) - self.H(x, p, u)
        return out

    def field_jacobian(self, z):
        """Jacobian of X_H, shape (..., 2n+1, 2n+1).

        The registry families are separable, so every mixed second derivative
        (x-p, x-u, p-u) and d2H/du2 vanish.
        """
        z = np.asarray(z, dtype=float)
        n = self.dim
        x, p, u = split_state(z, n)
        Hpp = self.d2H_dp2(x, p, u)
        Hxx = self.d2H_dx2(x, p, u)
        Hu = self.dH_du(x, p, u)
        Hx = self.dH_dx(x, p, u)
        J = np.zeros(z.shape[:-1] + (2 * n + 1, 2 * n + 1))
        J[..., :n, n : 2 * n] = Hpp
        J[..., n : 2 * n, :n] = -Hxx
        J[..., n : 2 * n, n : 2 * n] = -Hu[..., None, None] * np.eye(n)
        J[..., 2 * n, :n] = -Hx
        J[..., 2 * n, n : 2 * n] = np.einsum("...ij,...j->...i", Hpp, p)
        J[..., 2 * n, 2 * n] = -Hu
        return J


# -- operations ---------------------------------------------------------------


def eval_hamiltonian(model: HamiltonianModel, z) -> float:
    """H(x, p, u) at a single phase point."""
    return float(model.hamiltonian(as_state(z, model.dim)))


def eval_vector_field(model: HamiltonianModel, z):
    """Return (xdot, pdot, udot) at a single phase point."""
    v = model.field(as_state(z, model.dim))
    n = model.dim
    return v[:n].copy(), v[n : 2 * n].copy(), float(v[2 * n])


def coercivity_radius(model: HamiltonianModel, e: float, U: float) -> float:
    """Radius P(e, U) beyond which H > e on the half-line of u bounded by U.

    For (M-) the half-line is u >= U, for (M+) it is u <= U.  Closed form for
    the mechanical registry: k/2 |p - s|^2 + min V + sign*lam*U > e.
    """
    slack = e - model.min_potential - model.sign * model.lam * U
    r = math.sqrt(max(0.0, 2.0 * slack / model.kinetic_scale))
    return r + float(np.linalg.norm(model.shift))


def p_star(model: HamiltonianModel, x, u, *, tol: float = 1e-10, max_iter: int = 50):
    """Minimizer of the strictly convex map p -> H(x, p, u) via damped Newton.

    Vectorized over leading dimensions of ``x`` (shape (..., n)) and ``u``.
    Raises SolverFailure when the residual |dH/dp| does not drop below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise InputDomainError("non-finite input to p_star")
    shape = np.broadcast_shapes(x.shape[:-1], u.shape)
    x = np.broadcast_to(x, shape + (model.dim,))
    u = np.broadcast_to(u, shape)
    p = np.zeros(shape + (model.dim,))
    for _ in range(max_iter):
        g = model.dH_dp(x, p, u)
        res = np.linalg.norm(g, axis=-1)
        if np.all(res <= tol):
            return p
        step = np.linalg.solve(model.d2H_dp2(x, p, u), g[..., None])[..., 0]
        h0 = model.H(x, p, u)
        alpha = np.ones(shape)
        for _ in range(30):
            trial = p - alpha[..., None] * step
            worse = model.H(x, trial, u) > h0 + 1e-14 * np.abs(h0)
            if not np.any(worse):
                break
            alpha = np.where(worse, 0.5 * alpha, alpha)
        p = p - alpha[..., None] * step
    res = np.linalg.norm(model.dH_dp(x, p, u), axis=-1)
    if np.all(res <= tol):
        return p
    raise SolverFailure(f"Newton for the p-minimizer did not converge (residual {res.max():.3e})")


# -- assumption checks --------------------------------------------------------


class VerdictStatus(str, enum.Enum):
    VERIFIED = "verified-on-sample"
    VIOLATED = "violated"
    NOT_APPLICABLE = "not-applicable"


@dataclass
class AssumptionVerdict:
    status: VerdictStatus
    witness: PhasePoint | None = None
    value: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = {"status": self.status.value, "note": self.note}
        if self.witness is not None:
            d["witness"] = self.witness.as_array().tolist()
        if self.value is not None:
            d["value"] = self.value
        return d


@dataclass(frozen=True)
class SampleBox:
    """x ranges over the whole torus; |p_i| <= p_max; u in [u_min, u_max]."""

    p_max: float = 3.0
    u_min: float = -2.0
    u_max: float = 2.0

    def __post_init__(self):
        vals = (self.p_max, self.u_min, self.u_max)
        if not all(math.isfinite(v) for v in vals) or self.p_max <= 0 or self.u_min > self.u_max:
            raise InputDomainError(f"invalid sample box {self}")


@dataclass
class AssumptionReport:
    verdicts: dict
    box: SampleBox
    density: int
    radius_table: list

    @property
    def all_verified(self) -> bool:
        return all(v.status is not VerdictStatus.VIOLATED for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "box": {"p_max": self.box.p_max, "u_min": self.box.u_min, "u_max": self.box.u_max},
            "density": self.density,
            "radius_table": [{"e": e, "U": U, "P": P} for e, U, P in self.radius_table],
            "all_verified": self.all_verified,
        }


def _sample_grid(model: HamiltonianModel, box: SampleBox, density: int):
    n = model.dim
    xs = np.arange(density) * (TWO_PI / density)
    ps = np.linspace(-box.p_max, box.p_max, density)
    us = np.linspace(box.u_min, box.u_max, density)
    mesh = np.meshgrid(*([xs] * n + [ps] * n + [us]), indexing="ij")
    z = np.stack([m.ravel() for m in mesh], axis=-1)
    return split_state(z, n) + (z,)


def _ray_directions(n: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    ang = np.arange(16) * (TWO_PI / 16)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def check_assumptions(model: HamiltonianModel, box: SampleBox | None = None, density: int = 8,
                      radius_requests=((0.0, None),)) -> AssumptionReport:
    """Check (H1)-(H3) and the monotonicity assumption on a sample grid.

    ``radius_requests`` lists (e, U) pairs for the coercivity table; ``U=None``
    means the box edge on the relevant side (u_min for (M-), u_max for (M+)).
    (H4) needs the equilibria and is reported as not-applicable here.
    """
    box = box or SampleBox()
    if density < 8:
        raise InputDomainError("sample density must be at least 8 points per axis")
    x, p, u, z = _sample_grid(model, box, density)
    verdicts = {}

    # (H1) positive definite p-Hessian
    eig = np.linalg.eigvalsh(model.d2H_dp2(x, p, u))[..., 0]
    i = int(np.argmin(eig))
    if eig[i] > 0:
        verdicts["H1"] = AssumptionVerdict(VerdictStatus.VERIFIED, value=float(eig[i]))
    else:
        verdicts["H1"] = AssumptionVerdict(VerdictStatus.VIOLATED, PhasePoint.from_array(z[i]), float(eig[i]),
                                           "smallest eigenvalue of d2H/dp2 is not positive")

    # (H2) coercivity: radial scan from P(e, U) out to 4 P(e, U)
    edge = box.u_min if model.monotone_sign is MonotoneSign.MINUS else box.u_max
    table = []
    for e, U in radius_requests:
        U = edge if U is None else U
        table.append((float(e), float(U), coercivity_radius(model, e, U)))
    h2 = AssumptionVerdict(VerdictStatus.VERIFIED)
    xs = np.arange(density) * (TWO_PI / density)
    xg = np.stack(np.meshgrid(*([xs] * model.dim), indexing="ij"), axis=-1).reshape(-1, model.dim)
    for e, U, P in table:
        r = np.linspace(max(P, 1e-8), 4 * max(P, 1e-8), 32)
        dirs = _ray_directions(model.dim)
        # (x, direction, radius) grid at the extreme u allowed by the half-line
        shape = (len(xg), len(dirs), len(r), model.dim)
        pts = np.broadcast_to(r[None, None, :, None] * dirs[None, :, None, :], shape)
        xx = np.broadcast_to(xg[:, None, None, :], shape)
        uu = np.full(pts.shape[:-1], U)
        hv = model.H(xx, pts, uu)
        beyond = hv[..., 1:]
        bad_level = beyond <= e
        bad_mono = np.diff(hv, axis=-1) <= 0
        bad = bad_level | bad_mono
        if np.any(bad):
            idx = np.unravel_index(np.argmax(bad), bad.shape)
            w = PhasePoint(xx[idx[0], idx[1], idx[2] + 1], pts[idx[0], idx[1], idx[2] + 1], U)
            h2 = AssumptionVerdict(VerdictStatus.VIOLATED, w, float(beyond[idx]),
                                   f"H not increasing above level {e} beyond P={P:.6g}")
            break
    verdicts["H2"] = h2

    # (H3) dH/dp vanishes on the zero section
    zero = np.zeros_like(p)
    g = np.linalg.norm(model.dH_dp(x, zero, u), axis=-1)
    i = int(np.argmax(g))
    if g[i] < 1e-10:
        verdicts["H3"] = AssumptionVerdict(VerdictStatus.VERIFIED, value=float(g[i]))
    else:
        verdicts["H3"] = AssumptionVerdict(VerdictStatus.VIOLATED, PhasePoint(x[i], zero[i], u[i]), float(g[i]),
                                           "p = 0 is not the minimizer of p -> H")

    verdicts["H4"] = AssumptionVerdict(VerdictStatus.NOT_APPLICABLE,
                                       note="needs the equilibrium set; checked by find_equilibria")

    # (M-)/(M+) monotonicity in u
    key = "M-" if model.monotone_sign is MonotoneSign.MINUS else "M+"
    hu = model.sign * model.dH_du(x, p, u)
    i = int(np.argmin(hu))
    lam = model.lam
    if lam > 0 and hu[i] >= lam * (1 - 1e-12):
        verdicts[key] = AssumptionVerdict(VerdictStatus.VERIFIED, value=float(model.sign * hu[i]))
    else:
        verdicts[key] = AssumptionVerdict(VerdictStatus.VIOLATED, PhasePoint.from_array(z[i]),
                                          float(model.sign * hu[i]),
                                          f"|dH/du| = {abs(hu[i]):.6g} is not bounded below by a positive lambda")
    return AssumptionReport(verdicts, box, density, table)


def random_states(model: HamiltonianModel, count: int, rng: np.random.Generator,
                  p_max: float = 2.0, u_range=(-2.0, 2.0)) -> np.ndarray:
    """Uniform random packed states, handy for tests and property checks."""
    n = model.dim
    x = rng.uniform(0.0, TWO_PI, (count, n))
    p = rng.uniform(-p_max, p_max, (count, n))
    u = rng.uniform(*u_range, count)
    return pack_state(x, p, u)


def lattice(n: int, m: int) -> np.ndarray:
    """Uniform lattice of m^n points on T^n, row-major."""
    axis = np.arange(m) * (TWO_PI / m)
    return np.array(list(itertools.product(axis, repeat=n)))
