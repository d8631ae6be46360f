"""Viscosity solutions of the stationary equations H(x, Du, u) = 0 on a periodic grid.

For (M-) models the solution u_- of H(x, Du, u) = 0 is computed by pseudo-time
marching of a monotone Lax-Friedrichs scheme started from the constant
super-solution.  For (M+) models u_+ is obtained from the mirrored model
H(x, -p, -u), whose (M-) solution is -u_+.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ContractError, InputDomainError, NonConvergenceError, SolverFailure
from .model import TWO_PI, HamiltonianModel, MonotoneSign, coercivity_radius, wrap


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with N points per axis; spacing = (2/N) * pi."""

    dim: int
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InputDomainError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.N < 32 or self.N & (self.N - 1):
            raise InputDomainError(f"points per axis must be a power of two >= 32, got {self.N}")

    @property
    def spacing_over_pi(self) -> Fraction:
        return Fraction(2, self.N)

    @property
    def h(self) -> float:
        return TWO_PI / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dim

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (N,)*dim + (dim,), row-major axis order."""
        axis = np.arange(self.N) * self.h
        return np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1)


class SolutionKind(str, enum.Enum):
    U_MINUS = "u_minus"
    U_PLUS = "u_plus"


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray
    kind: SolutionKind = SolutionKind.U_MINUS
    lipschitz_bound: float = math.inf
    residual_norm: float = math.nan
    bounds: tuple = (-math.inf, math.inf)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = SolutionKind(self.kind)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InputDomainError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InputDomainError("grid function has non-finite values")

    @property
    def slack(self) -> float:
        """Interpolation slack C*h used wherever F is evaluated from this grid."""
        return self.lipschitz_bound * self.grid.h

    def __call__(self, x):
        return interpolate(self, x)

    # -- persistence --

    def header(self) -> dict:
        return {
            "dim": self.grid.dim,
            "N": self.grid.N,
            "kind": self.kind.value,
            "lipschitz_bound": self.lipschitz_bound,
            "residual_norm": self.residual_norm,
            "bounds": list(self.bounds),
            "dtype": "<f8",
            "order": "row-major",
        }

    def save(self, stem) -> tuple:
        """Write ``stem.json`` (header) and ``stem.bin`` (little-endian float64)."""
        from .io import atomic_write_bytes, atomic_write_text

        stem = Path(stem)
        atomic_write_bytes(stem.with_suffix(".bin"), self.values.astype("<f8").tobytes(order="C"))
        atomic_write_text(stem.with_suffix(".json"), json.dumps(self.header(), indent=2, sort_keys=True))
        return stem.with_suffix(".json"), stem.with_suffix(".bin")

    @classmethod
    def load(cls, stem) -> "GridFunction":
        stem = Path(stem)
        hdr = json.loads(stem.with_suffix(".json").read_text())
        grid = Grid(int(hdr["dim"]), int(hdr["N"]))
        vals = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").reshape(grid.shape)
        return cls(grid, vals.astype(float), hdr["kind"], float(hdr["lipschitz_bound"]),
                   float(hdr["residual_norm"]), tuple(hdr.get("bounds", (-math.inf, math.inf))))

    def to_csv(self, path):
        from .io import atomic_write_text
        import io as _io

        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.grid.dim)] + ["value"])
        nodes = self.grid.nodes().reshape(-1, self.grid.dim)
        for xs, v in zip(nodes, self.values.ravel()):
            w.writerow([repr(float(c)) for c in xs] + [repr(float(v))])
        atomic_write_text(path, buf.getvalue())


@dataclass
class OneSidedGradients:
    """Forward and backward periodic differences; arrays of shape (dim,) + grid shape."""

    forward: np.ndarray
    backward: np.ndarray
    max_norm: np.ndarray

    @property
    def centered(self) -> np.ndarray:
        return 0.5 * (self.forward + self.backward)


def interpolate(gf: GridFunction, x) -> np.ndarray:
    """Periodic piecewise-multilinear interpolation at points x of shape (..., dim)."""
    x = wrap(np.asarray(x, dtype=float))
    n, N, h = gf.grid.dim, gf.grid.N, gf.grid.h
    s = x / h
    i0 = np.floor(s).astype(int)
    f = s - i0
    i0 %= N
    i1 = (i0 + 1) % N
    v = gf.values
    if n == 1:
        return (1 - f[..., 0]) * v[i0[..., 0]] + f[..., 0] * v[i1[..., 0]]
    a0, b0 = i0[..., 0], i0[..., 1]
    a1, b1 = i1[..., 0], i1[..., 1]
    fx, fy = f[..., 0], f[..., 1]
    return ((1 - fx) * (1 - fy) * v[a0, b0] + fx * (1 - fy) * v[a1, b0]
            + (1 - fx) * fy * v[a0, b1] + fx * fy * v[a1, b1])


def _differences(values: np.ndarray, h: float):
    fwd = np.stack([(np.roll(values, -1, axis=k) - values) / h for k in range(values.ndim)])
    bwd = np.stack([(values - np.roll(values, 1, axis=k)) / h for k in range(values.ndim)])
    return fwd, bwd


def one_sided_gradients(gf: GridFunction) -> OneSidedGradients:
    fwd, bwd = _differences(gf.values, gf.grid.h)
    mx = np.sqrt(np.sum(np.maximum(np.abs(fwd), np.abs(bwd)) ** 2, axis=0))
    return OneSidedGradients(fwd, bwd, mx)


def _root_in_u(model: HamiltonianModel, x, p, bound: float = 1e6) -> np.ndarray:
    """Solve H(x, p, u) = 0 for u, nodewise (H strictly monotone in u)."""
    x = np.asarray(x, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), x.shape)
    lo = np.full(x.shape[:-1], -bound)
    hi = np.full(x.shape[:-1], bound)
    s = model.sign
    f_lo, f_hi = s * model.H(x, p, lo), s * model.H(x, p, hi)
    if np.any(f_lo > 0) or np.any(f_hi < 0):
        raise SolverFailure(f"H(x, p, u) = 0 has no root with |u| <= {bound:g}; "
                            "coercivity or monotonicity fails")
    u = np.zeros(x.shape[:-1])
    for _ in range(100):
        g = model.H(x, p, u)
        du = g / model.dH_du(x, p, u)
        u_new = np.clip(u - du, lo, hi)
        if np.all(np.abs(u_new - u) <= 1e-15 * (1 + np.abs(u))):
            return u_new
        u = u_new
    if np.max(np.abs(model.H(x, p, u))) < 1e-12:
        return u
    raise SolverFailure("Newton iteration for the u-root failed to converge")


def constant_bounds(model: HamiltonianModel, grid: Grid | None = None) -> tuple:
    """(U_lower, U_upper): extremes of the root U(x) of H(x, 0, U(x)) = 0 over grid nodes."""
    grid = grid or Grid(model.dim, 256 if model.dim == 1 else 64)
    if grid.dim != model.dim:
        raise ContractError("grid and model dimensions differ")
    x = grid.nodes().reshape(-1, model.dim)
    U = _root_in_u(model, x, np.zeros_like(x))
    return float(U.min()), float(U.max())


def _residual(model, values, h, lipschitz, nodes):
    """Centered-difference residual |H(x, Du, u)|, everywhere and at smooth nodes."""
    fwd, bwd = _differences(values, h)
    pc = np.moveaxis(0.5 * (fwd + bwd), 0, -1)
    res = np.abs(model.H(nodes, pc, values))
    smooth = np.all(np.abs(fwd - bwd) <= 2 * h * lipschitz, axis=0)
    return res, smooth


def solve_hj(model: HamiltonianModel, grid: Grid, tol: float | None = None,
             max_iters: int = 2_000_000, monitor_every: int = 100) -> GridFunction:
    """Viscosity solution u_- (for (M-)) or u_+ (for (M+)) on ``grid``.

    Jacobi pseudo-time iteration of the Lax-Friedrichs scheme

        u <- u - dtau * [H(x, (D-u + D+u)/2, u) - sum_i sigma_i (D+_i u - D-_i u)/2]

    with sigma_i bounding |dH/dp_i| over the a-priori box
    {|p| <= P(0, U_lower), U_lower <= u <= U_upper} and
    dtau = 0.45 h / (sum sigma + lam h).  Stops when the max update per unit
    pseudo-time drops below ``tol`` (default 1e-10 * lam).
    """
    if grid.dim != model.dim:
        raise ContractError("grid and model dimensions differ")
    if model.monotone_sign is MonotoneSign.PLUS:
        mirror = solve_hj(model.mirrored(), grid, tol, max_iters, monitor_every)
        lo, hi = mirror.bounds
        return GridFunction(grid, -mirror.values, SolutionKind.U_PLUS, mirror.lipschitz_bound,
                            mirror.residual_norm, (-hi, -lo), dict(mirror.diagnostics))

    tol = 1e-10 * model.lam if tol is None else tol
    h = grid.h
    nodes = grid.nodes()
    U_lower, U_upper = constant_bounds(model, grid)
    P0 = coercivity_radius(model, 0.0, U_lower)
    # |dH/dp_i| over the a-priori box; the registry has dH/dp = k (p - s)
    sigma = model.kinetic_scale * P0 + np.abs(model.shift)
    lam_eff = model.lam
    dtau = 0.45 * h / (float(np.sum(sigma)) + lam_eff * h)

    u = np.full(grid.shape, U_upper)
    max_increase = 0.0
    update = math.inf
    for it in range(1, max_iters + 1):
        fwd, bwd = _differences(u, h)
        pc = np.moveaxis(0.5 * (fwd + bwd), 0, -1)
        visc = np.tensordot(sigma, fwd - bwd, axes=1) * 0.5
        hhat = model.H(nodes, pc, u) - visc
        update = float(np.max(np.abs(hhat)))
        u_new = u - dtau * hhat
        if it % monitor_every == 0 or update < tol:
            max_increase = max(max_increase, float(np.max(u_new - u)))
        u = u_new
        if update < tol:
            break
    else:
        raise NonConvergenceError(f"Lax-Friedrichs iteration did not reach tol={tol:g} in {max_iters} "
                                  f"iterations (last update {update:.3e})", update)

    res, smooth = _residual(model, u, h, P0, nodes)
    diagnostics = {
        "iterations": it,
        "last_update": update,
        "dtau": dtau,
        "sigma": sigma.tolist(),
        "max_increase": max_increase,
        "residual_all_nodes": float(res.max()),
        "nonsmooth_nodes": int(np.count_nonzero(~smooth)),
    }
    return GridFunction(grid, u, SolutionKind.U_MINUS, P0, float(res[smooth].max(initial=0.0)),
                        (U_lower, U_upper), diagnostics)


def hj_residual_on_characteristics(model: HamiltonianModel, gf: GridFunction, samples=None) -> float:
    """Max |H(x, Du, u(x))| over sampled nodes where u is numerically differentiable.

    A node counts as differentiable when its forward and backward differences
    agree within 2 h L per axis (L the Lipschitz bound).  ``samples`` is an
    index array into the flattened grid, an int (evenly spaced subset) or None
    (all nodes).
    """
    if gf.kind is SolutionKind.U_PLUS:
        mirror = GridFunction(gf.grid, -gf.values, SolutionKind.U_MINUS, gf.lipschitz_bound)
        return hj_residual_on_characteristics(model.mirrored(), mirror, samples)
    res, smooth = _residual(model, gf.values, gf.grid.h, gf.lipschitz_bound, gf.grid.nodes())
    res, smooth = res.ravel(), smooth.ravel()
    if samples is None:
        idx = np.arange(res.size)
    elif np.isscalar(samples):
        idx = np.unique(np.linspace(0, res.size - 1, int(samples)).round().astype(int))
    else:
        idx = np.asarray(samples, dtype=int)
    idx = idx[smooth[idx]]
    return float(res[idx].max(initial=0.0))


def convergence_constant(coarse: GridFunction, fine: GridFunction) -> float:
    """max |u_N - u_2N| over shared nodes divided by the coarse spacing h_N."""
    if fine.grid.dim != coarse.grid.dim or fine.grid.N != 2 * coarse.grid.N:
        raise ContractError("fine grid must refine the coarse grid by a factor of two")
    sl = (slice(None, None, 2),) * coarse.grid.dim
    return float(np.max(np.abs(fine.values[sl] - coarse.values)) / coarse.grid.h)
