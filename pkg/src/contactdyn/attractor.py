"""Trapping sets and finite-time point-cloud approximations of the maximal attractor."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ContractError, InputDomainError, InternalContradiction, SamplingFailure
from .flow import Direction, IntegratorConfig, integrate_batch, second_lyapunov_values
from .hj import GridFunction, SolutionKind, constant_bounds, interpolate
from .io import write_csv, write_json
from .model import TWO_PI, HamiltonianModel, MonotoneSign, coercivity_radius, p_star, split_state, wrap

log = logging.getLogger(__name__)

MIN_ACCEPTANCE = 1e-4
_CHUNK = 4096


class Membership(str, enum.Enum):
    IN_Y = "in_Y"
    IN_Y_DELTA = "in_Y_delta"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class TrappingSpec:
    """Parameters of the trapping set Y_delta together with the solved u_-/u_+.

    ``u_range`` is the u-interval of the sampling box; it contains the
    u-projection of Y_delta.  ``coercivity_radius`` bounds |p| on Y_delta.
    """

    delta: float
    e_bound: float
    u_bound: float
    coercivity_radius: float
    uref: GridFunction | None
    u_range: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        if not self.delta > 0:
            raise InputDomainError("delta must be positive")

    @property
    def grid_slack(self) -> float:
        return self.uref.slack if self.uref is not None else math.nan

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "e_bound": self.e_bound,
            "u_bound": self.u_bound,
            "coercivity_radius": self.coercivity_radius,
            "u_range": list(self.u_range),
            "grid_slack": self.grid_slack,
        }


def make_trapping_spec(model: HamiltonianModel, uref: GridFunction, delta: float = 0.5) -> TrappingSpec:
    """Build the sampling box for Y_delta from the constant bounds of u_-/u_+.

    For (M-): F < delta forces u > U_lower - delta, and H < delta forces
    lam u < delta - min V, so u < U_upper + delta/lam.  (M+) is the mirror.
    """
    if uref is None:
        raise ContractError("a solved GridFunction is required")
    lo, hi = constant_bounds(model, uref.grid)
    reach = max(delta, delta / model.lam)
    if model.monotone_sign is MonotoneSign.MINUS:
        u_range, u_bound = (lo - delta, hi + reach), lo
        radius = coercivity_radius(model, delta, lo - delta)
    else:
        u_range, u_bound = (lo - reach, hi + delta), hi
        radius = coercivity_radius(model, delta, hi + delta)
    return TrappingSpec(delta, delta, u_bound, radius, uref, u_range)


def _require_uref(model, spec):
    if spec.uref is None:
        raise ContractError("trapping spec carries no GridFunction")
    want = SolutionKind.U_MINUS if model.monotone_sign is MonotoneSign.MINUS else SolutionKind.U_PLUS
    if spec.uref.kind is not want:
        raise ContractError(f"{model.monotone_sign.value} model needs {want.value}")


def _masks(spec, model, Z, closed=False):
    _require_uref(model, spec)
    Z = np.asarray(Z, dtype=float).reshape(-1, model.state_dim)
    H = model.hamiltonian(Z)
    F = second_lyapunov_values(model, spec.uref, Z)
    in_y = (np.abs(H) <= 1e-9) & (F <= spec.grid_slack)
    if closed:
        in_d = (H <= spec.delta) & (F <= spec.delta)
    else:
        in_d = (H < spec.delta) & (F < spec.delta)
    return in_y, in_d | in_y


def classify_points(spec: TrappingSpec, model: HamiltonianModel, Z, closed: bool = False) -> np.ndarray:
    """Vectorized membership; returns an array of Membership values.

    ``closed`` replaces the strict inequalities of Y_delta by <= (its closure).
    """
    in_y, in_d = _masks(spec, model, Z, closed)
    out = np.empty(len(in_y), dtype=object)
    for i in range(len(in_y)):
        out[i] = Membership.IN_Y if in_y[i] else Membership.IN_Y_DELTA if in_d[i] else Membership.OUTSIDE
    return out


def membership(spec: TrappingSpec, model: HamiltonianModel, z) -> Membership:
    return classify_points(spec, model, z)[0]


def sample_trapping_set(spec: TrappingSpec, model: HamiltonianModel, n: int, seed: int) -> np.ndarray:
    """Exactly ``n`` states of Y_delta by rejection sampling from the TrappingSpec box.

    Draws come in fixed-size chunks from ``numpy.random.default_rng(seed)`` so
    the result depends only on (spec, model, n, seed).
    """
    _require_uref(model, spec)
    if n < 0:
        raise InputDomainError("sample count must be non-negative")
    d = model.dim
    if n == 0:
        return np.zeros((0, model.state_dim))
    rng = np.random.default_rng(seed)
    accepted, drawn, kept = [], 0, 0
    while kept < n:
        x = rng.uniform(0.0, TWO_PI, size=(_CHUNK, d))
        if d == 1:
            p = rng.uniform(-1.0, 1.0, size=(_CHUNK, 1)) * spec.coercivity_radius
        else:
            # uniform in the disc
            r = spec.coercivity_radius * np.sqrt(rng.uniform(size=_CHUNK))
            th = rng.uniform(0.0, TWO_PI, size=_CHUNK)
            p = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        p = p + model.shift
        u = rng.uniform(*spec.u_range, size=(_CHUNK, 1))
        Z = np.concatenate([wrap(x), p, u], axis=1)
        ok = _masks(spec, model, Z)[1]
        drawn += _CHUNK
        accepted.append(Z[ok])
        kept += int(ok.sum())
        if drawn >= 100 * _CHUNK and kept / drawn < MIN_ACCEPTANCE:
            raise SamplingFailure(f"acceptance rate {kept / drawn:.2e} below {MIN_ACCEPTANCE:g}")
    return np.concatenate(accepted)[:n]


@dataclass
class AttractorApprox:
    """Point cloud Phi^T(samples) with per-point diagnostics."""

    points: np.ndarray
    T: float
    delta: float
    n_samples: int
    seed: int
    dim: int
    H: np.ndarray
    F: np.ndarray
    h_bound: float
    f_bound: float
    initial_max_abs_h: float
    snapshots: dict = field(default_factory=dict, repr=False)

    @property
    def max_abs_h(self) -> float:
        return float(np.max(np.abs(self.H), initial=0.0))

    @property
    def max_f(self) -> float:
        return float(np.max(self.F, initial=-math.inf))

    def header(self) -> list:
        n = self.dim
        return [f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["u", "H", "F"]

    def metadata(self, extra: dict | None = None) -> dict:
        out = {
            "delta": self.delta,
            "T": self.T,
            "n": self.n_samples,
            "seed": self.seed,
            "bounds": {"h_bound": self.h_bound, "f_bound": self.f_bound},
            "max_abs_H": self.max_abs_h,
            "max_F": self.max_f,
            "initial_max_abs_H": self.initial_max_abs_h,
        }
        if extra:
            out.update(extra)
        return out

    def save(self, stem, extra: dict | None = None):
        stem = Path(stem)
        rows = (list(z) + [h, f] for z, h, f in zip(self.points, self.H, self.F))
        write_csv(stem.with_suffix(".csv"), self.header(), rows)
        write_json(stem.with_suffix(".json"), self.metadata(extra))


def _flow_cfg(model, cfg, T):
    cfg = cfg or IntegratorConfig()
    direction = Direction.FORWARD if model.monotone_sign is MonotoneSign.MINUS else Direction.BACKWARD
    return IntegratorConfig(cfg.rel_tol, cfg.abs_tol, cfg.max_step, T, direction, cfg.blow_up_radius,
                            cfg.equilibrium_tol)


def approximate_attractor(model: HamiltonianModel, spec: TrappingSpec, T: float, n: int, seed: int,
                          cfg: IntegratorConfig | None = None, snapshot_times=()) -> AttractorApprox:
    """Flow n samples of Y_delta for time T (backwards for (M+)) and collect the image.

    ``snapshot_times`` (non-negative, <= T) requests intermediate clouds, stored
    in ``snapshots`` keyed by time.  The exponential bounds on |H| and F are
    checked on the result; a violation, or any blow-up, raises
    InternalContradiction since neither can happen on a correct orbit.
    """
    if not T > 0:
        raise InputDomainError("T must be positive")
    run = _flow_cfg(model, cfg, T)
    Z0 = sample_trapping_set(spec, model, n, seed)
    sgn = run.direction.factor
    times = sorted({float(t) for t in snapshot_times} | {float(T)})
    if times[0] < 0:
        raise InputDomainError("snapshot times must be non-negative")
    batch = integrate_batch(model, Z0, run, t_eval=[sgn * t for t in times])
    if batch.termination.value == "blow-up":
        bad = np.flatnonzero(batch.blown_up)
        raise InternalContradiction(f"orbit from the trapping set blew up (rows {bad[:5].tolist()})")
    if batch.termination.value != "reached-t-final":
        raise InternalContradiction(f"integration ended with {batch.termination.value}")
    snaps = {t: batch.points[i] for i, t in enumerate(times)}
    pts = snaps[float(T)]
    H = model.hamiltonian(pts)
    F = second_lyapunov_values(model, spec.uref, pts)
    decay = math.exp(-model.lam * T)
    h0 = float(np.max(np.abs(model.hamiltonian(Z0)), initial=0.0))
    # |H(z0)| can exceed delta where H < -delta, so the bound uses the sample maximum;
    # abs_tol covers integration error once the decayed scale falls below it
    scale = decay * max(spec.delta, h0)
    h_bound = scale * (1 + 1e-6) + 100 * run.rel_tol * scale + run.abs_tol
    f_bound = decay * spec.delta + spec.grid_slack
    approx = AttractorApprox(pts, float(T), spec.delta, n, seed, model.dim, H, F, h_bound, f_bound, h0, snaps)
    if n and approx.max_abs_h > h_bound:
        raise InternalContradiction(f"max |H| = {approx.max_abs_h:.3e} exceeds the decay bound {h_bound:.3e}")
    if n and approx.max_f > f_bound:
        raise InternalContradiction(f"max F = {approx.max_f:.3e} exceeds the decay bound {f_bound:.3e}")
    return approx


# -- probes on clouds ----------------------------------------------------------


@dataclass
class Verdict:
    passed: bool
    witness: object = None
    note: str = ""

    def __bool__(self):
        return self.passed

    def to_dict(self) -> dict:
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        elif isinstance(w, tuple):
            w = [v.tolist() if isinstance(v, np.ndarray) else v for v in w]
        return {"passed": self.passed, "witness": w, "note": self.note}


def graph_property_check(points, dim: int, xp_tol: float = 1e-6, u_gap: float = 1e-4) -> Verdict:
    """The projection forgetting u must be injective on the cloud."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2 * dim + 1)
    if len(pts) < 2:
        return Verdict(True, note="fewer than two points")
    box = np.array([TWO_PI] * dim + [0.0] * dim)
    tree = cKDTree(pts[:, : 2 * dim], boxsize=box)
    pairs = tree.query_pairs(xp_tol, output_type="ndarray")
    if len(pairs):
        gaps = np.abs(pts[pairs[:, 0], -1] - pts[pairs[:, 1], -1])
        k = int(np.argmax(gaps))
        if gaps[k] > u_gap:
            i, j = pairs[k]
            return Verdict(False, (pts[i], pts[j]), f"u differs by {gaps[k]:.3e}")
    return Verdict(True)


def _tree(points, dim):
    box = np.array([TWO_PI] * dim + [0.0] * (dim + 1))
    pts = np.array(points, dtype=float).reshape(-1, 2 * dim + 1)
    pts[:, :dim] = wrap(pts[:, :dim])
    return cKDTree(pts, boxsize=box), pts


@dataclass
class HausdorffReport:
    a_to_b: float
    b_to_a: float

    @property
    def distance(self) -> float:
        return max(self.a_to_b, self.b_to_a)

    def to_dict(self) -> dict:
        return {"a_to_b": self.a_to_b, "b_to_a": self.b_to_a, "hausdorff": self.distance}


def hausdorff(a, b, dim: int) -> HausdorffReport:
    """Directed and symmetric Hausdorff distances under the product metric."""
    ta, pa = _tree(a, dim)
    tb, pb = _tree(b, dim)
    if len(pa) == 0 or len(pb) == 0:
        if len(pa) == len(pb):
            return HausdorffReport(0.0, 0.0)
        return HausdorffReport(math.inf, math.inf)
    return HausdorffReport(float(tb.query(pa)[0].max()), float(ta.query(pb)[0].max()))


def cluster_count(points, dim: int, scale_factor: float = 5.0) -> int:
    """Single-linkage clusters at scale_factor times the mean nearest-neighbour distance."""
    tree, pts = _tree(points, dim)
    if len(pts) < 2:
        return len(pts)
    nn = tree.query(pts, k=2)[0][:, 1]
    r = scale_factor * float(nn.mean())
    pairs = tree.query_pairs(r, output_type="ndarray")
    from scipy.sparse import coo_matrix

    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(pts), len(pts)))
    return int(connected_components(adj, directed=False)[0])


def retraction_path(model: HamiltonianModel, uref: GridFunction, Z, ts) -> np.ndarray:
    """Deformation G(z, t) for t in [0, 1]; shape (len(ts), m, 2n+1).

    On [0, 1/2] p moves in a straight line to P*(x, u); on [1/2, 1] u slides
    to u_-(x) (u_+(x) for (M+)) with p kept at P*(x, u).
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, model.state_dim)
    x, p, u = split_state(Z, model.dim)
    target = interpolate(uref, x)
    pstar0 = p_star(model, x, u)
    out = []
    for t in np.asarray(ts, dtype=float):
        if t <= 0.5:
            s = 2.0 * t
            pt, ut = (1 - s) * p + s * pstar0, u
        else:
            s = 2.0 * t - 1.0
            ut = (1 - s) * u + s * target
            pt = p_star(model, x, ut)
        out.append(np.concatenate([x, pt, ut[:, None]], axis=1))
    return np.asarray(out)


def retraction_probe(model: HamiltonianModel, spec: TrappingSpec, samples: int = 500, seed: int = 0,
                     steps: int = 21) -> Verdict:
    """Sample Y_delta and check every deformation stage stays in its closure."""
    _require_uref(model, spec)
    Z = sample_trapping_set(spec, model, samples, seed)
    ts = np.linspace(0.0, 1.0, steps)
    path = retraction_path(model, spec.uref, Z, ts)
    for k, t in enumerate(ts):
        bad = np.flatnonzero(~_masks(spec, model, path[k], closed=True)[1])
        if len(bad):
            return Verdict(False, (Z[bad[0]], float(t)), f"{len(bad)} points outside at t={t:g}")
    return Verdict(True, note=f"{len(Z)} samples x {steps} steps contained")


__all__ = [
    "Membership", "TrappingSpec", "make_trapping_spec", "membership", "classify_points",
    "sample_trapping_set", "AttractorApprox", "approximate_attractor", "graph_property_check",
    "HausdorffReport", "hausdorff", "cluster_count", "retraction_path", "retraction_probe", "Verdict",
]
