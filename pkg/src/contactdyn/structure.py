"""Equilibria, heteroclinic connection graphs and the discounted reduction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import _dopri
from .attractor import Verdict, cluster_count
from .errors import ContractError, InputDomainError
from .flow import IntegratorConfig, Termination, TerminationKind, Trajectory, classify_limit
from .hj import _root_in_u
from .io import atomic_write_text, write_json
from .model import TWO_PI, Family, HamiltonianModel, MonotoneSign, lattice, split_state, torus_diff, torus_distance, wrap

log = logging.getLogger(__name__)

DEGENERACY_FLOOR = 1e-8
DEDUP_TOL = 1e-6


@dataclass
class Equilibrium:
    x0: np.ndarray
    u0: float
    hessian: np.ndarray
    morse_index: int
    spectrum: np.ndarray
    degenerate: bool

    @property
    def state(self) -> np.ndarray:
        n = len(self.x0)
        return np.concatenate([self.x0, np.zeros(n), [self.u0]])

    def to_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(),
            "u0": self.u0,
            "hessian": self.hessian.tolist(),
            "morse_index": self.morse_index,
            "spectrum": [[float(c.real), float(c.imag)] for c in self.spectrum],
            "degenerate": self.degenerate,
        }


@dataclass
class EquilibriumSet:
    equilibria: list
    anomaly: str = ""

    def __len__(self):
        return len(self.equilibria)

    def __iter__(self):
        return iter(self.equilibria)

    def __getitem__(self, i):
        return self.equilibria[i]

    @property
    def degenerate(self) -> bool:
        return any(e.degenerate for e in self.equilibria)


def _spectrum(model, state):
    ev = np.linalg.eigvals(model.field_jacobian(state))
    # deterministic ordering: by real part, then imaginary part
    return ev[np.lexsort((ev.imag, ev.real))]


def find_equilibria(model: HamiltonianModel, density: int = 16, newton_tol: float = 1e-12,
                    max_iter: int = 50) -> EquilibriumSet:
    """Equilibria (x0, 0, u0): grad_x H(x0, 0, u0) = 0 with u0 the root of H(x0, 0, u) = 0.

    Newton on x -> dH/dx(x, 0, u(x)) from every node of a density^n lattice.
    Seeds whose Newton iteration fails are skipped.  Results are deduplicated
    in torus distance and sorted by (u0, x0).
    """
    if density < 2:
        raise InputDomainError("density must be at least 2")
    n = model.dim
    found = []
    for seed in lattice(n, density):
        x = seed.copy()
        ok = False
        for _ in range(max_iter):
            u = _root_in_u(model, x[None], np.zeros((1, n)))[0]
            g = model.dH_dx(x, np.zeros(n), u)
            if np.linalg.norm(g) <= newton_tol:
                ok = True
                break
            Hxx = model.d2H_dx2(x, np.zeros(n), u)
            try:
                step = np.linalg.solve(Hxx, g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 1e3:
                break
            x = wrap(x - step)
        if not ok:
            log.debug("Newton from seed %s did not converge", seed)
            continue
        u = float(_root_in_u(model, x[None], np.zeros((1, n)))[0])
        if any(torus_distance(e[0], x) <= DEDUP_TOL for e in found):
            continue
        found.append((x, u))

    eqs = []
    for x, u in found:
        zero = np.zeros(n)
        hess = np.atleast_2d(model.d2H_dx2(x, zero, u))
        eig = np.linalg.eigvalsh(hess)
        state = np.concatenate([x, zero, [u]])
        eqs.append(Equilibrium(x, u, hess, int(np.sum(eig < 0)), _spectrum(model, state),
                               bool(abs(np.linalg.det(hess)) < DEGENERACY_FLOOR)))
    eqs.sort(key=lambda e: (e.u0, *e.x0))
    anomaly = "" if eqs else "no equilibria found although (H2)/(H3) guarantee at least one"
    return EquilibriumSet(eqs, anomaly)


# -- connections ---------------------------------------------------------------


@dataclass
class Edge:
    source: int
    target: int
    orbits: list = field(default_factory=list, repr=False)
    u_min: float = math.inf
    u_max: float = -math.inf
    u_monotone: bool = True

    def to_dict(self, orbit_refs=()) -> dict:
        return {"source": self.source, "target": self.target, "u_min": self.u_min, "u_max": self.u_max,
                "u_monotone": self.u_monotone, "n_orbits": len(self.orbits), "orbits": list(orbit_refs)}


@dataclass
class ConnectionGraph:
    nodes: EquilibriumSet
    edges: list
    undecided: list = field(default_factory=list)
    model: HamiltonianModel | None = field(default=None, repr=False)

    def edge_pairs(self) -> list:
        return [(e.source, e.target) for e in self.edges]

    def polylines(self) -> list:
        return [orb.points for e in self.edges for orb in e.orbits]

    def is_acyclic(self) -> bool:
        import graphlib

        ts = graphlib.TopologicalSorter({i: set() for i in range(len(self.nodes))})
        for e in self.edges:
            ts.add(e.target, e.source)
        try:
            tuple(ts.static_order())
        except graphlib.CycleError:
            return False
        return True

    def weakly_connected(self) -> bool:
        m = len(self.nodes)
        if m <= 1:
            return True
        pairs = np.array(self.edge_pairs(), dtype=int).reshape(-1, 2)
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
        return connected_components(adj, directed=True, connection="weak")[0] == 1

    def to_dict(self, orbit_prefix: str = "orbit") -> dict:
        edges, k = [], 0
        for e in self.edges:
            refs = [f"{orbit_prefix}_{k + j}" for j in range(len(e.orbits))]
            k += len(e.orbits)
            edges.append(e.to_dict(refs))
        return {
            "nodes": [dict(eq.to_dict(), id=i) for i, eq in enumerate(self.nodes)],
            "edges": edges,
            "undecided": self.undecided,
            "anomaly": self.nodes.anomaly,
        }

    def edge_list(self) -> str:
        return "".join(f"{e.source} {e.target}\n" for e in self.edges)

    def save(self, directory, stem: str = "graph"):
        from .io import write_csv

        d = Path(directory)
        write_json(d / f"{stem}.json", self.to_dict(f"{stem}_orbit"))
        atomic_write_text(d / f"{stem}.edges", self.edge_list())
        k = 0
        for e in self.edges:
            for orb in e.orbits:
                write_csv(d / f"{stem}_orbit_{k}.csv", orb.header(), orb.to_rows())
                k += 1


def _project_to_zero_level(model, z):
    """Adjust u so that H(z) = 0 exactly (up to Newton tolerance)."""
    n = model.dim
    x, p, _ = split_state(z, n)
    z = z.copy()
    z[2 * n] = _root_in_u(model, x[None], p[None])[0]
    return z


def detect_connections(model: HamiltonianModel, equilibria: EquilibriumSet, eps: float = 1e-5,
                       cfg: IntegratorConfig | None = None, t_max: float = 200.0,
                       monotone_tol: float = 1e-9) -> ConnectionGraph:
    """Shoot from each equilibrium along its unstable eigenvectors (both signs).

    For (M+) models the limit is taken backwards in time, so the shooting
    directions are the stable ones and the seeding equilibrium is the target.
    Seeds are moved onto H = 0 through u before integration.  Orbits that
    reach the same pair of equilibria are merged into one edge.
    """
    if eps <= 0:
        raise InputDomainError("eps must be positive")
    cfg = cfg or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
    minus = model.monotone_sign is MonotoneSign.MINUS
    eq_states = [e.state for e in equilibria]
    edges: dict = {}
    undecided = []
    for i, eq in enumerate(equilibria):
        if eq.degenerate:
            log.info("equilibrium %d is degenerate; skipped", i)
            continue
        J = model.field_jacobian(eq.state)
        vals, vecs = np.linalg.eig(J)
        pick = vals.real > 1e-12 if minus else vals.real < -1e-12
        dirs = []
        for k in np.flatnonzero(pick):
            v = vecs[:, k]
            for w in (v.real, v.imag) if abs(vals[k].imag) > 1e-14 else (v.real,):
                if np.linalg.norm(w) > 1e-12:
                    dirs.append(w / np.linalg.norm(w))
        for v in dirs:
            for s in (1.0, -1.0):
                seed = _project_to_zero_level(model, eq.state + s * eps * v)
                verdict = classify_limit(model, seed, eq_states, cfg, t_max=t_max)
                if verdict.kind != "equilibrium" or verdict.equilibrium_id == i:
                    undecided.append({"from": i, "sign": s, "kind": verdict.kind, "time": verdict.time,
                                      "note": verdict.note})
                    log.info("shot from %d (sign %+g) undecided: %s", i, s, verdict.note or verdict.kind)
                    continue
                j = verdict.equilibrium_id
                src, tgt = (i, j) if minus else (j, i)
                orbit = verdict.trajectory
                order = np.argsort(orbit.times)
                u = orbit.u[order]
                du = np.diff(u)
                mono = bool(np.all(du >= -monotone_tol * np.maximum(np.abs(np.diff(orbit.times[order])), 1.0)))
                e = edges.setdefault((src, tgt), Edge(src, tgt))
                e.orbits.append(orbit)
                e.u_min = min(e.u_min, float(u.min()))
                e.u_max = max(e.u_max, float(u.max()))
                e.u_monotone = e.u_monotone and mono
    ordered = [edges[k] for k in sorted(edges)]
    return ConnectionGraph(equilibria, ordered, undecided, model)


def _densify(poly, dim, spacing):
    """Linear resampling of a polyline so consecutive points are <= spacing apart."""
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 2:
        return poly
    a, b = poly[:-1], poly[1:]
    d = b - a
    d[:, :dim] = torus_diff(b[:, :dim], a[:, :dim])
    lens = np.linalg.norm(d, axis=1)
    counts = np.maximum(1, np.ceil(lens / spacing).astype(int))
    out = [poly[:1]]
    for ai, di, c in zip(a, d, counts):
        s = (np.arange(1, c + 1) / c)[:, None]
        out.append(ai + s * di)
    res = np.concatenate(out)
    res[:, :dim] = wrap(res[:, :dim])
    return res


def distance_to_structure(graph: ConnectionGraph, points, tol_struct: float = 1e-2) -> np.ndarray:
    """Product-metric distance from each point to equilibria union edge polylines.

    Polylines are resampled at tol_struct/20, so the result overestimates the
    true distance by at most tol_struct/40.
    """
    n = graph.nodes[0].x0.size if len(graph.nodes) else 1
    parts = [np.array([e.state for e in graph.nodes]).reshape(-1, 2 * n + 1)]
    parts += [_densify(p, n, tol_struct / 20) for p in graph.polylines()]
    ref = np.concatenate(parts)
    if len(ref) == 0:
        return np.full(len(points), math.inf)
    tree = cKDTree(ref, boxsize=np.array([TWO_PI] * n + [0.0] * (n + 1)))
    pts = np.array(points, dtype=float).reshape(-1, 2 * n + 1)
    pts[:, :n] = wrap(pts[:, :n])
    return tree.query(pts)[0]


@dataclass
class TheoremBVerdict:
    status: str  # "passed", "violated" or "not-applicable"
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "passed"

    def to_dict(self) -> dict:
        return {"status": self.status, "checks": {k: v.to_dict() for k, v in self.checks.items()}}


def verify_theorem_b(graph: ConnectionGraph, cloud, tol_struct: float = 1e-2) -> TheoremBVerdict:
    """Check the attractor cloud against the equilibria and connecting orbits."""
    if graph.nodes.degenerate or len(graph.nodes) == 0:
        return TheoremBVerdict("not-applicable", {})
    cloud = np.asarray(cloud, dtype=float)
    n = graph.nodes[0].x0.size
    checks = {}
    if len(cloud):
        d = distance_to_structure(graph, cloud, tol_struct)
        k = int(np.argmax(d))
        checks["proximity"] = Verdict(bool(d[k] <= tol_struct), None if d[k] <= tol_struct else cloud[k],
                                      f"max distance {d[k]:.3e}")
    else:
        checks["proximity"] = Verdict(True, note="empty cloud")
    bad = [e for e in graph.edges if not graph.nodes[e.source].u0 < graph.nodes[e.target].u0]
    checks["u_ordering"] = Verdict(not bad, (bad[0].source, bad[0].target) if bad else None)
    clusters = cluster_count(cloud, n) if len(cloud) else 0
    if clusters == 1:
        checks["connected"] = Verdict(graph.weakly_connected(), note="cloud has one cluster")
    else:
        checks["connected"] = Verdict(True, note=f"vacuous: cloud has {clusters} clusters")
    status = "passed" if all(checks.values()) else "violated"
    return TheoremBVerdict(status, checks)


# -- discounted reduction ------------------------------------------------------


@dataclass(frozen=True)
class ReducedSystem:
    """(x, p)-dynamics of H = lam u + h(x, p)."""

    model: HamiltonianModel

    @property
    def lam(self) -> float:
        return self.model.lam

    @property
    def dim(self) -> int:
        return self.model.dim

    def h(self, x, p):
        x = np.asarray(x, dtype=float)
        return self.model.H(x, p, np.zeros(x.shape[:-1]))

    def field(self, y):
        y = np.asarray(y, dtype=float)
        n = self.dim
        x, p = y[..., :n], y[..., n:]
        u0 = np.zeros(x.shape[:-1])
        out = np.empty_like(y)
        out[..., :n] = self.model.dH_dp(x, p, u0)
        out[..., n:] = -self.model.dH_dx(x, p, u0) - self.lam * p
        return out

    def jacobian(self, y):
        y = np.asarray(y, dtype=float)
        n = self.dim
        x, p = y[..., :n], y[..., n:]
        u0 = np.zeros(x.shape[:-1])
        J = np.zeros(y.shape[:-1] + (2 * n, 2 * n))
        J[..., :n, n:] = self.model.d2H_dp2(x, p, u0)
        J[..., n:, :n] = -self.model.d2H_dx2(x, p, u0)
        J[..., n:, n:] = -self.lam * np.eye(n)
        return J


def reduce_discounted(model: HamiltonianModel) -> ReducedSystem:
    if model.family is not Family.DISCOUNTED:
        raise ContractError(f"reduction needs a discounted model, got family {model.family.value}")
    return ReducedSystem(model)


@dataclass
class ReducedOrbit:
    times: np.ndarray
    points: np.ndarray
    dense: np.ndarray = field(repr=False)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, max(len(self.times) - 2, 0))
        if len(self.times) < 2:
            return np.repeat(self.points[:1], len(t), axis=0)
        h = self.times[idx + 1] - self.times[idx]
        s = (t - self.times[idx]) / h
        pw = np.stack([s, s**2, s**3, s**4], axis=-1)
        return self.points[idx] + h[:, None] * np.einsum("kdj,kj->kd", self.dense[idx], pw)


def integrate_reduced(reduced: ReducedSystem, y0, t_final: float, rtol: float = 1e-11,
                      atol: float = 1e-13) -> ReducedOrbit:
    """Forward orbit of the reduced field; x is left unwrapped so dense output stays smooth."""
    y0 = np.asarray(y0, dtype=float).reshape(2 * reduced.dim)
    solver = _dopri.DOPRI5(lambda t, y: reduced.field(y), 0.0, y0, t_final, rtol, atol)
    ts, ys, qs = [0.0], [y0], []
    while solver.step():
        ts.append(solver.t)
        ys.append(solver.y)
        qs.append(solver.Q)
    if solver.status == "underflow":
        raise RuntimeError(f"step size underflow at t={solver.t}")
    dense = np.asarray(qs) if qs else np.zeros((0, y0.size, 4))
    return ReducedOrbit(np.asarray(ts), np.asarray(ys), dense)


@dataclass
class LiftResult:
    trajectory: Trajectory
    identity_residual: float
    fd_residual: float
    u_nondecreasing: bool


def lift_discounted(reduced: ReducedSystem, xp0, t_grid, orbit: ReducedOrbit | None = None,
                    fd_step: float = 1e-4) -> LiftResult:
    """Lift a reduced orbit to phase space with u = -h(x, p)/lam.

    Reports max |lam u + h| over the grid and the max norm of (central
    difference of the lifted curve) - X_H at interior grid times.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) == 0 or np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise InputDomainError("t_grid must be non-empty, increasing and non-negative")
    n = reduced.dim
    if orbit is None:
        orbit = integrate_reduced(reduced, xp0, float(t_grid[-1]) + 2 * fd_step)
    elif t_grid[-1] > orbit.times[-1]:
        raise InputDomainError("t_grid extends beyond the integrated span")

    def lift(t):
        y = orbit(t)
        u = -reduced.h(y[:, :n], y[:, n:]) / reduced.lam
        return np.concatenate([y, u[:, None]], axis=1)

    Z = lift(t_grid)
    model = reduced.model
    identity = float(np.max(np.abs(reduced.lam * Z[:, 2 * n] + reduced.h(Z[:, :n], Z[:, n : 2 * n]))))
    inner = t_grid[(t_grid - fd_step >= 0) & (t_grid + fd_step <= orbit.times[-1])]
    if len(inner):
        fd = (lift(inner + fd_step) - lift(inner - fd_step)) / (2 * fd_step)
        fd_res = float(np.max(np.abs(fd - model.field(lift(inner)))))
    else:
        fd_res = 0.0
    mono = bool(np.all(np.diff(Z[:, 2 * n]) >= -1e-9 * np.maximum(np.diff(t_grid), 1.0)))
    Zw = Z.copy()
    Zw[:, :n] = wrap(Zw[:, :n])
    H = model.hamiltonian(Zw)
    traj = Trajectory(n, t_grid, Zw, H, Termination(TerminationKind.REACHED_T_FINAL, float(t_grid[-1]), Zw[-1]))
    return LiftResult(traj, identity, fd_res, mono)


def variational_determinants(reduced: ReducedSystem, xp0, t_grid, rtol: float = 1e-11,
                             atol: float = 1e-13) -> np.ndarray:
    """det D(phi^t) at the requested times, integrating M' = J(y) M with M(0) = I."""
    n2 = 2 * reduced.dim
    t_grid = np.asarray(t_grid, dtype=float)

    def rhs(t, w):
        y, M = w[:n2], w[n2:].reshape(n2, n2)
        return np.concatenate([reduced.field(y), (reduced.jacobian(y) @ M).ravel()])

    w0 = np.concatenate([np.asarray(xp0, dtype=float).reshape(n2), np.eye(n2).ravel()])
    _, W = _dopri.solve(rhs, 0.0, w0, float(t_grid[-1]) if len(t_grid) else 0.0, rtol, atol, t_eval=t_grid)
    return np.array([np.linalg.det(w[n2:].reshape(n2, n2)) for w in W])


def conformal_decay_check(reduced: ReducedSystem, xp0, t_final: float, samples: int = 201) -> float:
    """max over t in [0, t_final] of |det D(phi^t) - exp(-n lam t)| / exp(-n lam t)."""
    if t_final < 0:
        raise InputDomainError("t_final must be non-negative")
    t = np.linspace(0.0, t_final, samples)
    dets = variational_determinants(reduced, xp0, t)
    exact = np.exp(-reduced.dim * reduced.lam * t)
    return float(np.max(np.abs(dets - exact) / exact))


__all__ = [
    "Equilibrium", "EquilibriumSet", "find_equilibria", "Edge", "ConnectionGraph", "detect_connections",
    "distance_to_structure", "verify_theorem_b", "TheoremBVerdict", "ReducedSystem", "reduce_discounted",
    "ReducedOrbit", "integrate_reduced", "LiftResult", "lift_discounted", "variational_determinants",
    "conformal_decay_check",
]
