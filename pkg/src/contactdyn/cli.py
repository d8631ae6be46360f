"""Command-line entry point: ``contactdyn <command> --config FILE``.

Exit status: 0 when every enabled check passed, 1 when a check failed,
2 for configuration errors and 3 when a computation raised.
"""

from __future__ import annotations

import argparse
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .attractor import (approximate_attractor, cluster_count, graph_property_check, hausdorff,
                        make_trapping_spec)
from .config import ExperimentConfig, load_config
from .errors import ConfigError, ContactDynError
from .flow import (Direction, check_first_lyapunov, check_second_lyapunov, energy_residual, integrate,
                   sign_preserved)
from .hj import Grid, GridFunction, constant_bounds, one_sided_gradients, solve_hj
from .io import write_csv, write_json
from .model import MonotoneSign, check_assumptions
from .structure import detect_connections, find_equilibria, verify_theorem_b

log = logging.getLogger("contactdyn")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


class Run:
    """Collects artifacts and check outcomes for one command invocation."""

    def __init__(self, cfg: ExperimentConfig, out: Path, command: str, formats, threads: int):
        self.cfg = cfg
        self.out = out
        self.command = command
        self.formats = list(formats)
        self.threads = threads
        self.artifacts: list = []
        self.checks: dict = {}
        self.details: dict = {}

    def check(self, name: str, passed: bool, detail=None):
        self.checks[name] = bool(passed)
        if detail is not None:
            self.details[name] = detail

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def table(self, stem: str, header, rows, meta: dict):
        """Write a table as CSV and/or JSON according to the selected formats."""
        rows = [list(r) for r in rows]
        if "csv" in self.formats:
            write_csv(self.path(f"{stem}.csv"), header, rows)
        if "json" in self.formats:
            write_json(self.path(f"{stem}.json"), dict(meta, columns=list(header),
                                                        rows=[[float(v) for v in r] for r in rows]))
        else:
            write_json(self.path(f"{stem}.meta.json"), meta)

    @property
    def failures(self) -> list:
        return sorted(k for k, v in self.checks.items() if not v)

    def manifest(self, wall_time: float) -> dict:
        return {
            "command": self.command,
            "config_sha256": self.cfg.text_hash,
            "seed": self.cfg.attractor.seed,
            "model": self.cfg.model.to_dict(),
            "versions": {
                "contactdyn": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "threads": self.threads,
            "formats": self.formats,
            "artifacts": sorted(self.artifacts),
            "checks": self.checks,
            "details": self.details,
            "failures": self.failures,
            "exit_status": EXIT_OK if not self.failures else EXIT_CHECKS,
            "wall_time_s": wall_time,
        }


def _uref(run: Run) -> GridFunction:
    cfg = run.cfg
    if cfg.grid.uref_file:
        try:
            gf = GridFunction.load(Path(cfg.grid.uref_file).with_suffix(""))
        except OSError as exc:
            raise ConfigError(f"cannot read GridFunction: {exc}", field="grid.uref_file") from None
        if gf.grid.dim != cfg.model.dim:
            raise ConfigError("GridFunction dimension does not match the model", field="grid.uref_file")
        return gf
    return solve_hj(cfg.model, Grid(cfg.model.dim, cfg.grid.N))


def _require_seed(cfg: ExperimentConfig):
    if cfg.attractor.seed is None:
        raise ConfigError("a seed is required for commands that sample randomly", field="attractor.seed")


def cmd_check(run: Run):
    cfg = run.cfg
    report = check_assumptions(cfg.model)
    write_json(run.path("assumptions.json"), report.to_dict())
    for key, verdict in report.verdicts.items():
        if verdict.status.value != "not-applicable":
            run.check(f"assumption_{key}", verdict.status.value == "verified-on-sample")


def cmd_simulate(run: Run):
    cfg = run.cfg
    fs = cfg.flow
    n = cfg.model.dim
    if fs.x0 is None or fs.p0 is None or fs.u0 is None:
        raise ConfigError("flow.x0, flow.p0 and flow.u0 are required for simulate", field="flow")
    z0 = np.array(fs.x0 + fs.p0 + [fs.u0])
    uref = _uref(run) if fs.attach_uref else None
    traj = integrate(cfg.model, z0, fs.integrator, uref)
    run.table("trajectory", traj.header(), traj.to_rows(), traj.metadata())
    res = energy_residual(cfg.model, traj)
    run.check("energy_identity", res <= fs.energy_tol, {"residual": res, "tol": fs.energy_tol})
    run.check("sign_preserved", sign_preserved(traj))
    complete = (cfg.model.monotone_sign is MonotoneSign.MINUS) == (fs.integrator.direction is Direction.FORWARD)
    if complete:
        v = check_first_lyapunov(cfg.model, traj, abs_floor=fs.lyapunov_abs_floor)
        run.check("first_lyapunov", v.passed, {"max_violation": v.max_violation, "witness_time": v.witness_time})
        if uref is not None:
            v2 = check_second_lyapunov(cfg.model, traj, uref)
            run.check("second_lyapunov", v2.passed, {"max_violation": v2.max_violation})
    run.details["termination"] = traj.termination.to_dict()


def cmd_solve_hj(run: Run):
    cfg = run.cfg
    gf = solve_hj(cfg.model, Grid(cfg.model.dim, cfg.grid.N))
    gf.save(run.path("u.json").with_suffix(""))
    run.artifacts.append("u.bin")
    if "csv" in run.formats:
        gf.to_csv(run.path("u.csv"))
    lo, hi = constant_bounds(cfg.model, gf.grid)
    run.check("comparison_bounds", lo - 1e-6 <= gf.values.min() and gf.values.max() <= hi + 1e-6,
              {"U_lower": lo, "U_upper": hi, "min": float(gf.values.min()), "max": float(gf.values.max())})
    g = one_sided_gradients(gf)
    limit = gf.lipschitz_bound + 10 * gf.grid.h
    gmax = float(g.max_norm.max())
    run.check("gradient_bound", gmax <= limit, {"max_norm": gmax, "limit": limit})
    run.check("monotone_iteration", gf.diagnostics.get("max_increase", 0.0) <= 0.0)
    run.details["residual_norm"] = gf.residual_norm
    run.details["solver"] = gf.diagnostics


def _attractor(run: Run):
    cfg = run.cfg
    _require_seed(cfg)
    uref = _uref(run)
    spec = make_trapping_spec(cfg.model, uref, cfg.attractor.delta)
    T = cfg.T
    snaps = [t for t in cfg.attractor.snapshot_times if t < T]
    approx = approximate_attractor(cfg.model, spec, T, cfg.attractor.n_samples, cfg.attractor.seed,
                                   cfg.flow.integrator, snapshot_times=snaps)
    return uref, spec, approx


def _write_cloud(run: Run, approx, spec, stem="attractor"):
    rows = (list(z) + [h, f] for z, h, f in zip(approx.points, approx.H, approx.F))
    run.table(stem, approx.header(), rows, approx.metadata({"trapping_spec": spec.to_dict()}))


def cmd_attractor(run: Run):
    cfg = run.cfg
    uref, spec, approx = _attractor(run)
    _write_cloud(run, approx, spec)
    n = cfg.model.dim
    run.check("decay_bounds", approx.max_abs_h <= approx.h_bound and approx.max_f <= approx.f_bound,
              {"max_abs_H": approx.max_abs_h, "h_bound": approx.h_bound, "max_F": approx.max_f,
               "f_bound": approx.f_bound})
    g = graph_property_check(approx.points, n)
    run.check("graph_property", g.passed, g.to_dict())
    clusters = cluster_count(approx.points, n) if len(approx.points) else 0
    run.details["cluster_count"] = clusters
    if cfg.attractor.require_single_cluster:
        run.check("single_cluster", clusters == 1)
    pts = approx.points
    run.details["max_abs_p"] = float(np.max(np.abs(pts[:, n : 2 * n]), initial=0.0))
    run.details["max_abs_u"] = float(np.max(np.abs(pts[:, 2 * n]), initial=0.0))
    times = sorted(approx.snapshots)
    if len(times) >= 2:
        hd = {f"{a:g}-{b:g}": hausdorff(approx.snapshots[a], approx.snapshots[b], n).to_dict()
              for a, b in zip(times[:-1], times[1:])}
        write_json(run.path("hausdorff.json"), hd)


def cmd_analyze(run: Run):
    cfg = run.cfg
    eqs = find_equilibria(cfg.model, cfg.structure.density)
    run.check("equilibria_found", len(eqs) > 0, {"anomaly": eqs.anomaly} if eqs.anomaly else None)
    resid = [float(np.linalg.norm(cfg.model.field(e.state))) for e in eqs]
    run.check("equilibrium_residuals", all(r <= 1e-9 for r in resid))
    if eqs.degenerate:
        graph = None
        run.details["theorem_b"] = "not-applicable: degenerate equilibria"
        write_json(run.path("equilibria.json"), {"nodes": [e.to_dict() for e in eqs], "degenerate": True})
        return
    graph = detect_connections(cfg.model, eqs, cfg.structure.eps, cfg.flow.integrator, cfg.structure.t_max)
    graph.save(run.out)
    run.artifacts += ["graph.json", "graph.edges"] + [f"graph_orbit_{k}.csv"
                                                      for k in range(sum(len(e.orbits) for e in graph.edges))]
    run.check("u_monotone_orbits", all(e.u_monotone for e in graph.edges))
    run.check("acyclic", graph.is_acyclic())
    _, spec, approx = _attractor(run)
    _write_cloud(run, approx, spec)
    verdict = verify_theorem_b(graph, approx.points, cfg.structure.tol_struct)
    write_json(run.path("theorem_b.json"), verdict.to_dict())
    run.check("theorem_b", verdict.status != "violated", verdict.status)


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "solve-hj": cmd_solve_hj,
    "attractor": cmd_attractor,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contactdyn", description="Monotone contact Hamiltonian experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML experiment configuration")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (recorded; results do not depend on it)")
    ap.add_argument("--format", choices=("csv", "json"), help="restrict tabular artifacts to one format")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.directory)
    formats = [args.format] if args.format else cfg.output.formats
    run = Run(cfg, out, args.command, formats, args.threads)
    start = time.perf_counter()
    try:
        COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContactDynError, RuntimeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        run.check("completed", False, f"{type(exc).__name__}: {exc}")
        write_json(out / "run_manifest.json", dict(run.manifest(time.perf_counter() - start), exit_status=EXIT_ERROR))
        return EXIT_ERROR
    manifest = run.manifest(time.perf_counter() - start)
    write_json(out / "run_manifest.json", manifest)
    for name in run.failures:
        print(f"check failed: {name}", file=sys.stderr)
    return manifest["exit_status"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
