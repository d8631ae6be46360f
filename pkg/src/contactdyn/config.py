"""Experiment configuration: TOML text with one table per pipeline stage.

Example::

    schema_version = 1

    [model]
    family = "discounted"
    lambda = 1.0
    potential = [{freq = [1], amplitude = 1.0}]

    [attractor]
    seed = 7

Every key is validated before any computation starts; unknown keys are
rejected.  Errors carry the dotted key and, when it can be located, the line.
"""

from __future__ import annotations

import hashlib
import math
import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .errors import ConfigError, InputDomainError
from .flow import Direction, IntegratorConfig
from .hj import Grid
from .model import Family, HamiltonianModel, MonotoneSign, PotentialTerm

SCHEMA_VERSION = 1
FORMATS = ("csv", "json")


@dataclass
class GridSection:
    N: int = 256
    uref_file: str | None = None


@dataclass
class FlowSection:
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    x0: list | None = None
    p0: list | None = None
    u0: float | None = None
    attach_uref: bool = False
    energy_tol: float = 1e-8
    lyapunov_abs_floor: float = 0.0


@dataclass
class AttractorSection:
    delta: float = 0.5
    n_samples: int = 1000
    seed: int | None = None
    T: float | None = None
    snapshot_times: list = field(default_factory=list)
    require_single_cluster: bool = False


@dataclass
class StructureSection:
    eps: float = 1e-5
    tol_struct: float = 1e-2
    density: int = 16
    t_max: float = 200.0


@dataclass
class OutputSection:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])


@dataclass
class ExperimentConfig:
    model: HamiltonianModel
    grid: GridSection
    flow: FlowSection
    attractor: AttractorSection
    structure: StructureSection
    output: OutputSection
    text_hash: str
    raw: dict

    @property
    def T(self) -> float:
        return self.attractor.T if self.attractor.T is not None else 20.0 / self.model.lam


_SCHEMA = {
    "model": {"family", "lambda", "monotone_sign", "potential", "kinetic_scale", "dim", "momentum_shift"},
    "grid": {"N", "uref_file"},
    "flow": {"rel_tol", "abs_tol", "max_step", "t_final", "direction", "blow_up_radius", "equilibrium_tol",
             "x0", "p0", "u0", "attach_uref", "energy_tol", "lyapunov_abs_floor"},
    "attractor": {"delta", "n_samples", "seed", "T", "snapshot_times", "require_single_cluster"},
    "structure": {"eps", "tol_struct", "density", "t_max"},
    "output": {"directory", "formats"},
}


def _locate(text: str, dotted: str) -> int | None:
    """Best-effort line number of a dotted key in TOML text."""
    section, _, key = dotted.rpartition(".")
    current = ""
    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]")
    for i, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1)
            if current == dotted:
                return i
            continue
        m = re.match(r"^\s*([A-Za-z0-9_.\-\"']+)\s*=", line)
        if not m:
            continue
        name = m.group(1).strip("\"'")
        full = f"{current}.{name}" if current else name
        if full == dotted:
            return i
    return None


class _Reader:
    def __init__(self, text, data):
        self.text = text
        self.data = data

    def fail(self, key, msg):
        raise ConfigError(msg, field=key, line=_locate(self.text, key))

    def section(self, name) -> dict:
        sec = self.data.get(name, {})
        if not isinstance(sec, dict):
            self.fail(name, "expected a table")
        return sec

    def get(self, sec, name, key, kind, default=None, required=False, check=None, what=""):
        dotted = f"{name}.{key}"
        if key not in sec:
            if required:
                self.fail(dotted, "required key is missing")
            return default
        v = sec[key]
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(dotted, f"expected a number, got {v!r}")
            v = float(v)
            if not math.isfinite(v) and not (v == math.inf and what == "inf-ok"):
                self.fail(dotted, "must be finite")
        elif kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(dotted, f"expected an integer, got {v!r}")
        elif kind is bool:
            if not isinstance(v, bool):
                self.fail(dotted, f"expected true or false, got {v!r}")
        elif kind is str:
            if not isinstance(v, str):
                self.fail(dotted, f"expected a string, got {v!r}")
        elif kind is list:
            if not isinstance(v, list):
                self.fail(dotted, f"expected an array, got {v!r}")
        if check is not None and not check(v):
            self.fail(dotted, f"invalid value {v!r}{': ' + what if what and what != 'inf-ok' else ''}")
        return v


def _num_list(r, sec, name, key, dim):
    v = r.get(sec, name, key, list)
    if v is None:
        return None
    if len(v) != dim or not all(isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c)
                                for c in v):
        r.fail(f"{name}.{key}", f"expected {dim} finite numbers")
    return [float(c) for c in v]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text; raises ConfigError."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"malformed config: {exc}", line=line) from None
    r = _Reader(text, data)

    for key, val in data.items():
        if key == "schema_version":
            continue
        if key not in _SCHEMA:
            r.fail(key, "unknown key")
        if not isinstance(val, dict):
            r.fail(key, "expected a table")
        for sub in val:
            if sub not in _SCHEMA[key]:
                r.fail(f"{key}.{sub}", "unknown key")
    if "schema_version" not in data:
        raise ConfigError("schema_version is required", field="schema_version")
    if data["schema_version"] != SCHEMA_VERSION:
        r.fail("schema_version", f"unsupported schema version {data['schema_version']!r}")

    # model
    ms = r.section("model")
    if not ms:
        raise ConfigError("a [model] table is required", field="model")
    family = r.get(ms, "model", "family", str, required=True, check=lambda v: v in {f.value for f in Family},
                   what="one of " + ", ".join(f.value for f in Family))
    lam = r.get(ms, "model", "lambda", float, required=True, check=lambda v: v > 0, what="must be > 0")
    sign = r.get(ms, "model", "monotone_sign", str, "minus", check=lambda v: v in ("minus", "plus"))
    k = r.get(ms, "model", "kinetic_scale", float, 1.0, check=lambda v: v > 0, what="must be > 0")
    dim = r.get(ms, "model", "dim", int, 1, check=lambda v: v in (1, 2), what="must be 1 or 2")
    shift = _num_list(r, ms, "model", "momentum_shift", dim)
    terms = []
    for i, t in enumerate(r.get(ms, "model", "potential", list, [])):
        key = "model.potential"
        if not isinstance(t, dict) or not set(t) <= {"freq", "amplitude", "phase"} or "amplitude" not in t:
            r.fail(key, f"entry {i} must be a table with freq, amplitude and optional phase")
        freq = t.get("freq", [0] * dim)
        if not isinstance(freq, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in freq):
            r.fail(key, f"entry {i}: freq must be a list of integers")
        amp, ph = t["amplitude"], t.get("phase", 0.0)
        if not all(isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c) for c in (amp, ph)):
            r.fail(key, f"entry {i}: amplitude and phase must be finite numbers")
        terms.append(PotentialTerm(tuple(freq), float(amp), float(ph)))
    try:
        model = HamiltonianModel(Family(family), lam, MonotoneSign(sign), tuple(terms), k, dim,
                                 tuple(shift) if shift else None)
    except InputDomainError as exc:
        raise ConfigError(str(exc), field="model", line=_locate(text, "model")) from None

    gs = r.section("grid")
    N = r.get(gs, "grid", "N", int, 256 if dim == 1 else 64, check=lambda v: v >= 32 and v & (v - 1) == 0,
              what="must be a power of two >= 32")
    grid = GridSection(N, r.get(gs, "grid", "uref_file", str))
    Grid(dim, N)

    fs = r.section("flow")
    pos = dict(check=lambda v: v > 0, what="must be > 0")
    integ = IntegratorConfig(
        rel_tol=r.get(fs, "flow", "rel_tol", float, 1e-9, **pos),
        abs_tol=r.get(fs, "flow", "abs_tol", float, 1e-11, **pos),
        max_step=r.get(fs, "flow", "max_step", float, math.inf, check=lambda v: v > 0, what="inf-ok"),
        t_final=r.get(fs, "flow", "t_final", float, 10.0, check=lambda v: v >= 0, what="must be >= 0"),
        direction=Direction(r.get(fs, "flow", "direction", str, "forward",
                                  check=lambda v: v in ("forward", "backward"))),
        blow_up_radius=r.get(fs, "flow", "blow_up_radius", float, 1e6, **pos),
        equilibrium_tol=r.get(fs, "flow", "equilibrium_tol", float, 1e-9, check=lambda v: v >= 0),
    )
    flow = FlowSection(integ, _num_list(r, fs, "flow", "x0", dim), _num_list(r, fs, "flow", "p0", dim),
                       r.get(fs, "flow", "u0", float),
                       r.get(fs, "flow", "attach_uref", bool, False),
                       r.get(fs, "flow", "energy_tol", float, 1e-8, **pos),
                       r.get(fs, "flow", "lyapunov_abs_floor", float, 0.0, check=lambda v: v >= 0))

    a = r.section("attractor")
    snaps = r.get(a, "attractor", "snapshot_times", list, [])
    if not all(isinstance(t, (int, float)) and not isinstance(t, bool) and t >= 0 for t in snaps):
        r.fail("attractor.snapshot_times", "expected non-negative numbers")
    attractor = AttractorSection(
        r.get(a, "attractor", "delta", float, 0.5, **pos),
        r.get(a, "attractor", "n_samples", int, 1000, check=lambda v: v >= 0),
        r.get(a, "attractor", "seed", int, None, check=lambda v: v >= 0),
        r.get(a, "attractor", "T", float, None, **pos),
        [float(t) for t in snaps],
        r.get(a, "attractor", "require_single_cluster", bool, False),
    )

    s = r.section("structure")
    structure = StructureSection(
        r.get(s, "structure", "eps", float, 1e-5, **pos),
        r.get(s, "structure", "tol_struct", float, 1e-2, **pos),
        r.get(s, "structure", "density", int, 16, check=lambda v: v >= 2),
        r.get(s, "structure", "t_max", float, 200.0, **pos),
    )

    o = r.section("output")
    formats = r.get(o, "output", "formats", list, ["csv", "json"],
                    check=lambda v: len(v) > 0 and all(f in FORMATS for f in v), what="subset of csv, json")
    output = OutputSection(r.get(o, "output", "directory", str, "out"), list(formats))

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(model, grid, flow, attractor, structure, output, digest, data)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
