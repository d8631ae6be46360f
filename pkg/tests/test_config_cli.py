import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from contactdyn.cli import main
from contactdyn.config import parse_config
from contactdyn.errors import ConfigError
from contactdyn.model import Family, MonotoneSign

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """schema_version = 1

[model]
family = "discounted"
lambda = 1.0
potential = [{freq = [1], amplitude = 1.0}]
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(tmp_path, command, config, *extra):
    out = tmp_path / f"out_{command}"
    code = main([command, "--config", str(config), "--out", str(out), *extra])
    return code, out


def test_parse_defaults():
    cfg = parse_config(BASE)
    assert cfg.model.family is Family.DISCOUNTED and cfg.model.monotone_sign is MonotoneSign.MINUS
    assert cfg.grid.N == 256 and cfg.attractor.seed is None
    assert cfg.T == pytest.approx(20.0)
    assert cfg.flow.integrator.rel_tol == 1e-9


def test_parse_full_sections():
    cfg = parse_config(BASE + """
[flow]
rel_tol = 1e-10
direction = "backward"
x0 = [0.5]
p0 = [0.0]
u0 = 0.25

[attractor]
seed = 3
snapshot_times = [5, 10]

[output]
formats = ["json"]
""")
    assert cfg.flow.integrator.direction.value == "backward"
    assert cfg.flow.x0 == [0.5] and cfg.attractor.snapshot_times == [5.0, 10.0]
    assert cfg.output.formats == ["json"]


@pytest.mark.parametrize("text, field, line", [
    (BASE.replace("lambda = 1.0", "lambda = -1.0"), "model.lambda", 5),
    (BASE + "\n[grid]\nN = 100\n", "grid.N", 9),
    (BASE + "\n[flow]\nbogus = 1\n", "flow.bogus", 9),
    (BASE + "\n[extra]\nx = 1\n", "extra", 8),
    (BASE.replace('family = "discounted"', 'family = "nope"'), "model.family", 4),
    (BASE + "\n[flow]\nx0 = [1.0, 2.0]\n", "flow.x0", 9),
    (BASE + "\n[attractor]\nseed = true\n", "attractor.seed", 9),
])
def test_config_errors_carry_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    assert info.value.line == line


def test_missing_schema_version():
    with pytest.raises(ConfigError) as info:
        parse_config(BASE.replace("schema_version = 1\n", ""))
    assert info.value.field == "schema_version"


def test_malformed_toml_has_line():
    with pytest.raises(ConfigError) as info:
        parse_config(BASE + "\n[flow\n")
    assert info.value.line == 8


def test_cli_lambda_rejected(tmp_path, capsys):
    code, out = _run(tmp_path, "check", _write(tmp_path, BASE.replace("1.0\npot", "-1.0\npot")))
    assert code == 2
    assert "model.lambda" in capsys.readouterr().err
    assert not (out / "run_manifest.json").exists()


def test_cli_missing_seed(tmp_path):
    code, _ = _run(tmp_path, "attractor", _write(tmp_path, BASE + "\n[grid]\nN = 64\n"))
    assert code == 2


def test_cli_check(tmp_path):
    code, out = _run(tmp_path, "check", CONFIGS / "pendulum_check.toml")
    assert code == 0
    report = json.loads((out / "assumptions.json").read_text())
    assert report
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["exit_status"] == 0 and manifest["failures"] == []


def test_cli_check_flat_potential(tmp_path):
    code, _ = _run(tmp_path, "check", _write(tmp_path, 'schema_version = 1\n[model]\nfamily = "quadratic_test"\n'
                                                     'lambda = 1.0\n'))
    assert code == 0


def test_cli_simulate(tmp_path):
    code, out = _run(tmp_path, "simulate", CONFIGS / "pendulum_simulate.toml")
    assert code == 0
    rows = list(csv.reader((out / "trajectory.csv").open()))
    assert rows[0][:5] == ["t", "x1", "p1", "u", "H"]
    assert float(rows[-1][0]) == 1.0
    assert float(rows[-1][4]) == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_cli_format_json_only(tmp_path):
    code, out = _run(tmp_path, "simulate", CONFIGS / "pendulum_simulate.toml", "--format", "json")
    assert code == 0
    assert (out / "trajectory.json").exists() and not (out / "trajectory.csv").exists()


def test_cli_solve_hj(tmp_path):
    code, out = _run(tmp_path, "solve-hj", CONFIGS / "pendulum_hj.toml")
    assert code == 0
    meta = json.loads((out / "u.json").read_text())
    assert meta["N"] == 256 and meta["kind"] == "u_minus"
    vals = np.loadtxt(out / "u.csv", delimiter=",", skiprows=1)
    assert vals[:, -1].min() >= -1 - 1e-12 and vals[:, -1].max() <= 1 + 1e-12


def test_cli_quadratic_attractor(tmp_path):
    code, out = _run(tmp_path, "attractor", CONFIGS / "quadratic_attractor.toml")
    assert code == 0
    pts = np.loadtxt(out / "attractor.csv", delimiter=",", skiprows=1)
    assert len(pts) == 1000
    assert np.max(np.abs(pts[:, 1:3])) <= 1e-5


def test_cli_analyze(tmp_path):
    code, out = _run(tmp_path, "analyze", CONFIGS / "pendulum_analyze.toml")
    assert code == 0
    g = json.loads((out / "graph.json").read_text())
    assert len(g["nodes"]) == 2 and len(g["edges"]) == 1
    e = g["edges"][0]
    assert g["nodes"][e["source"]]["u0"] < g["nodes"][e["target"]]["u0"]
    assert json.loads((out / "theorem_b.json").read_text())["status"] == "passed"


def test_cli_deterministic(tmp_path):
    cfg = CONFIGS / "pendulum_attractor.toml"
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["attractor", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["attractor", "--config", str(cfg), "--out", str(b), "--threads", "1"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if name == "run_manifest.json":
            ma, mb = (json.loads((d / name).read_text()) for d in (a, b))
            ma.pop("wall_time_s"), mb.pop("wall_time_s")
            assert ma == mb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_cli_missing_uref_file(tmp_path):
    text = BASE + '\n[grid]\nuref_file = "missing/u.json"\n[attractor]\nseed = 1\n'
    code, _ = _run(tmp_path, "attractor", _write(tmp_path, text))
    assert code == 2


def test_cli_error_exit(tmp_path):
    plus = BASE.replace('lambda = 1.0', 'lambda = 1.0\nmonotone_sign = "plus"').replace('"discounted"', '"mechanical"')
    code, hj_out = _run(tmp_path, "solve-hj", _write(tmp_path, plus + "\n[grid]\nN = 64\n", "plus.toml"))
    assert code == 0
    # a u_plus solution cannot serve the (M-) model
    text = BASE + f'\n[grid]\nuref_file = "{hj_out / "u.json"}"\n[attractor]\nseed = 1\n'
    code, out = _run(tmp_path, "attractor", _write(tmp_path, text))
    assert code == 3
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["exit_status"] == 3 and manifest["failures"] == ["completed"]
