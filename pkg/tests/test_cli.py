import json
from pathlib import Path

import pytest

from pxbound.cli import main
from pxbound.config import ConfigError, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """\
problem.geometry = interval
problem.h = 1/32
problem.N = {N}
problem.p = {p}
problem.q0 = {q0}
problem.q1 = {q1}
"""


def write(tmp_path, text, name="c.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_verify_bundled_problem(tmp_path, capsys):
    code = main(["verify", "--config", str(CONFIGS / "manufactured_p2.cfg"), "--out", str(tmp_path), "--no-timestamp"])
    assert code == 0
    rep = json.loads((tmp_path / "bound.json").read_text())
    assert rep["chain"]["all"] is True
    assert all(v["ok"] for k, v in rep["chain"].items() if k != "all")
    checks = json.loads((tmp_path / "verify.json").read_text())
    assert checks["ok"] and "FAIL" not in capsys.readouterr().out


def test_critical_q0_is_a_config_error(tmp_path, capsys):
    cfg = write(tmp_path, BASE.format(N=3, p="2", q0="6", q1="2"))
    assert main(["bound", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "q0 violates q0 < p* at x=" in capsys.readouterr().err


def test_zero_data_bound_is_two(tmp_path):
    assert main(["bound", "--config", str(CONFIGS / "data_free.cfg"), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "bound.json").read_text())["bound"] == 2


def test_reports_are_deterministic(tmp_path):
    cfg = str(CONFIGS / "manufactured_p2.cfg")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["bound", "--config", cfg, "--out", str(a), "--no-timestamp"]) == 0
    assert main(["bound", "--config", cfg, "--out", str(b), "--no-timestamp"]) == 0
    assert (a / "bound.json").read_bytes() == (b / "bound.json").read_bytes()
    assert main(["bound", "--config", cfg, "--out", str(a)]) == 0
    assert "timestamp" in json.loads((a / "bound.json").read_text())


def test_unknown_key_names_line(tmp_path, capsys):
    cfg = write(tmp_path, BASE.format(N=2, p="2", q0="2", q1="2") + "solver.tolerance = 1e-9\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "line 7" in err and "solver.tolerance" in err


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("problem.h = \n", "empty value"),
        ("problem.h\n", "expected 'key = value'"),
        ("solver.tol = -1\n", "must be > 0"),
        ("bound.n_max = 0\n", "must be >= 1"),
        ("problem.h = 1\nproblem.h = 2\n", "duplicate key"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_missing_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_bad_usage():
    assert main(["frobnicate", "--config", "x"]) == 1
    assert main(["solve"]) == 1


def test_solve_and_iterate_outputs(tmp_path):
    cfg = str(CONFIGS / "manufactured_p2.cfg")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 0
    sol = (tmp_path / "solution.csv").read_text().splitlines()
    assert sol[0] == "node,x,u" and len(sol) == 66
    assert (tmp_path / "residuals.csv").read_text().startswith("node,residual\n")
    assert main(["iterate", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trace.csv").read_text().startswith("n,k_n,Z_n,Ztilde_n,Y_n,measA,measG,chain_ok\n")
    assert (tmp_path / "trace_super.csv").exists()


def test_spaces_table(tmp_path, capsys):
    cfg = write(tmp_path, BASE.format(N=2, p="2", q0="2", q1="2") + "spaces.u = x\n")
    assert main(["spaces", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = dict(line.split(",") for line in (tmp_path / "spaces.csv").read_text().splitlines()[1:])
    assert float(rows["modular"]) == pytest.approx(1 / 3, rel=1e-12)
    assert float(rows["sobolev"]) == pytest.approx(1 + 3**-0.5, rel=1e-12)
    assert float(rows["boundary_modular"]) == pytest.approx(1.0)


def test_jobs_isolate_outputs(tmp_path):
    a = write(tmp_path, BASE.format(N=2, p="2", q0="2", q1="2") + "problem.f = 1\n", "first.cfg")
    b = write(tmp_path, BASE.format(N=2, p="3", q0="3", q1="3") + "problem.f = 1\n", "second.cfg")
    out = tmp_path / "out"
    assert main(["solve", "--config", a, b, "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "first" / "solution.csv").exists() and (out / "second" / "solution.csv").exists()


def test_user_embedding_mode_round_trip(tmp_path):
    text = BASE.format(N=2, p="2", q0="2", q1="2") + "problem.f = 1\nbound.embedding = user\nbound.C_emb = 3.5\nbound.C_tr = 2.25\n"
    cfg = write(tmp_path, text)
    assert main(["bound", "--config", cfg, "--out", str(tmp_path), "--no-timestamp"]) == 0
    rep = json.loads((tmp_path / "bound.json").read_text())
    assert (rep["C_emb"], rep["C_tr"], rep["embedding"]["mode"]) == (3.5, 2.25, "user")


def test_user_embedding_needs_values(tmp_path):
    cfg = write(tmp_path, BASE.format(N=2, p="2", q0="2", q1="2") + "bound.embedding = user\n")
    assert main(["bound", "--config", cfg, "--out", str(tmp_path)]) == 1
