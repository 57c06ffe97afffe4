import csv
import json

import pytest

from quadcurl import cli
from quadcurl.errors import csv_columns
from quadcurl.linsolve import SolverError


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_meshinfo(capsys):
    code, res = run(capsys, "meshinfo", "--n", 2)
    assert code == 0
    assert res["tets"] == 48 and res["vertices"] == 27


def test_solve_case_b(capsys, tmp_path):
    code, res = run(capsys, "solve", "--case", "b", "--n", 2, "--out", tmp_path)
    assert code == 0
    assert res["grad_p_over_f"] <= 1e-8
    assert res["solve"]["residual"] <= 1e-10
    rows = list(csv.reader(open(tmp_path / "solve_b.csv")))
    assert rows[0] == csv_columns() and len(rows) == 2
    assert json.loads((tmp_path / "solve_b.json").read_text())["case"] == "b"


def test_solve_csv_byte_identical(capsys, tmp_path):
    for d in ("r1", "r2"):
        assert run(capsys, "solve", "--n", 1, "--out", tmp_path / d)[0] == 0
    assert (tmp_path / "r1" / "solve_a.csv").read_bytes() == (tmp_path / "r2" / "solve_a.csv").read_bytes()


def test_dump_matrices(capsys, tmp_path):
    code, res = run(capsys, "solve", "--n", 1, "--dump-matrices", "--out", tmp_path)
    assert code == 0
    for name in ("A.mtx", "B.mtx", "F.txt"):
        assert (tmp_path / name).stat().st_size > 0
    assert len((tmp_path / "F.txt").read_text().split()) == 21


def test_missing_mesh(capsys, tmp_path):
    code, res = run(capsys, "solve", "--mesh", tmp_path / "nope.msh")
    assert code == 2
    assert res["kind"] == "input" and "mesh not found" in res["error"]


def test_bad_inputs(capsys):
    code, res = run(capsys, "convergence", "--levels", "2")
    assert code == 2 and "at least 3 levels" in res["error"]
    code, res = run(capsys, "convergence", "--levels", "2,3,4")
    assert code == 2 and "double" in res["error"]
    code, res = run(capsys, "solve", "--tau", -1)
    assert code == 2 and "tau" in res["error"]
    code, res = run(capsys, "inequality", "--levels", "5")
    assert code == 2


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[quadcurl]\ncase = b\nn = 1\ntau = 40\n")
    code, res = run(capsys, "solve", "--config", cfg, "--tau", 30, "--out", tmp_path)
    assert code == 0
    assert res["case"] == "b" and res["params"]["tau"] == 30.0
    assert res["errors"]["n"] == 1


def test_config_errors(capsys, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[quadcurl]\nbogus = 1\n")
    assert run(capsys, "meshinfo", "--config", bad)[0] == 2
    assert run(capsys, "meshinfo", "--config", tmp_path / "none.ini")[0] == 2


def test_inequality(capsys, tmp_path):
    code, res = run(capsys, "inequality", "--levels", "1,2", "--probe", "sobolev", "--out", tmp_path)
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "inequality.csv")))
    assert [r["n"] for r in rows] == ["1", "2"]
    assert rows[0]["growth"] == "nan" and float(rows[1]["growth"]) > 0
    code, res = run(capsys, "inequality", "--probe", "coercivity", "--taus", "5,20",
                    "--out", tmp_path)
    margins = [p["constant"] for p in res["probes"]]
    assert code == 0 and 0 < margins[1] and margins[0] <= margins[1]


@pytest.fixture(scope="module")
def convergence_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("conv")
    assert cli.main(["convergence", "--levels", "1,2,4", "--figures", "--out", str(out)]) == 0
    return out


def test_convergence_outputs(convergence_dir):
    rows = list(csv.reader(open(convergence_dir / "convergence_a.csv")))
    assert rows[0] == csv_columns() and len(rows) == 4
    assert [r[0] for r in rows[1:]] == ["1", "2", "4"]
    gp = (convergence_dir / "convergence_a.gp").read_text()
    assert "convergence_a.csv" in gp and "logscale" in gp
    assert (convergence_dir / "convergence_a.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    summary = json.loads((convergence_dir / "convergence_a.json").read_text())
    assert summary["complete"] and len(summary["orders"]) == 2


def test_convergence_incomplete(capsys, tmp_path, monkeypatch):
    real = cli.run_level

    def flaky(case, params, n=None, **kw):
        if n == 4:
            raise SolverError("singular factorization (injected)")
        return real(case, params, n=n, **kw)

    monkeypatch.setattr(cli, "run_level", flaky)
    code, res = run(capsys, "convergence", "--levels", "1,2,4", "--out", tmp_path)
    assert code == 1 and res["kind"] == "pipeline"
    assert "n=4" in res["error"] and res["partial"]["complete"] is False
    text = (tmp_path / "convergence_a.csv").read_text()
    assert text.rstrip().endswith("rows above are partial")
    assert len([l for l in text.splitlines() if not l.startswith("#")]) == 3
