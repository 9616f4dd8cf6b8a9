import numpy as np
import pytest

from memsquench import cli
from memsquench.errors import ConfigError


def test_defaults():
    cfg = cli.parse_config("")
    s = cfg.spec
    assert (s.lam, s.alpha, s.dim, s.geometry, s.mesh_size, s.initial_data.kind) == \
        (10.0, 1.0, 1, "interval", 141, "zero")


def test_presets_expand():
    s = cli.parse_config("preset=fig5").spec
    assert (s.lam, s.alpha, s.dim, s.geometry) == (71.0, 2.0, 2, "ball")
    k = cli.parse_config("preset=kaplan").spec
    assert (k.lam, k.initial_data.amplitude) == (6.0, 0.97)
    assert cli.parse_config("preset=fig1").spec.lam == 8.6


@pytest.mark.parametrize("text", ["lambda=-1", "colour=red", "mesh_size=abc", "preset=fig9",
                                  "just text", "geometry=ball\ndim=0"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        cli.parse_config(text)


def test_exit_code_for_bad_flag(capsys):
    assert cli.main(["run", "--lambda", "-1"]) == cli.EXIT_CONFIG


def test_steady_outputs(tmp_path):
    assert cli.main(["steady", "--delta-grid", "0.05:0.99:30", "--out", str(tmp_path)]) == 0
    head = (tmp_path / "branch.csv").read_text().splitlines()[0]
    assert head == "delta,mu,I,lambda,sup_w"
    assert "lambda_star=8.5329" in (tmp_path / "steady.txt").read_text()


def test_run_writes_artifacts_and_is_deterministic(tmp_path):
    args = ["run", "--lambda", "10", "--mesh-size", "40", "--t-max", "0.2"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "series.csv").read_bytes()
    assert a == (tmp_path / "b" / "series.csv").read_bytes()
    assert a.splitlines()[0] == b"t,tau,max_u,g,I,k,E,dtau"
    frame = (tmp_path / "a" / "frames" / "frame_00000.csv").read_text().splitlines()
    assert frame[0] == "x,u" and len(frame) == 42


def test_config_file_and_analyze(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# short quench\nlambda = 10\nmesh_size = 60\n")
    out = tmp_path / "q"
    code = cli.main(["run", "--config", str(conf), "--out", str(out), "--analyze"])
    assert code in (cli.EXIT_OK, cli.EXIT_CHECKS)
    report = dict(l.split("=", 1) for l in (out / "report.txt").read_text().splitlines())
    assert report["outcome"] == "quench"
    assert abs(float(report["x_q"]) - 0.5) < 0.02
    again = tmp_path / "again"
    assert cli.main(["analyze", str(out), "--out", str(again)]) == code
    report2 = dict(l.split("=", 1) for l in (again / "report.txt").read_text().splitlines())
    assert float(report2["T_q"]) == pytest.approx(float(report["T_q"]), rel=1e-12)


def test_sweep_runs_in_parallel(tmp_path):
    code = cli.main(["run", "--mesh-size", "30", "--t-max", "0.05", "--sweep", "2,4",
                     "--workers", "2", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "lambda_2" / "series.csv").exists()
    assert (tmp_path / "lambda_4" / "series.csv").exists()


def test_integrator_failure_exit_code(tmp_path, monkeypatch):
    from memsquench.errors import IntegratorError

    def boom(spec):
        raise IntegratorError("step size collapsed")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["run", "--out", str(tmp_path)]) == cli.EXIT_INTEGRATOR
