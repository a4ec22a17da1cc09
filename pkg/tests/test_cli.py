import json

import pytest

from deul import cli
from deul.nonlinear import read_snapshot


def run(argv, tmp_path, capsys):
    code = cli.main(argv + ["--out", str(tmp_path)])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_zones_example(tmp_path, capsys):
    code, out, _ = run(["zones", "--mu", "2", "--lambda", "0", "--t", "5", "--k", "10,0.5,1"], tmp_path, capsys)
    assert code == 0
    tags = [line.split()[-1] for line in out.splitlines() if line.startswith("5 ")]
    assert tags == ["Hyperbolic", "Elliptic", "Reduced"]
    assert (tmp_path / "zones_V.csv").exists()


def test_global_options_before_subcommand(tmp_path, capsys):
    code = cli.main(["--mu", "2", "--lambda", "0", "--out", str(tmp_path), "zones", "--t", "5", "--k", "10"])
    assert code == 0
    assert "Hyperbolic" in capsys.readouterr().out


def test_outputs_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["zones", "--atlas-nt", "12", "--atlas-nk", "10", "--out", str(d)]) == 0
    capsys.readouterr()
    for name in ("zones_V.csv", "zones_V.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_green_and_multipliers(tmp_path, capsys):
    assert run(["green"], tmp_path, capsys)[0] == 0
    assert run(["multipliers", "--family", "U"], tmp_path, capsys)[0] == 0
    assert (tmp_path / "green.csv").exists()


def test_diag(tmp_path, capsys):
    code, _, _ = run(["diag"], tmp_path, capsys)
    assert code == 0
    rep = json.loads((tmp_path / "diag_V.json").read_text())
    assert rep["equivalence"] <= 1e-5


def test_diag_outside_elliptic_zone_is_config_error(tmp_path, capsys):
    code, _, err = run(["diag", "--k", "5"], tmp_path, capsys)
    assert code == 2
    assert json.loads(err)["status"] == "config_error"


def test_nonlinear_small_run(tmp_path, capsys):
    conf = tmp_path / "run.ini"
    conf.write_text("L = 64\nN = 256\nT = 4\ndt = 0.05\ncadence = 2\neps = 0.05\nstartup = 0\n")
    snap = tmp_path / "final.bin"
    code, out, _ = run(["nonlinear", "--run-config", str(conf), "--snapshot", str(snap)], tmp_path, capsys)
    assert code == 0
    summary = json.loads((tmp_path / "nonlinear.json").read_text())
    assert summary["mass_drift"] <= 1e-8
    assert read_snapshot(snap)[1] == 4.0


def test_nonlinear_overrides_are_validated(tmp_path, capsys):
    code, _, err = run(["nonlinear", "--L", "64", "--N", "64", "--dt", "1.0"], tmp_path, capsys)
    assert code == 2
    assert "CFL" in json.loads(err)["message"]


@pytest.mark.parametrize(
    "text",
    ["[bogus]\nx = 1\n", "[law]\nnu = 1\n", "[law]\nlambda = 1.5\n", "not an ini file"],
)
def test_bad_config_files(tmp_path, capsys, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    code, _, err = run(["zones", "--config", str(p)], tmp_path, capsys)
    assert code == 2
    assert json.loads(err)["status"] == "config_error"


def test_bad_lambda_flag(tmp_path, capsys):
    assert run(["zones", "--lambda", "1"], tmp_path, capsys)[0] == 2


def test_unknown_subcommand(capsys):
    assert cli.main(["frobnicate"]) == 2


def test_out_precedence(tmp_path, capsys, monkeypatch):
    env_dir = tmp_path / "env"
    monkeypatch.setenv("DEUL_OUT", str(env_dir))
    assert cli.main(["zones", "--t", "5", "--k", "1"]) == 0
    assert (env_dir / "zones_V.csv").exists()
    flag_dir = tmp_path / "flag"
    assert cli.main(["zones", "--t", "5", "--k", "1", "--out", str(flag_dir)]) == 0
    assert (flag_dir / "zones_V.csv").exists()


def test_verify_only_single_criterion(tmp_path, capsys):
    code, out, _ = run(["verify-all", "--only", "13"], tmp_path, capsys)
    assert code == 0
    lines = (tmp_path / "verify.txt").read_text().splitlines()
    assert len(lines) == 1 and "13" in lines[0] and "PASS" in lines[0]
