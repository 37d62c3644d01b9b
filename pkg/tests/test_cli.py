import json
import math

import pytest

from wvnspec.cli import main


@pytest.fixture
def cfgs(tmp_path):
    (tmp_path / "free.toml").write_text("[periodic]\na = 1\n")
    (tmp_path / "free_wvn.toml").write_text("[periodic]\na = 1\n[wvn]\nc = 1\nomega = 1\n")
    return tmp_path


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    return lines[0].split()[-1], [l.split(",") for l in lines[2:]]


def test_bands(cfgs):
    out = cfgs / "o"
    assert main(["bands", "--config", str(cfgs / "free.toml"), "--lambda-max", "50", "--out", str(out)]) == 0
    h, rows = read_csv(out / "bands.csv")
    for j, lo, hi in rows:
        assert float(lo) == pytest.approx((math.pi * int(j)) ** 2, abs=1e-8)
        assert float(hi) == pytest.approx((math.pi * (int(j) + 1)) ** 2, abs=1e-8)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == h and "wall_clock_s" in manifest


def test_outputs_are_deterministic(cfgs):
    args = ["resonances", "--config", str(cfgs / "free_wvn.toml"), "--no-timestamp"]
    main(args + ["--out", str(cfgs / "a")])
    main(args + ["--out", str(cfgs / "b")])
    for name in ("resonances.csv", "manifest.json"):
        assert (cfgs / "a" / name).read_bytes() == (cfgs / "b" / name).read_bytes()


def test_resonances_flag_zero_beta(cfgs, capsys):
    assert main(["resonances", "--config", str(cfgs / "free_wvn.toml"), "--j-max", "0",
                 "--out", str(cfgs / "r")]) == 0
    assert "no pseudogap predicted" in capsys.readouterr().err
    _, rows = read_csv(cfgs / "r" / "resonances.csv")
    minus = [r for r in rows if r[1] == "-"][0]
    assert float(minus[3]) == pytest.approx(0.25, abs=1e-9)


def test_model_telescoping(cfgs):
    out = cfgs / "m"
    assert main(["model", "--beta", "1", "--epsilon-grid", "0", "--remainder", "zero", "--f", "1,0,0,0",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "model.json").read_text())
    u = rep["runs"][0]["limit_u"]
    assert u[0]["re"] == pytest.approx(1.0, abs=1e-8) and abs(u[1]["re"]) < 1e-12


def test_model_trajectory_csv(cfgs):
    out = cfgs / "t"
    assert main(["model", "--beta", "0.25", "--epsilon-grid", "0.1", "--ymax", "5", "--step", "0.01",
                 "--samples", "10", "--out", str(out)]) == 0
    lines = (out / "trajectory_plus.csv").read_text().splitlines()
    assert lines[1] == "y,h1_re,h1_im,h2_re,h2_im"
    assert 10 <= len(lines) - 2 <= 12


def test_exponent_json(cfgs):
    out = cfgs / "e"
    assert main(["exponent", "--config", str(cfgs / "free_wvn.toml"), "--band", "0", "--sign", "minus",
                 "--side", "right", "--points", "4", "--svg", "--out", str(out)]) == 0
    rep = json.loads((out / "exponent.json").read_text())
    assert rep["predicted_exponent"] == pytest.approx(0.5)
    assert (out / "exponent.svg").exists()


def test_density_csv(cfgs):
    out = cfgs / "d"
    assert main(["density", "--config", str(cfgs / "free.toml"), "--lambda-min", "1", "--lambda-max", "4",
                 "--points", "2", "--out", str(out)]) == 0
    _, rows = read_csv(out / "density.csv")
    assert float(rows[1][1]) == pytest.approx(2 / math.pi, abs=1e-10)
    assert rows[0][4] == "true"


def test_seventeen_digits(cfgs):
    out = cfgs / "b"
    main(["bloch", "--config", str(cfgs / "free.toml"), "--lambda", "2", "--out", str(out)])
    text = (out / "bloch.json").read_text()
    k = json.loads(text)["k"]
    assert k == math.sqrt(2.0)
    assert "1.4142135623730951" in text


def test_exit_codes(cfgs, capsys):
    assert main(["bands"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["bloch", "--config", str(cfgs / "free.toml"), "--lambda", "5", "--band", "3",
                 "--out", str(cfgs / "x")]) == 1
    assert "band" in capsys.readouterr().err
    bad = cfgs / "bad.toml"
    bad.write_text("[periodic]\na = -1\n")
    assert main(["bands", "--config", str(bad), "--lambda-max", "5", "--out", str(cfgs / "y")]) == 1


def test_verify_subset(cfgs, capsys):
    assert main(["verify", "1", "8", "--out", str(cfgs / "v")]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2
    assert main(["verify", "12", "--out", str(cfgs / "v")]) == 1


def test_model_operator_remainder(cfgs):
    out = cfgs / "op"
    assert main(["model", "--config", str(cfgs / "free_wvn.toml"), "--remainder", "operator",
                 "--epsilon-grid", "0.05", "--out", str(out)]) == 0
    run = json.loads((out / "model.json").read_text())["runs"][0]
    assert run["beta"] == pytest.approx(0.25, abs=1e-10)
    assert run["epsilon"] == pytest.approx(0.05, abs=1e-12)
    assert run["converged"]


def test_worker_cap(monkeypatch):
    from wvnspec._pool import pool_map, worker_count

    monkeypatch.setenv("WVN_THREADS", "1")
    assert worker_count(8) == 1
    assert pool_map(abs, [-3, 2, -1], 4) == [3, 2, 1]
