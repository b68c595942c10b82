import json

import pytest

from shotnoise import cli
from shotnoise.config import ConfigError, load_config, parse_grid

BASE = """\
schema_version: 1
seed: 11
kernel: {family: product_exp, beta: 1.0}
sigma: {family: exponential, rate: 1.0}
"""


@pytest.fixture
def cfg(tmp_path):
    def make(extra=""):
        path = tmp_path / "run.yaml"
        path.write_text(BASE + extra)
        return str(path)
    return make


def test_parse_grid():
    assert parse_grid("0:1:3").tolist() == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        parse_grid("1:0:3")


def test_missing_seed_is_schema_error(tmp_path):
    path = tmp_path / "x.yaml"
    path.write_text("schema_version: 1\n")
    with pytest.raises(ConfigError):
        load_config(path)
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "o.csv")]) == 2


def test_unknown_keys_rejected(cfg, tmp_path):
    assert cli.main(["simulate", "--config", cfg("bogus: 1\n"), "--out", str(tmp_path / "o.csv")]) == 2
    assert cli.main(["simulate", "--config", cfg("simulate: {n: 5, m: 2}\n"),
                     "--out", str(tmp_path / "o.csv")]) == 2


def test_bad_kernel_spec(tmp_path):
    path = tmp_path / "k.yaml"
    path.write_text(BASE.replace("beta: 1.0", "beta: 1.0, extra: 3"))
    assert cli.main(["charfn", "--config", str(path), "--out", str(tmp_path / "cf.csv")]) == 2


def test_divergent_kernel_refused(tmp_path):
    path = tmp_path / "d.yaml"
    path.write_text(BASE.replace("{family: product_exp, beta: 1.0}", "{family: constant, value: 1.0}"))
    out = str(tmp_path / "o.csv")
    assert cli.main(["simulate", "--config", str(path), "--out", out]) == 3
    assert cli.main(["charfn", "--config", str(path), "--out", out]) == 3


def test_strict_density_boundary(cfg, tmp_path):
    path = cfg("density: {u_max: 5, u_step: 0.1, x_grid: '0.5:2:4'}\n")
    assert cli.main(["density", "--config", path, "--out", str(tmp_path / "d.csv"), "--strict"]) == 3


def test_strict_nonconvergence(tmp_path, capsys):
    # slow power decay: the centering constant does not settle along the schedule
    path = tmp_path / "p.yaml"
    path.write_text(BASE.replace("product_exp, beta: 1.0", "product_power, beta: 0.5"))
    path = str(path)
    assert cli.main(["check", "--config", path, "--condition", "centering", "--strict"]) == 4
    assert cli.main(["check", "--config", path, "--condition", "centering"]) == 0


def test_simulate_and_tv(cfg, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    path = cfg("simulate: {n: 3000, mode: truncated, t: 1.0}\n")
    assert cli.main(["simulate", "--config", path, "--out", str(a)]) == 0
    assert cli.main(["simulate", "--config", path, "--out", str(b), "--seed", "12"]) == 0
    assert a.read_text().splitlines()[0] == "replicate,value,count"
    capsys.readouterr()
    assert cli.main(["tv", str(a), str(b), "--kde"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 0 <= rep["tv"] <= 2 and rep["atom_a"] > 0.3
    assert "kde_l1" in rep


def test_tv_needs_files(capsys):
    assert cli.main(["tv"]) == 2


def test_check_outputs_json(cfg, capsys):
    assert cli.main(["check", "--config", cfg(), "--condition", "l2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["status"] == "converged" and rep["value"] == pytest.approx(0.48362505, abs=1e-7)


def test_condlaw(cfg, capsys):
    assert cli.main(["condlaw", "--config", cfg("condlaw: {count: 2, n: 3000}\n")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["count"] == 2 and len(rep["arrivals"]) == 2
    assert cli.main(["condlaw", "--config", cfg("condlaw: {count: 0, n: 100}\n")]) == 0
    assert json.loads(capsys.readouterr().out)["pure_atom"] is True


def test_bad_arguments():
    assert cli.main(["frobnicate"]) == 2
