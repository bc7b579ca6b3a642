import json

import pytest

from mocon.cli import main, parse_control, parse_kv, resolve
from mocon.errors import ConfigError


def run(tmp_path, *args):
    return main([*args, "--out-dir", str(tmp_path)])


def _load(tmp_path, prefix):
    return json.loads((tmp_path / f"{prefix}.json").read_text())


def test_simulate_const(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--system", "pendulum", "--q0", "0.1", "--t-end", "0.5",
               "--prefix", "s") == 0
    rep = _load(tmp_path, "s")
    assert rep["config"]["system"] == "pendulum" and (tmp_path / "s.csv").exists()
    assert json.loads(capsys.readouterr().out)["config"]["prefix"] == "s"


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--system", "bead", "--q0", "1.1", "--t-end", "0.3", "--control",
            "sin:w=1,omega=50", "--dt", "1e-3", "--prefix", "d"]
    assert run(tmp_path, *args) == 0
    first = [(tmp_path / f"d.{x}").read_bytes() for x in ("csv", "json")]
    assert run(tmp_path, *args) == 0
    assert first == [(tmp_path / f"d.{x}").read_bytes() for x in ("csv", "json")]


def test_simulate_feedback(tmp_path):
    assert run(tmp_path, "simulate", "--system", "bead", "--q0", "1.1", "--t-end", "0.5",
               "--control", "feedback:target=1", "--prefix", "f") == 0
    assert "final_dq" in json.dumps(_load(tmp_path, "f"))


def test_geometry_commands(tmp_path):
    assert run(tmp_path, "geometry", "--system", "bead", "--classify", "--box", "q:0.1..3,u:-1..1",
               "--samples", "32", "--prefix", "c") == 0
    assert "generic" in json.dumps(_load(tmp_path, "c"))
    assert run(tmp_path, "geometry", "--system", "synthetic-linear", "--curvature-limit", "--w", "1",
               "--prefix", "k") == 0
    assert run(tmp_path, "geometry", "--system", "pendulum", "--geodesic", "--q0", "0.3", "--v", "0.5",
               "--w", "1", "--step", "1e-2", "--prefix", "g") == 0
    assert "hamiltonian_drift" in json.dumps(_load(tmp_path, "g"))


def test_stability_commands(tmp_path):
    assert run(tmp_path, "stability", "--system", "double-pendulum", "--target", "q=0.3,-0.05",
               "--solve-w", "--rank-test", "--prefix", "r") == 0
    assert run(tmp_path, "stability", "--system", "pendulum", "--effective", "--w", "5",
               "--prefix", "e") == 0
    assert '"pass"' in json.dumps(_load(tmp_path, "e"))
    assert run(tmp_path, "stability", "--system", "pendulum", "--linearize", "--target", "q=0.5",
               "--prefix", "l") == 0


def test_reparam_and_catalog(tmp_path, capsys):
    assert run(tmp_path, "reparam", "--system", "pendulum", "--q0", "0.3", "--dt", "1e-3",
               "--t-end", "0.5", "--nodes", "501", "--prefix", "rt") == 0
    assert _load(tmp_path, "rt")["round_trip"]["state_error"] < 1e-6
    capsys.readouterr()
    assert main(["catalog"]) == 0
    assert "pendulum" in capsys.readouterr().out


def test_exit_codes(tmp_path, monkeypatch):
    assert run(tmp_path, "simulate") == 1
    assert run(tmp_path, "simulate", "--system", "nope") == 1
    assert run(tmp_path, "simulate", "--system", "pendulum", "--param", "g=-1") == 1
    assert run(tmp_path, "simulate", "--system", "pendulum", "--bogus") == 1
    assert run(tmp_path, "simulate", "--system", "pendulum", "--control",
               "sin:w=1,omega=100;w=1,omega=200") == 1
    assert run(tmp_path, "simulate", "--system", "bead", "--q0", "0", "--t-end", "0.1") == 2
    monkeypatch.setenv("MOCON_LOG", "loud")
    assert main(["catalog"]) == 1
    monkeypatch.setenv("MOCON_LOG", "debug")
    assert main(["catalog"]) == 0


def test_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"system": "pendulum", "t_end": 0.2, "params": {"g": 9.81}}))
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path), "--prefix", "x"]) == 0
    rep = _load(tmp_path, "x")
    assert rep["config"]["t_end"] == 0.2 and rep["config"]["params"]["g"] == 9.81
    # command line wins over the file
    assert main(["simulate", "--config", str(cfg), "--t-end", "0.1", "--out-dir", str(tmp_path),
                 "--prefix", "y"]) == 0
    assert _load(tmp_path, "y")["config"]["t_end"] == 0.1
    cfg.write_text(json.dumps({"system": "pendulum", "colour": 1}))
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1


@pytest.mark.parametrize("jobs", ["1", "2"])
def test_sweep(tmp_path, jobs):
    assert run(tmp_path, "simulate", "--system", "pendulum", "--t-end", "0.1", "--sweep", "g=9.8,3.7",
               "--jobs", jobs, "--prefix", "sw") == 0
    assert _load(tmp_path, "sw-001")["config"]["params"]["g"] == 3.7
    assert (tmp_path / "sw-000.csv").exists()


def test_parsers():
    assert parse_kv("w=1,2,omega=3") == {"w": "1,2", "omega": "3"}
    c = parse_control("sin:w=5,omega=200")
    assert c["kind"] == "sin" and c["terms"][0]["omega"] == 200
    with pytest.raises(ConfigError):
        parse_control("square:w=1")
    with pytest.raises(ConfigError):
        resolve("simulate", {"system": None}, None)
