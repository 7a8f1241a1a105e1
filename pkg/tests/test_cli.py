import csv
import json
import math

import pytest

from conftest import LOG2, LOG3
from ruelle.cli import main, run
from ruelle.config import ConfigError, RunConfig

FIRST = {
    "alphabet": {"kind": "finite", "size": 2},
    "potential": {"family": "first-coordinate", "params": {"values": [0.0, LOG3]}},
    "grid": {"depth": 6},
    "seed": 0,
}
ZERO = {
    "alphabet": {"kind": "finite", "size": 2},
    "potential": {"family": "constant", "params": {"c": 0.0}},
    "grid": {"depth": 5},
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_pressure_value(tmp_path):
    out = tmp_path / "out"
    assert run("pressure", write_config(tmp_path, FIRST), out) == 0
    row = read_csv(out / "pressure_value.csv")[0]
    assert abs(float(row["log_lambda"]) - LOG2) < 1e-9
    manifest = json.loads((out / "pressure.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["outputs"] == ["pressure_value.csv"]
    assert manifest["config"]["eigen_tol"] == 1e-12


def test_eigen_of_zero_potential(tmp_path):
    out = tmp_path / "out"
    assert run("eigen", write_config(tmp_path, ZERO), out) == 0
    results = json.loads((out / "eigen.json").read_text())["results"]
    assert results["lambda"] == pytest.approx(1.0, abs=1e-12)
    h = read_csv(out / "eigen_h.csv")
    assert len(h) == 32 and all(float(r["value"]) == pytest.approx(1.0) for r in h)


def test_negative_tolerance_writes_nothing(tmp_path, capsys):
    bad = dict(FIRST, tolerances={"eigen": -1e-9})
    out = tmp_path / "out"
    assert run("eigen", write_config(tmp_path, bad), out) == 2
    assert not out.exists()
    assert "tolerances.eigen" in capsys.readouterr().err


@pytest.mark.parametrize(
    "patch, message",
    [
        ({"alphabet": {"kind": "bogus"}}, "alphabet.kind"),
        ({"grid": {"depth": 0}}, "grid.depth"),
        ({"grid": {"depth": 40}}, "grid-size cap"),
        ({"seed": -1}, "seed"),
        ({"extra": 1}, "unknown config keys"),
        ({"commands": {"betascan": {"betas": [2, 1]}}}, "ascending"),
        ({"commands": {"clt": {"samples": 0}}}, "clt.samples"),
        ({"potential": {"family": "nope"}}, "family"),
    ],
)
def test_config_validation_names_the_precondition(patch, message):
    with pytest.raises(ConfigError, match=message):
        RunConfig.from_dict({**FIRST, **patch})


def test_missing_config_file(tmp_path, capsys):
    assert run("eigen", tmp_path / "missing.json", tmp_path / "out") == 2
    assert "does not exist" in capsys.readouterr().err


def test_convergence_failure_persists_history(tmp_path):
    two = {
        "alphabet": {"kind": "finite", "size": 2},
        "potential": {"family": "two-coordinate", "params": {"matrix": [[0.0, LOG2], [LOG3, 0.0]]}},
        "grid": {"depth": 6},
        "max_iter": 3,
    }
    out = tmp_path / "out"
    assert run("eigen", write_config(tmp_path, two), out) == 3
    manifest = json.loads((out / "eigen.json").read_text())
    assert manifest["status"] == "convergence-failure"
    assert len(read_csv(out / "eigen_history.csv")) == 3


def test_degenerate_clt_exits_with_precondition_error(tmp_path, capsys):
    cfg = dict(ZERO, commands={"clt": {"xi": {"family": "constant", "params": {"c": 1.0}}, "n": 50, "samples": 100}})
    out = tmp_path / "out"
    assert run("clt", write_config(tmp_path, cfg), out) == 2
    assert json.loads((out / "clt.json").read_text())["status"] == "precondition-failure"
    assert "variance" in capsys.readouterr().err


def test_paths_demo_requires_path_space(tmp_path):
    assert run("paths-demo", write_config(tmp_path, FIRST), tmp_path / "out") == 2


def test_seed_override_changes_simulation(tmp_path):
    cfg = write_config(tmp_path, dict(FIRST, commands={"markov-sim": {"n": 300}}))
    run("markov-sim", cfg, tmp_path / "a", seed=1)
    run("markov-sim", cfg, tmp_path / "b", seed=2)
    run("markov-sim", cfg, tmp_path / "c", seed=1)
    a, b, c = ((tmp_path / d / "markov-sim_trace.csv").read_bytes() for d in "abc")
    assert a == c and a != b


def test_betascan_table(tmp_path):
    cfg = write_config(tmp_path, dict(FIRST, commands={"betascan": {"betas": [0, 1, 50]}}))
    assert run("betascan", cfg, tmp_path / "out") == 0
    rows = read_csv(tmp_path / "out" / "betascan_table.csv")
    assert [float(r["beta"]) for r in rows] == [0.0, 1.0, 50.0]
    assert float(rows[-1]["mean_f"]) == pytest.approx(LOG3, abs=1e-9)
    assert float(rows[1]["log_lambda"]) == pytest.approx(math.log(2.0))


def test_main_parses_arguments(tmp_path, monkeypatch):
    monkeypatch.setenv("RUELLE_OUT_DIR", str(tmp_path / "env-out"))
    assert main(["pressure", "--config", str(write_config(tmp_path, FIRST))]) == 0
    assert (tmp_path / "env-out" / "pressure.json").exists()
    with pytest.raises(SystemExit) as err:
        main(["nonsense", "--config", "x.json"])
    assert err.value.code == 2
    assert main(["eigen", "--config", "x.json", "--threads", "0"]) == 2
