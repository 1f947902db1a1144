import json
import subprocess
import sys

import numpy as np
import pytest

from mjpgibbs import io
from mjpgibbs.cli import main
from mjpgibbs.core import Generator, InitialDistribution, TableLikelihood
from mjpgibbs.ctbn import CtbnModel


@pytest.fixture
def mjp_files(tmp_path, three_state):
    lik = TableLikelihood([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
    io.save_mjp_model(tmp_path / "model.json", three_state, InitialDistribution.uniform(3), lik)
    io.save_mjp_observations(tmp_path / "obs.csv", [0.0, 1.0, 2.0], [0, 2, 1])
    return tmp_path


@pytest.fixture
def ctbn_files(tmp_path):
    g = Generator([[0, 1.0], [0.5, 0]])
    model = CtbnModel([2, 2], [[1], [0]], [[g, g], [g, g]], [InitialDistribution.uniform(2)] * 2,
                      names=["a", "b"])
    io.save_ctbn_model(tmp_path / "ctbn.json", model)
    (tmp_path / "obs.csv").write_text("node,time,payload\na,0.0,1\nb,1.0,0\n")
    return tmp_path


def test_mjp_command(mjp_files):
    out = mjp_files / "run"
    code = main(["mjp", "--model", str(mjp_files / "model.json"),
                 "--observations", str(mjp_files / "obs.csv"), "--iterations", "60",
                 "--burn-in", "10", "--interval", "0", "2", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == 60
    assert sum(v for k, v in summary["mean"].items() if k.startswith("dwell")) == pytest.approx(2.0)
    lines = (out / "samples.csv").read_text().splitlines()
    assert len(lines) == 51
    assert not (out / "diagnostics.json").exists()


def test_mjp_with_truth(mjp_files):
    main(["oracle", "stats", "--model", str(mjp_files / "model.json"),
          "--observations", str(mjp_files / "obs.csv"), "--interval", "0", "2",
          "--step", "0.01", "--out", str(mjp_files / "truth.json")])
    code = main(["mjp", "--model", str(mjp_files / "model.json"),
                 "--observations", str(mjp_files / "obs.csv"), "--iterations", "40",
                 "--burn-in", "5", "--interval", "0", "2", "--out", str(mjp_files / "run"),
                 "--truth", str(mjp_files / "truth.json")])
    assert code == 0
    diag = json.loads((mjp_files / "run" / "diagnostics.json").read_text())
    assert diag["average_relative_error"] >= 0
    assert diag["statistics"]["dwell_0"]["truth"] > 0


def test_ctbn_command(ctbn_files):
    out = ctbn_files / "run"
    code = main(["ctbn", "--model", str(ctbn_files / "ctbn.json"),
                 "--observations", str(ctbn_files / "obs.csv"), "--sweeps", "30",
                 "--burn-in", "5", "--interval", "0", "2", "--out", str(out)])
    assert code == 0
    header = (out / "samples.csv").read_text().splitlines()[0]
    assert "a.dwell_0" in header and "b.n_1_0" in header
    assert json.loads((out / "summary.json").read_text())["nodes"] == ["a", "b"]


@pytest.mark.parametrize("op", ["expm", "marginals", "stats", "evidence", "rejection"])
def test_oracle_ops(mjp_files, op, capsys):
    code = main(["oracle", op, "--model", str(mjp_files / "model.json"),
                 "--interval", "0", "1", "--step", "0.05", "--samples", "20",
                 "--start", "0", "--end", "1"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    if op == "expm":
        np.testing.assert_allclose(np.sum(out["matrix"], axis=1), 1.0)
    elif op == "rejection":
        assert 0 < out["acceptance_rate"] <= 1


def test_bad_model_exit_2(tmp_path, capsys):
    (tmp_path / "m.json").write_text('{"n": 2}')
    code = main(["mjp", "--model", str(tmp_path / "m.json"), "--interval", "0", "1",
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_inconsistent_evidence_exit_3(tmp_path):
    A = Generator([[0, 0.0], [1.0, 0]])
    io.save_mjp_model(tmp_path / "m.json", A, InitialDistribution.uniform(2))
    io.save_mjp_observations(tmp_path / "o.csv", [0.0, 1.0], [0, 1])
    code = main(["mjp", "--model", str(tmp_path / "m.json"), "--observations",
                 str(tmp_path / "o.csv"), "--interval", "0", "1", "--iterations", "5",
                 "--burn-in", "0", "--out", str(tmp_path / "r")])
    assert code == 3


def test_budget_exit_4(tmp_path):
    config = {"experiment": "lv", "model": {"cap": 10, "t_end": 100.0, "obs_times": [50.0],
                                             "initial": [5, 5]},
              "sampler": {"iterations": 100000, "burn_in": 0, "budget_seconds": 0.05}}
    (tmp_path / "c.json").write_text(json.dumps(config))
    code = main(["experiments", "lv", "--config", str(tmp_path / "c.json"),
                 "--out", str(tmp_path / "r")])
    assert code == 4


def test_experiment_kind_mismatch(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"experiment": "chain"}))
    code = main(["experiments", "lv", "--config", str(tmp_path / "c.json"),
                 "--out", str(tmp_path / "r")])
    assert code == 2


def test_experiments_scaling(tmp_path):
    config = {"experiment": "scaling", "model": {"axis": "states", "levels": [3, 6], "t_end": 5.0},
              "sampler": {"iterations": 10}}
    (tmp_path / "c.json").write_text(json.dumps(config))
    code = main(["experiments", "scaling", "--config", str(tmp_path / "c.json"),
                 "--out", str(tmp_path / "r"), "--seed", "3"])
    assert code == 0
    manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert manifest["seed"] == 3 and "loglog_slope" in manifest["summary"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mjpgibbs", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
