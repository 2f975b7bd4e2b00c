import json

import numpy as np
import pytest

from gpds_ep.cli import _parse_seeds, main
from gpds_ep.experiment import REPORT_SCHEMA
from gpds_ep.systems import Trajectory


def test_parse_seeds_commas_and_ranges():
    assert _parse_seeds("1,3..5,9") == (1, 3, 4, 5, 9)
    assert _parse_seeds("7") == (7,)
    assert _parse_seeds(" 2 , 4..4 ") == (2, 4)


def test_unknown_system_exits_one(capsys):
    assert main(["bench", "--system", "lorenz"]) == 1
    assert "error" in capsys.readouterr().err


def test_simulate_writes_trajectories(tmp_path):
    rc = main(["simulate", "--system", "sine", "--seeds", "3,4",
               "--T", "12", "--out", str(tmp_path)])
    assert rc == 0
    files = sorted(p.name for p in tmp_path.glob("*.csv"))
    assert files == ["sine-seed3.csv", "sine-seed4.csv"]
    tr = Trajectory.load(tmp_path / "sine-seed3.csv")
    assert tr.X.shape == (12, 1)
    assert tr.Z.shape == (12, 1)
    assert tr.U is None


def test_simulate_pendulum_has_controls(tmp_path):
    rc = main(["simulate", "--system", "pendulum", "--seeds", "5",
               "--T", "8", "--out", str(tmp_path)])
    assert rc == 0
    tr = Trajectory.load(tmp_path / "pendulum-seed5.csv")
    assert tr.X.shape == (8, 2)
    assert tr.Z.shape == (8, 2)
    assert tr.U.shape == (7, 1)


def test_smooth_linear_prints_metrics(capsys):
    rc = main(["smooth", "--system", "linear", "--method", "ep-eks",
               "--seeds", "11", "--T", "10"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["method"] == "ep-eks"
    assert out["failed"] is False
    assert np.isfinite(out["nll_x"])
    assert np.isfinite(out["mae_x"])
    assert out["skipped_fraction"] == 0.0


def test_smooth_rejects_multiple_methods(capsys):
    rc = main(["smooth", "--system", "linear", "--method", "eks,gpads"])
    assert rc == 1


def test_bench_linear_deterministic_report(tmp_path, capsys):
    args = ["bench", "--system", "linear", "--seeds", "0,1",
            "--T", "10", "--method", "eks,ep-eks", "--deterministic",
            "--out", str(tmp_path / "a")]
    assert main(args) == 0
    table = capsys.readouterr().out
    assert "eks" in table and "ep-eks" in table
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["schema"] == REPORT_SCHEMA
    assert set(report["methods"]) == {"eks", "ep-eks"}
    for entry in report["methods"].values():
        assert entry["failures"] == 0
        assert entry["exact"] is True      # linear runs must match RTS
        assert entry["rts_deviation_max"] < 1e-6
    # identical seeds and settings reproduce everything but wall times
    args2 = args[:-1] + [str(tmp_path / "b")]
    assert main(args2) == 0
    capsys.readouterr()
    second = json.loads((tmp_path / "b" / "report.json").read_text())

    def strip(obj):
        if isinstance(obj, dict):
            return {k: strip(v) for k, v in obj.items()
                    if k not in ("wall_time", "out_dir")}
        if isinstance(obj, list):
            return [strip(v) for v in obj]
        return obj

    assert strip(second) == strip(report)


def test_bench_writes_per_run_dumps(tmp_path, capsys):
    assert main(["bench", "--system", "linear", "--seeds", "2",
                 "--T", "6", "--method", "eks", "--deterministic",
                 "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    dumps = list(tmp_path.glob("*seed2.csv"))
    assert len(dumps) == 1
    header = dumps[0].read_text().splitlines()[0].split(",")
    assert header[0] == "t"
    assert any(c.endswith("_true") for c in header)
    assert any(c.endswith("_mean") for c in header)
    assert any(c.endswith("_lo") for c in header)
    assert any(c.endswith("_hi") for c in header)


def test_smooth_on_saved_trajectory_with_model(tmp_path, capsys):
    assert main(["simulate", "--system", "sine", "--seeds", "7",
                 "--T", "10", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    # training on the tiny default grid takes a couple of seconds at most
    assert main(["train", "--system", "sine", "--seeds", "0",
                 "--out", str(tmp_path / "model.json")]) == 0
    capsys.readouterr()
    rc = main(["smooth", "--system", str(tmp_path / "sine-seed7.csv"),
               "--method", "gpads", "--model", str(tmp_path / "model.json")])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["failed"] is False
    assert np.isfinite(out["nll_z"])


def test_file_system_requires_model(tmp_path, capsys):
    assert main(["simulate", "--system", "sine", "--seeds", "7",
                 "--T", "6", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    rc = main(["smooth", "--system", str(tmp_path / "sine-seed7.csv"),
               "--method", "gpads"])
    assert rc == 1
