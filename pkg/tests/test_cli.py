import csv
import json
from pathlib import Path

import numpy as np
import pytest

from sandlab.cli import main


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _manifest(out_dir, command):
    with open(Path(out_dir) / f"{command}_manifest.json") as fh:
        return json.load(fh)


def test_stabilize_writes_outputs(tmp_path):
    out = tmp_path / "run"
    rc = main(
        [
            "stabilize", "--measure", "poisson:0.8", "--radius", "15",
            "--seed", "7", "--out", str(out),
        ]
    )
    assert rc == 0
    rows = _read_csv(out / "final_heights.csv")
    assert len(rows) == 31
    assert rows[0]["x0"] == "-15"
    heights = [int(r["height"]) for r in rows]
    assert max(heights) <= 1
    status = _read_csv(out / "status.csv")[0]
    assert status["status"] == "stabilized"
    man = _manifest(out, "stabilize")
    assert man["command"] == "stabilize"
    assert man["measure"] == "poisson:0.8"
    assert man["seed"] == 7
    assert "started" in man and "finished" in man


def test_stabilize_is_deterministic(tmp_path):
    args = ["stabilize", "--measure", "poisson:0.9", "--radius", "10", "--seed", "3"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for name in ("final_heights.csv", "topples.csv", "ledger.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_stabilize_budget_exit_code(tmp_path):
    rc = main(
        [
            "stabilize", "--measure", "constant:3", "--d", "1", "--radius", "50",
            "--budget", "10", "--out", str(tmp_path),
        ]
    )
    assert rc == 3
    # partial outputs still written
    assert (tmp_path / "status.csv").exists()
    assert _read_csv(tmp_path / "status.csv")[0]["status"] == "budget-exceeded"


def test_bad_measure_exit_code(tmp_path):
    assert main(["stabilize", "--measure", "cauchy:1", "--radius", "5", "--out", str(tmp_path)]) == 2


def test_window_flag(tmp_path):
    rc = main(
        [
            "stabilize", "--measure", "constant:1", "--window", "0:4",
            "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    rows = _read_csv(tmp_path / "final_heights.csv")
    assert [r["x0"] for r in rows] == ["0", "1", "2", "3", "4"]


def test_zeros_command(tmp_path):
    rc = main(
        ["zeros", "--measure", "poisson:1", "--nmax", "200", "--seed", "5", "--out", str(tmp_path)]
    )
    assert rc == 0
    pgm = (tmp_path / "zeros.pgm").read_text().splitlines()
    assert pgm[0] == "P2"
    assert pgm[1] == "202 201"
    events = _read_csv(tmp_path / "zeros_events.csv")
    assert set(r["event_kind"] for r in events) <= {
        "disappear", "create_origin", "create_right_boundary", "move",
    }
    counts = _read_csv(tmp_path / "zeros_counts.csv")
    assert len(counts) == 201
    assert int(counts[-1]["z"]) >= 0


def test_clt_command(tmp_path):
    rc = main(
        [
            "clt", "--measure", "poisson:1", "--n", "200", "--replicates", "40",
            "--seed", "2", "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    summary = _read_csv(tmp_path / "clt_summary.csv")[0]
    assert int(summary["replicates"]) == 40
    assert 0.5 < float(summary["variance"]) < 5.0


def test_density_command(tmp_path):
    rc = main(
        [
            "density", "--measure", "poisson:0.8", "--d", "1", "--radius", "3000",
            "--seed", "4", "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    row = _read_csv(tmp_path / "density.csv")[0]
    assert row["conserved"] == "1"
    assert abs(float(row["interior_density"]) - 0.8) < 0.05


def test_density_warns_at_critical(tmp_path, capsys):
    main(
        [
            "density", "--measure", "poisson:1.0", "--d", "1", "--radius", "500",
            "--out", str(tmp_path),
        ]
    )
    assert "critical" in capsys.readouterr().err


def test_iid_command(tmp_path):
    rc = main(
        [
            "iid", "--measure", "twopoint:2,0.5", "--nmax", "4000",
            "--replicates", "30", "--levels", "1,2", "--min-intervals", "50",
            "--seed", "6", "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    ks = _read_csv(tmp_path / "ks.csv")
    comparisons = {r["comparison"] for r in ks}
    assert "z1-vs-z2" in comparisons
    assert "z1-split-half" in comparisons


def test_iid_insufficient_intervals_exit_code(tmp_path):
    rc = main(
        [
            "iid", "--measure", "poisson:0.5", "--nmax", "300", "--replicates", "1",
            "--seed", "6", "--out", str(tmp_path),
        ]
    )
    assert rc == 4


def test_tail_command(tmp_path):
    rc = main(
        [
            "tail", "--measure", "poisson:0.5", "--d", "1", "--radius", "64",
            "--replicates", "800", "--min-count", "20", "--fit-min", "2",
            "--fit-max", "12", "--seed", "8", "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    tail = _read_csv(tmp_path / "tail_W_r64.csv")
    surv = [float(r["survival"]) for r in tail]
    assert all(x >= y for x, y in zip(surv, surv[1:]))  # monotone
    fit = _read_csv(tmp_path / "fit_W_r64.csv")[0]
    assert float(fit["slope"]) < 0


def test_scan_command_is_labeled_exploratory(tmp_path):
    rc = main(
        [
            "scan", "--rhos", "0.8", "--radii", "20,40", "--seeds", "2",
            "--seed", "1", "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    rows = _read_csv(tmp_path / "scan.csv")
    assert all(r["label"] == "EXPLORATORY" for r in rows)
    assert [int(r["radius"]) for r in rows] == [20, 40]


def test_rerun_reproduces_outputs(tmp_path):
    first = tmp_path / "first"
    again = tmp_path / "again"
    main(["stabilize", "--measure", "poisson:0.7", "--radius", "12", "--seed", "9", "--out", str(first)])
    rc = main(["rerun", str(first / "stabilize_manifest.json"), "--out", str(again)])
    assert rc == 0
    assert (first / "final_heights.csv").read_bytes() == (again / "final_heights.csv").read_bytes()
    assert (first / "topples.csv").read_bytes() == (again / "topples.csv").read_bytes()
