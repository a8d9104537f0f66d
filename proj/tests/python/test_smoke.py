"""End-to-end smoke tests for the python bindings."""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

import xtrace


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def test_metrics():
    assert approx(xtrace.ccc([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]), 1.0)
    assert approx(xtrace.ccc([1, 2, 3, 4], [2, 3, 4, 5]), 2.5 / 3.5)
    assert approx(xtrace.mae([0, 0], [0.5, -0.5]), 0.5)
    assert approx(xtrace.icc31([[1, 1], [2, 2], [3, 3]]), 1.0)
    assert approx(xtrace.icc31([[1, 2], [3, 3], [5, 4], [2, 2]]), 19.0 / 23.0)
    assert approx(xtrace.ced_auc([0.0] * 10, 0.08, 50), 100.0)

    base = [[100.0 + 10.0 * i, 50.0 + (i % 7)] for i in range(68)]
    assert approx(xtrace.nme(base, base), 0.0)

    assert xtrace.quadrant(0.5, 0.5) == "Q1"
    assert xtrace.quadrant(-0.3, 0.2) == "Q2"
    assert xtrace.quadrant(0.0, 0.0) == "Q1"
    assert xtrace.grid_bin(-1.0, -1.0, 8) == (0, 0)
    assert xtrace.grid_bin(1.0, 1.0, 8) == (7, 7)


def test_end_to_end(tmp: Path):
    data = tmp / "data"
    sim = xtrace.simulate(str(data), clips=12, seed=5, clip_len=24,
                          raters=3, train_frac=0.5, val_frac=0.0)
    assert sim["n_clips"] == 12
    assert sim["n_frames"] == 12 * 24
    assert (data / "manifest.json").is_file()
    assert (data / "annotations.csv").is_file()
    assert sum(sim["quadrant_counts"]) == 12

    model = xtrace.train(str(data), str(tmp / "model"), epochs=2, hidden_dim=8, seed=3)
    assert Path(model["checkpoint"]).is_file()
    assert len(model["epoch_loss"]) == 2
    assert all(math.isfinite(l) for l in model["epoch_loss"])

    inf = xtrace.infer(model["checkpoint"], str(data), str(tmp / "pred"),
                       split="test", window=8)
    assert inf["n_clips"] > 0
    assert inf["n_frames"] == inf["n_clips"] * 24

    result = xtrace.evaluate(str(tmp / "pred" / "predictions"), str(data),
                             str(tmp / "eval"))
    overall = result["overall"]
    assert overall["n_frames"] == inf["n_frames"]
    assert -1.0 <= overall["ccc_v"] <= 1.0
    assert overall["mae_v"] >= 0.0

    report = json.loads(result["report_json"])
    assert set(report) >= {"overall", "quadrants", "grid", "pose", "leave_n_in", "wmae"}
    assert report["wmae"] is not None
    assert len(report["leave_n_in"]["valence_lowest"]) == 4
    assert (tmp / "eval" / "report.json").is_file()


def main():
    test_metrics()
    tmp = Path(tempfile.mkdtemp(prefix="xtrace_smoke_"))
    try:
        test_end_to_end(tmp)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    print("smoke tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
