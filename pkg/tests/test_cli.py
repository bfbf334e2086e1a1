import json
import os
import shutil

import numpy as np
import pytest

from mtsplan.cli import main

from conftest import ROOM_A

RUN_FLAGS = [
    "--mts-rows", "12", "--mts-cols", "8", "--samples", "400",
    "--seed", "7", "--kappa", "2.0", "--associate-nearest",
]


def _run(argv):
    return main(argv)


def test_config_defaults():
    from mtsplan.config import RunConfig

    cfg = RunConfig()
    assert cfg.delta == -78.0
    assert cfg.capacity == 6
    assert (cfg.mts_rows, cfg.mts_cols) == (21, 14)
    assert cfg.mts_spec.n_atoms == 294
    assert cfg.mts_spacing == 0.06
    assert cfg.samples == 1000
    assert cfg.cell_size == 1.0
    assert cfg.effective_kappa == 0.06  # defaults to the atom spacing
    assert cfg.associate_nearest is False
    assert cfg.effective_threads >= 1


def test_heatmap_row_count(tmp_path):
    rc = _run(["heatmap", str(ROOM_A), "-o", str(tmp_path), "--no-figures"])
    assert rc == 0
    lines = (tmp_path / "room_a.heatmap.csv").read_text().splitlines()
    assert lines[0] == "i,j,x,y,rss_dbm"
    assert len(lines) == 1 + 10 * 8


def test_heatmap_half_cell_size_quadruples_rows(tmp_path):
    _run(["heatmap", str(ROOM_A), "-o", str(tmp_path / "a"), "--no-figures"])
    _run(["heatmap", str(ROOM_A), "-o", str(tmp_path / "b"),
          "--cell-size", "0.5", "--no-figures"])
    n1 = len((tmp_path / "a" / "room_a.heatmap.csv").read_text().splitlines()) - 1
    n2 = len((tmp_path / "b" / "room_a.heatmap.csv").read_text().splitlines()) - 1
    assert n2 == 4 * n1


def test_heatmap_matches_library_bit_exactly(tmp_path):
    from mtsplan.raytrace import direct_rss_map
    from mtsplan.scene import load_scene, make_grid

    _run(["heatmap", str(ROOM_A), "-o", str(tmp_path), "--no-figures"])
    scene = load_scene(ROOM_A)
    hm = direct_rss_map(scene, make_grid(scene, 1.0))
    api_path = tmp_path / "api.csv"
    hm.write_csv(api_path)
    assert api_path.read_bytes() == (tmp_path / "room_a.heatmap.csv").read_bytes()


def test_sense_emits_blind_cells(tmp_path, capsys):
    rc = _run(["sense", str(ROOM_A), "-o", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "room_a.blindspots.csv").read_text().splitlines()
    assert lines[0] == "i,j,x,y,rss_dbm"
    assert len(lines) > 1
    assert "blind spot(s)" in capsys.readouterr().out


def test_run_twice_byte_identical(tmp_path):
    for sub in ("x", "y"):
        rc = _run(["run", str(ROOM_A), "-o", str(tmp_path / sub)] + RUN_FLAGS)
        assert rc == 0
    names = sorted(os.listdir(tmp_path / "x"))
    assert names == sorted(os.listdir(tmp_path / "y"))
    for name in names:
        a = (tmp_path / "x" / name).read_bytes()
        b = (tmp_path / "y" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"


def test_run_emits_figures_and_report(tmp_path):
    rc = _run(["run", str(ROOM_A), "-o", str(tmp_path)] + RUN_FLAGS)
    assert rc == 0
    report = json.loads((tmp_path / "room_a.report.json").read_text())
    assert report["blind_spots"]["after"]["count"] == 0
    assert report["phases"]["n_atoms"] == report["plan"]["spec"]["rows"] * \
        report["plan"]["spec"]["cols"] * len(report["plan"]["mts"])
    for key in ("before_heatmap_png", "after_heatmap_png", "cdf_png"):
        assert (tmp_path / report["files"][key]).exists()
    # CDF csv is monotone in both columns
    rows = (tmp_path / report["files"]["cdf_csv"]).read_text().splitlines()[1:]
    vals = [tuple(map(float, r.split(","))) for r in rows]
    assert all(vals[k][0] <= vals[k + 1][0] for k in range(len(vals) - 1))
    assert abs(vals[-1][1] - 1.0) < 1e-9


def test_plan_then_optimize_roundtrip(tmp_path):
    rc = _run(["plan", str(ROOM_A), "-o", str(tmp_path), "--mts-rows", "12",
               "--mts-cols", "8", "--seed", "1", "--kappa", "2.0", "--no-figures"])
    assert rc == 0
    plan_path = tmp_path / "room_a.plan.json"
    assert plan_path.exists()
    rc = _run(["optimize", str(ROOM_A), "-o", str(tmp_path), "--plan", str(plan_path),
               "--samples", "400", "--seed", "1", "--kappa", "2.0",
               "--associate-nearest", "--no-figures"])
    assert rc == 0
    doc = json.loads((tmp_path / "room_a.optimize.json").read_text())
    assert doc["users"]["min_rss_dbm"] >= -78.0


def test_optimize_benchmark_ordering(tmp_path):
    # a fixed 8-atom plan keeps the exhaustive baseline tractable
    from mtsplan.placement import DeploymentPlan, pose_on_wall
    from mtsplan.raytrace import MtsSpec
    from mtsplan.scene import load_scene

    scene = load_scene(ROOM_A)
    spec = MtsSpec(rows=2, cols=4, spacing=0.06)
    plan = DeploymentPlan(
        poses=(pose_on_wall(scene, 2, 0.75, spec.extent),),
        cluster_of=(0,), beam_targets=np.array([[8.5, 6.5]]), spec=spec,
    )
    plan_path = tmp_path / "toy.plan.json"
    plan_path.write_text(json.dumps(plan.to_dict()))
    rc = _run(["optimize", str(ROOM_A), "-o", str(tmp_path), "--benchmark",
               "--plan", str(plan_path), "--samples", "300",
               "--seed", "3", "--kappa", "2.0", "--no-figures"])
    assert rc == 0
    rows = (tmp_path / "room_a.benchmark.csv").read_text().splitlines()
    assert rows[0] == "method,min_rss_dbm,mean_rss_dbm"
    table = {r.split(",")[0]: float(r.split(",")[1]) for r in rows[1:]}
    assert set(table) == {"zero", "random", "greedy", "csm", "exhaustive"}
    assert table["exhaustive"] >= table["csm"] - 1e-9
    assert table["exhaustive"] >= table["greedy"] - 1e-9
    assert max(table["csm"], table["greedy"]) >= table["zero"] - 1e-9


def test_run_monitor_perturb_shows_reopt(tmp_path):
    report_path = tmp_path / "room_a.report.json"
    # explicit wall under the panel wall so the drill severs every panel path
    rc = _run(["run", str(ROOM_A), "-o", str(tmp_path), "--monitor", "4",
               "--perturb-epoch", "2", "--perturb-wall", "5.4,7.5,9.9,7.5"]
              + RUN_FLAGS)
    assert rc == 0
    doc = json.loads(report_path.read_text())
    epochs = doc["monitor"]["epochs"]
    assert len(epochs) == 4
    assert epochs[0]["mode"] == "normal"
    assert epochs[2]["mode"] == "phase_reopt"
    assert epochs[2]["action"] == "trigger-csm"


def test_validation_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(["heatmap", str(bad), "-o", str(tmp_path)]) == 2
    assert _run(["run", str(bad), "-o", str(tmp_path)]) == 2


def test_env_overrides_and_flag_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("MTSPLAN_CELL_SIZE", "2.0")
    _run(["heatmap", str(ROOM_A), "-o", str(tmp_path / "env"), "--no-figures"])
    lines = (tmp_path / "env" / "room_a.heatmap.csv").read_text().splitlines()
    assert len(lines) == 1 + 5 * 4  # 10x8 room at 2 m cells
    # flag wins over environment
    _run(["heatmap", str(ROOM_A), "-o", str(tmp_path / "flag"),
          "--cell-size", "1.0", "--no-figures"])
    lines = (tmp_path / "flag" / "room_a.heatmap.csv").read_text().splitlines()
    assert len(lines) == 1 + 10 * 8


def test_exhausted_exit_code(tmp_path):
    # mounting room only below the shelf, where no panel can see the
    # pocket: the loop runs out and exits 4, still emitting the report
    doc = json.loads(ROOM_A.read_text())
    doc["feasible"] = [{"wall": 1, "t0": 0.06, "t1": 0.56}]
    scene_path = tmp_path / "cramped.json"
    scene_path.write_text(json.dumps(doc))
    rc = _run(["run", str(scene_path), "-o", str(tmp_path)] + RUN_FLAGS)
    assert rc == 4
    report = json.loads((tmp_path / "cramped.report.json").read_text())
    assert report["exhausted"] is True
    assert report["blind_spots"]["after"]["count"] > 0
