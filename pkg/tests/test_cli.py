import json
import math

import pytest

from conftest import (
    base_config_doc,
    bordered_room,
    empty_grid,
    room_10m,
    square_loop_waypoints,
    write_json,
    write_map,
)
from mhloc.cli import main
from mhloc.gridmap import UNKNOWN
from mhloc.runlog import read_records, split_by_kind


@pytest.fixture()
def workspace(tmp_path):
    """Map + config + scenario files for a small tracking run."""
    grid = room_10m()
    image, metadata = write_map(tmp_path, grid)
    config = write_json(tmp_path / "config.json", base_config_doc(image, metadata))
    scenario = write_json(tmp_path / "scenario.json", {
        "waypoints": square_loop_waypoints(2.0, 2.0, duration=12.0),
        "odom_noise": {"trans_per_meter": 0.01, "yaw_per_rad": 0.02},
        "rates": {"odom_hz": 50.0, "scan_hz": 10.0},
        "seed": 11,
    })
    return tmp_path, config, scenario


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestSimulateCommand:
    def test_writes_log(self, workspace, capsys):
        tmp, config, scenario = workspace
        out = tmp / "run.jsonl"
        assert run_cli("simulate", "--config", config, "--scenario", scenario,
                       "--out", out) == 0
        kinds = split_by_kind(read_records(out))
        assert set(kinds) == {"odom", "gt", "scan"}
        assert abs(len(kinds["scan"]) - 121) <= 1  # 12 s at 10 Hz

    def test_deterministic_for_fixed_seed(self, workspace):
        tmp, config, scenario = workspace
        a, b = tmp / "a.jsonl", tmp / "b.jsonl"
        run_cli("simulate", "--config", config, "--scenario", scenario, "--out", a)
        run_cli("simulate", "--config", config, "--scenario", scenario, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_flag_changes_noise(self, workspace):
        tmp, config, scenario = workspace
        a, b = tmp / "a.jsonl", tmp / "b.jsonl"
        scenario2 = write_json(tmp / "scenario2.json",
                               json.loads((tmp / "scenario.json").read_text()) | {"seed": 99})
        run_cli("simulate", "--config", config, "--scenario", scenario, "--out", a)
        run_cli("simulate", "--config", config, "--scenario", scenario2, "--out", b)
        assert a.read_bytes() != b.read_bytes()

    def test_missing_map_exits_2(self, tmp_path, capsys):
        config = write_json(tmp_path / "config.json",
                            base_config_doc(tmp_path / "nope.pgm", tmp_path / "nope.meta"))
        scenario = write_json(tmp_path / "s.json",
                              {"waypoints": [{"t": 0, "x": 1, "y": 1, "yaw": 0}]})
        code = run_cli("simulate", "--config", config, "--scenario", scenario,
                       "--out", tmp_path / "out.jsonl")
        assert code == 2
        assert "nope.pgm" in capsys.readouterr().err

    def test_bad_scenario_exits_2(self, workspace, capsys):
        tmp, config, _ = workspace
        bad = write_json(tmp / "bad.json", {"waypoints": [
            {"t": 0, "x": 2.5, "y": 6.5, "yaw": 0}]})  # inside block A
        assert run_cli("simulate", "--config", config, "--scenario", bad,
                       "--out", tmp / "out.jsonl") == 2


@pytest.fixture()
def simulated(workspace):
    tmp, config, scenario = workspace
    log = tmp / "run.jsonl"
    assert run_cli("simulate", "--config", config, "--scenario", scenario,
                   "--out", log) == 0
    return tmp, config, log


class TestLocalizeCommand:
    def test_tracking_run(self, simulated):
        tmp, config, log = simulated
        out = tmp / "est.jsonl"
        code = run_cli("localize", "--config", config, "--in", log, "--out", out,
                       "--initial-pose", "1.4 1.4 0")
        assert code == 0
        estimates = split_by_kind(read_records(out)).get("estimate", [])
        assert estimates
        assert estimates[0].t <= 1.0

    def test_deterministic(self, simulated):
        tmp, config, log = simulated
        a, b = tmp / "ea.jsonl", tmp / "eb.jsonl"
        for out in (a, b):
            run_cli("localize", "--config", config, "--in", log, "--out", out,
                    "--initial-pose", "1.4 1.4 0")
        assert a.read_bytes() == b.read_bytes()

    def test_single_hypothesis_from_unknown_start(self, simulated):
        tmp, config, log = simulated
        out = tmp / "single.jsonl"
        code = run_cli("localize", "--config", config, "--in", log, "--out", out,
                       "--single-hypothesis")
        assert code == 0
        estimates = split_by_kind(read_records(out)).get("estimate", [])
        assert all(e.n_hyp <= 1 for e in estimates)

    def test_no_scans_is_diagnostic(self, simulated, capsys):
        tmp, config, log = simulated
        stripped = tmp / "noscan.jsonl"
        records = [r for r in read_records(log) if r.kind != "scan"]
        from mhloc.runlog import write_records

        write_records(stripped, records)
        code = run_cli("localize", "--config", config, "--in", stripped,
                       "--out", tmp / "o.jsonl")
        assert code == 1
        assert "scan" in capsys.readouterr().err

    def test_emit_cpu_adds_field(self, simulated):
        tmp, config, log = simulated
        out = tmp / "cpu.jsonl"
        run_cli("localize", "--config", config, "--in", log, "--out", out,
                "--initial-pose", "1.4 1.4 0", "--emit-cpu")
        first = json.loads(out.read_text().splitlines()[0])
        assert "cpu_s" in first

    def test_bad_initial_pose_exits_2(self, simulated):
        tmp, config, log = simulated
        assert run_cli("localize", "--config", config, "--in", log,
                       "--out", tmp / "o.jsonl", "--initial-pose", "1.4 1.4") == 2


class TestMatchCommand:
    def test_corner_scan_ranks_true_pose_first(self, simulated, capsys):
        tmp, config, log = simulated
        code = run_cli("match", "--config", config, "--log", log, "--at", "0.0")
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "x,y,yaw,score,level"
        x, y, yaw, score, level = out[1].split(",")
        gt0 = split_by_kind(read_records(log))["gt"][0]
        assert math.hypot(float(x) - gt0.x, float(y) - gt0.y) < 0.5
        assert float(score) > 0.5

    def test_all_unknown_map_empty_table(self, tmp_path, capsys):
        grid = empty_grid(64, 64, 0.05, value=UNKNOWN)
        image, metadata = write_map(tmp_path, grid, "unknown")
        config = write_json(tmp_path / "c.json", base_config_doc(image, metadata))

        room = room_10m()
        image2, metadata2 = write_map(tmp_path, room, "room")
        config2 = write_json(tmp_path / "c2.json", base_config_doc(image2, metadata2))
        scenario = write_json(tmp_path / "s.json", {
            "waypoints": square_loop_waypoints(2.0, 2.0, duration=2.0),
            "rates": {"odom_hz": 20.0, "scan_hz": 5.0},
        })
        log = tmp_path / "log.jsonl"
        run_cli("simulate", "--config", config2, "--scenario", scenario, "--out", log)
        capsys.readouterr()  # discard the simulate status line

        code = run_cli("match", "--config", config, "--log", log, "--at", "0.0")
        assert code == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out == ["x,y,yaw,score,level"]

    def test_no_scan_near_time(self, simulated, capsys):
        tmp, config, log = simulated
        assert run_cli("match", "--config", config, "--log", log, "--at", "500.0") == 1

    def test_csv_to_file(self, simulated):
        tmp, config, log = simulated
        out = tmp / "candidates.csv"
        assert run_cli("match", "--config", config, "--log", log, "--at", "0.0",
                       "--out", out) == 0
        assert out.read_text().startswith("x,y,yaw,score,level")


class TestBenchCommand:
    def test_identical_streams_zero_error(self, simulated, tmp_path):
        tmp, config, log = simulated
        est = tmp / "fake_est.jsonl"
        records = split_by_kind(read_records(log))["gt"]
        from mhloc.runlog import EstimateRecord, write_records

        write_records(est, [
            EstimateRecord(g.t, g.x, g.y, g.yaw, [0.0] * 9, 1.0, 1, 0)
            for g in records
        ])
        out_dir = tmp / "bench"
        code = run_cli("bench", "--config", config, "--est", est, "--gt", log,
                       "--out", out_dir)
        assert code == 0
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["mean"] == 0.0
        assert summary["recovered"] is True
        assert summary["recovery_time"] == 0.0
        assert (out_dir / "error_series.csv").exists()
        assert (out_dir / "error_vs_time.png").exists()
        assert (out_dir / "quality_uncertainty.png").exists()

    def test_step_recovery_detected(self, simulated):
        tmp, config, log = simulated
        gt = split_by_kind(read_records(log))["gt"]
        from mhloc.runlog import EstimateRecord, write_records

        est = tmp / "step.jsonl"
        write_records(est, [
            EstimateRecord(g.t, g.x + (1.0 if g.t < 4.0 else 0.0), g.y, g.yaw,
                           [0.0] * 9, 1.0, 1, 0)
            for g in gt
        ])
        out_dir = tmp / "bench_step"
        code = run_cli("bench", "--config", config, "--est", est, "--gt", log,
                       "--out", out_dir, "--threshold", "0.3", "--hold", "5.0",
                       "--no-plots")
        assert code == 0
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["recovery_time"] == pytest.approx(4.0, abs=0.11)
        assert not (out_dir / "error_vs_time.png").exists()

    def test_missing_gt_diagnostic(self, simulated, capsys):
        tmp, config, log = simulated
        est = tmp / "e.jsonl"
        onlyodom = tmp / "odom_only.jsonl"
        from mhloc.runlog import EstimateRecord, write_records

        write_records(est, [EstimateRecord(0.0, 0, 0, 0, [0.0] * 9, 1.0, 1, 0)])
        write_records(onlyodom, split_by_kind(read_records(log))["odom"])
        code = run_cli("bench", "--config", config, "--est", est, "--gt", onlyodom,
                       "--out", tmp / "b2")
        assert code == 1
        assert "ground truth" in capsys.readouterr().err

    def test_no_overlap_diagnostic(self, simulated, capsys):
        tmp, config, log = simulated
        est = tmp / "late.jsonl"
        from mhloc.runlog import EstimateRecord, write_records

        write_records(est, [EstimateRecord(900.0, 0, 0, 0, [0.0] * 9, 1.0, 1, 0)])
        code = run_cli("bench", "--config", config, "--est", est, "--gt", log,
                       "--out", tmp / "b3")
        assert code == 1


class TestConfigValidation:
    def test_out_of_range_field_named(self, tmp_path, capsys):
        grid = bordered_room(40, 40)
        image, metadata = write_map(tmp_path, grid)
        doc = base_config_doc(image, metadata)
        doc["filter"]["winner_pct"] = 1.5
        config = write_json(tmp_path / "bad.json", doc)
        scenario = write_json(tmp_path / "s.json",
                              {"waypoints": [{"t": 0, "x": 1, "y": 1, "yaw": 0}]})
        code = run_cli("simulate", "--config", config, "--scenario", scenario,
                       "--out", tmp_path / "o.jsonl")
        assert code == 2
        assert "filter.winner_pct" in capsys.readouterr().err

    def test_rate_must_be_positive(self, tmp_path, capsys):
        grid = bordered_room(40, 40)
        image, metadata = write_map(tmp_path, grid)
        doc = base_config_doc(image, metadata)
        doc["multihyp"]["rates"]["correct_hz"] = 0.0
        config = write_json(tmp_path / "bad.json", doc)
        scenario = write_json(tmp_path / "s.json",
                              {"waypoints": [{"t": 0, "x": 1, "y": 1, "yaw": 0}]})
        assert run_cli("simulate", "--config", config, "--scenario", scenario,
                       "--out", tmp_path / "o.jsonl") == 2
        assert "correct_hz" in capsys.readouterr().err

    def test_particle_bounds_cross_check(self, tmp_path, capsys):
        grid = bordered_room(40, 40)
        image, metadata = write_map(tmp_path, grid)
        doc = base_config_doc(image, metadata)
        doc["filter"]["particles_min"] = 500
        config = write_json(tmp_path / "bad.json", doc)
        scenario = write_json(tmp_path / "s.json",
                              {"waypoints": [{"t": 0, "x": 1, "y": 1, "yaw": 0}]})
        assert run_cli("simulate", "--config", config, "--scenario", scenario,
                       "--out", tmp_path / "o.jsonl") == 2
        assert "particles_min" in capsys.readouterr().err
