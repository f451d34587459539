import csv
import json

import numpy as np
import pytest

from nbvplan.cli import main as cli_main
from nbvplan.cloud import ObservedCloud, load_cloud_ply
from nbvplan.harness import (
    METRIC_COLUMNS,
    CoverageTracker,
    ExperimentConfig,
    coverage,
    run_experiment,
)
from nbvplan.mesh import make_icosphere, save_mesh_ply
from nbvplan.params import ConfigError


def cloud_from(points):
    c = ObservedCloud(1e-9)
    if len(points):
        c.insert_filtered(np.asarray(points, dtype=float), np.zeros(3))
    return c


class TestCoverage:
    def test_exact_vertex_cloud_is_fully_covered(self):
        mesh = make_icosphere(0.3, subdivisions=1)
        assert coverage(mesh, cloud_from(mesh.vertices), eta=0.005) == 1.0

    def test_empty_cloud(self):
        mesh = make_icosphere(0.3, subdivisions=1)
        assert coverage(mesh, cloud_from([]), eta=0.005) == 0.0

    def test_half_covered(self):
        mesh = make_icosphere(0.3, subdivisions=2)
        n = len(mesh.vertices)
        half = mesh.vertices[: n // 2]
        got = coverage(mesh, cloud_from(half), eta=0.001)  # eta below vertex spacing
        assert got == pytest.approx((n // 2) / n)

    def test_matches_brute_force(self, rng):
        mesh = make_icosphere(0.25, subdivisions=2)
        pts = rng.uniform(-0.3, 0.3, size=(500, 3))
        cloud = cloud_from(pts)
        eta = 0.05
        got = coverage(mesh, cloud, eta)
        expected = np.mean(
            [np.min(np.linalg.norm(cloud.points - v, axis=1)) <= eta for v in mesh.vertices]
        )
        assert got == pytest.approx(expected)

    def test_eta_must_be_positive(self):
        mesh = make_icosphere(0.3, subdivisions=1)
        with pytest.raises(ValueError):
            coverage(mesh, cloud_from(mesh.vertices), eta=0.0)

    def test_tracker_matches_batch_coverage(self, rng):
        mesh = make_icosphere(0.25, subdivisions=2)
        tracker = CoverageTracker(mesh, eta=0.05)
        cloud = ObservedCloud(1e-9)
        for batch in np.array_split(rng.uniform(-0.3, 0.3, size=(300, 3)), 4):
            cloud.insert_filtered(batch, np.zeros(3))
            assert tracker.update(cloud) == pytest.approx(coverage(mesh, cloud, 0.05))


def write_config(tmp_path, mesh_name="sphere.ply", seeds=2, extra=""):
    mesh = make_icosphere(0.3, subdivisions=3)
    save_mesh_ply(mesh, tmp_path / mesh_name)
    cfg = tmp_path / "run.txt"
    cfg.write_text(
        f"mesh = {mesh_name}\n"
        "sensor_width = 120\n"
        "sensor_height = 80\n"
        "fov_x_deg = 70\n"
        "fov_y_deg = 43\n"
        "noise_sigma = 0\n"
        "r = 0.05\n"
        "d = 0.5\n"
        "psi = 0.5\n"
        "upsilon = 0.02\n"
        "tau = 30\n"
        "eta = 0.02\n"
        f"seeds = {seeds}\n"
        "max_views = 40\n" + extra
    )
    return cfg


class TestRunExperiment:
    def test_outputs_written(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_config(tmp_path))
        out = tmp_path / "results"
        summary = run_experiment(cfg, out)
        assert summary["n_trials"] == 2 and summary["n_failed"] == 0
        assert (out / "views.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "params.txt").exists()
        assert (out / "coverage_vs_distance.png").exists()
        assert (out / "coverage_vs_time.png").exists()
        for seed in (0, 1):
            assert (out / f"trial_{seed:03d}.ply").exists()
            assert (out / f"trial_{seed:03d}_events.jsonl").exists()

    def test_metric_csv_schema(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_config(tmp_path, seeds=1))
        out = tmp_path / "results"
        run_experiment(cfg, out)
        with open(out / "views.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == METRIC_COLUMNS
        assert len(rows) > 1
        trials = {r[0] for r in rows[1:]}
        assert trials == {"0"}
        coverages = [float(r[5]) for r in rows[1:]]
        assert all(b >= a for a, b in zip(coverages, coverages[1:]))

    def test_event_log_is_jsonl(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_config(tmp_path, seeds=1))
        out = tmp_path / "results"
        run_experiment(cfg, out)
        lines = (out / "trial_000_events.jsonl").read_text().splitlines()
        first = json.loads(lines[0])
        for key in ("view_index", "x", "outcome", "points_total", "frontiers", "nbv_time_s"):
            assert key in first

    def test_final_cloud_ply_loads(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_config(tmp_path, seeds=1))
        out = tmp_path / "results"
        run_experiment(cfg, out)
        cloud = load_cloud_ply(out / "trial_000.ply")
        assert len(cloud) > 1000
        assert set(np.unique(cloud.classes)) <= {0, 1, 2}

    def test_params_echoed_for_provenance(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_config(tmp_path, seeds=1))
        out = tmp_path / "results"
        run_experiment(cfg, out)
        text = (out / "params.txt").read_text()
        for key in ("rho =", "k_min =", "epsilon =", "sensor_width = 120"):
            assert key in text

    def test_missing_mesh_key_is_config_error(self, tmp_path):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("sensor_width = 10\n")
        with pytest.raises(ConfigError, match="mesh"):
            ExperimentConfig.from_file(cfg)

    def test_seed_override(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_config(tmp_path, seeds=5))
        out = tmp_path / "results"
        summary = run_experiment(cfg, out, seeds=[7])
        assert summary["n_trials"] == 1
        assert (out / "trial_007.ply").exists()

    def test_scale_key_fills_defaults(self, tmp_path):
        mesh = make_icosphere(0.3, subdivisions=1)
        save_mesh_ply(mesh, tmp_path / "m.ply")
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(
            "mesh = m.ply\nscale = building\n"
            "sensor_width = 1200\nsensor_height = 800\nfov_x_deg = 60\nfov_y_deg = 40\n"
            "noise_sigma = 0\nrho = 300\nr = 0.15\n"
        )
        config = ExperimentConfig.from_file(cfg)
        assert config.partial_params.psi == 20.0
        assert config.partial_params.upsilon == 0.15
        assert config.partial_params.eta == 0.05
        bad = tmp_path / "bad.txt"
        bad.write_text("mesh = m.ply\nscale = galactic\nsensor_width = 10\nsensor_height = 10\nfov_x_deg = 60\nfov_y_deg = 40\nnoise_sigma = 0\n")
        with pytest.raises(ConfigError, match="scale"):
            ExperimentConfig.from_file(bad)

    def test_crop_box_applied_to_exported_cloud(self, tmp_path):
        cfg_path = write_config(tmp_path, seeds=1, extra="crop_box = -1 -1 0 1 1 1\n")
        cfg = ExperimentConfig.from_file(cfg_path)
        out = tmp_path / "results"
        run_experiment(cfg, out)
        cloud = load_cloud_ply(out / "trial_000.ply")
        assert len(cloud) > 0
        assert cloud.points[:, 2].min() >= 0.0  # lower hemisphere cropped away


class TestCli:
    def test_run_and_plot_and_coverage(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, seeds=1)
        out = tmp_path / "results"
        assert cli_main(["run", str(cfg_path), "--out", str(out)]) == 0
        shown = capsys.readouterr().out
        assert "mean coverage" in shown

        assert (
            cli_main(
                [
                    "coverage",
                    "--mesh",
                    str(tmp_path / "sphere.ply"),
                    "--cloud",
                    str(out / "trial_000.ply"),
                    "--eta",
                    "0.02",
                ]
            )
            == 0
        )
        cov_line = capsys.readouterr().out
        assert float(cov_line.split("=")[1]) > 0.9

        plot_dir = tmp_path / "plots"
        assert cli_main(["plot", str(out / "views.csv"), "--out", str(plot_dir)]) == 0
        assert (plot_dir / "coverage_vs_distance.png").exists()

    def test_bad_config_returns_nonzero(self, tmp_path, capsys):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("nonsense\n")
        assert cli_main(["run", str(cfg), "--out", str(tmp_path / "x")]) == 1
        assert "error" in capsys.readouterr().err

    def test_seed_range_parsing(self, tmp_path):
        cfg_path = write_config(tmp_path, seeds=1)
        out = tmp_path / "results"
        assert cli_main(["run", str(cfg_path), "--out", str(out), "--seeds", "3:5"]) == 0
        assert (out / "trial_003.ply").exists() and (out / "trial_004.ply").exists()
