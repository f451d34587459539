"""Benchmark harness: seeded observation trials against a mesh scene,
coverage/travel/time metrics, and CSV/PLY/plot outputs."""

from __future__ import annotations

import csv
import json
import logging
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cloud import ObservedCloud
from .geometry import Aabb, View, normalize
from .mesh import SceneMesh, load_mesh
from .params import (
    BUILDING_SCALE_DEFAULTS,
    DESK_SCALE_DEFAULTS,
    ConfigError,
    ObservationParams,
    SensorIntrinsics,
    derive_params,
    echo_params,
    parse_kv_file,
)

from .planner import ObservationResult, SafetyCaps, run
from .sensor import SimSensor

log = logging.getLogger(__name__)

SCALE_DEFAULTS = {"desk": DESK_SCALE_DEFAULTS, "building": BUILDING_SCALE_DEFAULTS}

METRIC_COLUMNS = [
    "trial",
    "view_index",
    "x",
    "y",
    "z",
    "coverage",
    "cum_distance_m",
    "nbv_time_s",
    "points_total",
    "frontiers",
]


def coverage(mesh: SceneMesh, cloud: ObservedCloud, eta: float) -> float:
    """Fraction of mesh vertices with a cloud point within eta (closed ball)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if len(cloud) == 0:
        return 0.0
    counts = cloud.tree.query_ball_point(mesh.vertices, eta, return_length=True)
    return float(np.count_nonzero(counts)) / len(mesh.vertices)


class CoverageTracker:
    """Incremental coverage over an append-only cloud.

    Marks a vertex covered as soon as any accepted point lands within eta;
    equivalent to recomputing coverage() from scratch each view.
    """

    def __init__(self, mesh: SceneMesh, eta: float):
        self.eta = eta
        self.n_vertices = len(mesh.vertices)
        self._tree = cKDTree(mesh.vertices)
        self._covered = np.zeros(self.n_vertices, dtype=bool)
        self._seen = 0

    def update(self, cloud: ObservedCloud) -> float:
        new = cloud.points[self._seen :]
        self._seen = len(cloud)
        if len(new):
            hits = self._tree.query_ball_point(new, self.eta)
            for lst in hits:
                self._covered[lst] = True
        return float(np.count_nonzero(self._covered)) / self.n_vertices


@dataclass
class ExperimentConfig:
    mesh_path: str
    sensor: SensorIntrinsics
    partial_params: ObservationParams
    scale_box: tuple[float, float, float] | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    max_views: int = 200
    max_adjustments: int = 10
    initial_view: View | None = None  # None selects the default on the bounding sphere
    crop_box: Aabb | None = None

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        kv = parse_kv_file(path)
        if "mesh" not in kv:
            raise ConfigError(f"{path}: missing required key 'mesh'")
        mesh_path = str((path.parent / kv["mesh"]).resolve())

        sensor = SensorIntrinsics(
            width=int(kv.get("sensor_width", 0) or 0),
            height=int(kv.get("sensor_height", 0) or 0),
            fov_x_deg=float(kv.get("fov_x_deg", 0) or 0),
            fov_y_deg=float(kv.get("fov_y_deg", 0) or 0),
            range_noise_sigma=float(kv.get("noise_sigma", 0.0)),
        )
        p_fields = {}
        for name, typ in (
            ("rho", float), ("r", float), ("d", float), ("epsilon", float),
            ("psi", float), ("upsilon", float), ("tau", int), ("eta", float),
        ):
            if name in kv:
                p_fields[name] = typ(kv[name])
        scale = kv.get("scale", "").strip().lower()
        if scale:
            if scale not in SCALE_DEFAULTS:
                raise ConfigError(f"{path}: unknown scale {scale!r} (use desk or building)")
            for name, value in SCALE_DEFAULTS[scale].items():
                p_fields.setdefault(name, value)
        partial = ObservationParams(**p_fields)

        scale_box = None
        if "scale_box" in kv:
            vals = [float(x) for x in kv["scale_box"].split()]
            if len(vals) != 3:
                raise ConfigError(f"{path}: scale_box needs 3 extents")
            scale_box = tuple(vals)

        n_seeds = int(kv.get("seeds", 1))
        seed_start = int(kv.get("seed_start", 0))
        seeds = list(range(seed_start, seed_start + n_seeds))

        initial_view = None
        if kv.get("initial_view", "auto").strip().lower() != "auto":
            vals = [float(x) for x in kv["initial_view"].split()]
            if len(vals) != 6:
                raise ConfigError(f"{path}: initial_view needs 6 numbers or 'auto'")
            initial_view = View(position=vals[:3], orientation=normalize(vals[3:]))

        crop_box = None
        if "crop_box" in kv:
            vals = [float(x) for x in kv["crop_box"].split()]
            if len(vals) != 6:
                raise ConfigError(f"{path}: crop_box needs 6 numbers (lo xyz, hi xyz)")
            crop_box = Aabb(lo=vals[:3], hi=vals[3:])

        return cls(
            mesh_path=mesh_path,
            sensor=sensor,
            partial_params=partial,
            scale_box=scale_box,
            seeds=seeds,
            max_views=int(kv.get("max_views", 200)),
            max_adjustments=int(kv.get("max_adjustments", 10)),
            initial_view=initial_view,
            crop_box=crop_box,
        )


def default_initial_view(mesh: SceneMesh, d: float) -> View:
    """On the scene bounding sphere plus a standoff, looking at the centroid."""
    direction = np.array([1.0, 0.0, 0.0])
    pos = mesh.center + (mesh.bounding_radius + d) * direction
    return View(position=pos, orientation=-direction)


def run_trial(
    mesh: SceneMesh,
    params: ObservationParams,
    sensor_intr: SensorIntrinsics,
    seed: int,
    initial_view: View | None = None,
    caps: SafetyCaps | None = None,
) -> ObservationResult:
    """One seeded observation run with per-view coverage attached."""
    sensor = SimSensor(sensor_intr, seed=seed)
    tracker = CoverageTracker(mesh, params.eta)
    v0 = initial_view or default_initial_view(mesh, params.d)
    return run(
        capture_fn=lambda view: sensor.capture(mesh, view),
        v0=v0,
        params=params,
        caps=caps or SafetyCaps(),
        on_view=lambda cloud: {"coverage": tracker.update(cloud)},
    )


def _write_metric_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_summary_csv(path, per_trial):
    cols = ["trial", "views", "coverage", "distance_m", "nbv_time_s", "complete"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for row in per_trial:
            w.writerow(row)
        if per_trial:
            arr = np.array([[r[1], r[2], r[3], r[4]] for r in per_trial], dtype=np.float64)
            w.writerow(["mean"] + [repr(float(x)) for x in arr.mean(axis=0)] + [""])
            w.writerow(["std"] + [repr(float(x)) for x in arr.std(axis=0, ddof=0)] + [""])


def make_plots(trials: dict[int, list[dict]], out_dir: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for xkey, xlabel, fname in (
        ("cum_distance_m", "travel distance (m)", "coverage_vs_distance.png"),
        ("cum_time_s", "planning time (s)", "coverage_vs_time.png"),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        for trial, recs in sorted(trials.items()):
            xs = [r[xkey] for r in recs]
            ys = [100.0 * r["coverage"] for r in recs]
            ax.plot(xs, ys, marker=".", lw=1, label=f"seed {trial}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("surface coverage (%)")
        ax.set_ylim(0, 102)
        ax.grid(alpha=0.3)
        if len(trials) <= 12:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out_dir / fname, dpi=120)
        plt.close(fig)


def run_experiment(config: ExperimentConfig, out_dir, seeds=None) -> dict:
    """Run all seeded trials, writing per-view metrics, summaries, final
    pointclouds, event logs and plots. Individual trial crashes are recorded
    and the run continues; it fails only if every trial failed."""
    mesh = load_mesh(config.mesh_path, scale_box=config.scale_box)
    params = derive_params(config.partial_params, config.sensor)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "params.txt", "w") as f:
        f.write(f"mesh = {config.mesh_path}\n")
        if config.scale_box:
            f.write("scale_box = %g %g %g\n" % config.scale_box)
        f.write(echo_params(params, config.sensor))
        f.write(f"max_views = {config.max_views}\n")
        f.write(f"max_adjustments = {config.max_adjustments}\n")

    seeds = list(seeds) if seeds is not None else config.seeds
    caps = SafetyCaps(max_views=config.max_views, max_adjustments_per_frontier=config.max_adjustments)

    metric_rows = []
    per_trial = []
    trials_for_plot: dict[int, list[dict]] = {}
    failures: dict[int, str] = {}
    for seed in seeds:
        try:
            result = run_trial(mesh, params, config.sensor, seed, config.initial_view, caps)
        except Exception as exc:  # record and continue with the remaining seeds
            log.error("trial %d failed: %s", seed, exc)
            failures[seed] = traceback.format_exc()
            continue

        cum_t = 0.0
        recs = []
        for r in result.records:
            cum_t += r["nbv_time_s"]
            recs.append({**r, "cum_time_s": cum_t})
            metric_rows.append(
                [
                    seed,
                    r["view_index"],
                    r["x"],
                    r["y"],
                    r["z"],
                    r["coverage"],
                    r["cum_distance_m"],
                    r["nbv_time_s"],
                    r["points_total"],
                    r["frontiers"],
                ]
            )
        trials_for_plot[seed] = recs
        last = result.records[-1]
        per_trial.append(
            [
                seed,
                result.n_views,
                repr(last["coverage"]),
                repr(last["cum_distance_m"]),
                repr(cum_t),
                int(result.complete),
            ]
        )
        cloud = result.cloud
        if config.crop_box is not None:
            cloud = cloud.crop_to_bounds(config.crop_box)
        cloud.save_ply(out_dir / f"trial_{seed:03d}.ply")
        with open(out_dir / f"trial_{seed:03d}_events.jsonl", "w") as f:
            for r in result.records:
                f.write(json.dumps(r) + "\n")

    if failures:
        with open(out_dir / "failures.txt", "w") as f:
            for seed, tb in failures.items():
                f.write(f"== trial {seed}\n{tb}\n")
    if not per_trial:
        raise RuntimeError(f"all {len(seeds)} trials failed; see {out_dir / 'failures.txt'}")

    _write_metric_csv(out_dir / "views.csv", metric_rows)
    _write_summary_csv(out_dir / "summary.csv", per_trial)
    make_plots(trials_for_plot, out_dir)
    return {
        "out_dir": str(out_dir),
        "n_trials": len(per_trial),
        "n_failed": len(failures),
        "mean_views": float(np.mean([r[1] for r in per_trial])),
        "mean_coverage": float(np.mean([float(r[2]) for r in per_trial])),
        "mean_distance": float(np.mean([float(r[3]) for r in per_trial])),
    }


def plots_from_csv(csv_path, out_dir):
    """Rebuild the coverage plots from a views.csv written by run_experiment."""
    trials: dict[int, list[dict]] = {}
    with open(csv_path) as f:
        reader = csv.DictReader(f)
        for row in reader:
            trial = int(row["trial"])
            recs = trials.setdefault(trial, [])
            cum_t = (recs[-1]["cum_time_s"] if recs else 0.0) + float(row["nbv_time_s"])
            recs.append(
                {
                    "coverage": float(row["coverage"]),
                    "cum_distance_m": float(row["cum_distance_m"]),
                    "cum_time_s": cum_t,
                }
            )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    make_plots(trials, out_dir)
