"""Reference trajectories, the closed-loop trial runner and the error tables.

Trajectories live in the tracker frame (mm, deg), sampled at 5 Hz. Errors
are ``desired - actual`` with Euler differences wrapped to (-180, 180].
Metrics are computed against the simulator's true tip pose by default; the
tracker-measured variant is reported alongside.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .kinematics import Pose, euler_to_matrix, matrix_to_euler, pose_error, rot_x, rot_y, rotation_log
from .plant import Plant, PlantConfig, counts_to_config, sensor_pose

RATE = 5.0
CONE_POINTS = {
    "P1": (-6.0, 8.0, 0.0),
    "P2": (0.0, 8.0, -6.0),
    "P3": (6.0, 8.0, 0.0),
    "P4": (0.0, 8.0, 6.0),
}
AXES = ("pos_x", "pos_y", "pos_z", "ori_x", "ori_y", "ori_z")


@dataclass
class ReferenceTrajectory:
    name: str
    t: np.ndarray
    poses: np.ndarray            # (n, 6)
    scored: np.ndarray           # (n,) bool, samples that enter the metrics
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def pose(self, k: int) -> Pose:
        return Pose.from_vector(self.poses[min(k, len(self) - 1)])

    def window(self, k: int, n: int):
        return [self.pose(k + i) for i in range(n)]


def _polyline(points, speed: float, rate: float = RATE):
    """Constant-speed samples along a polyline, excluding the start point."""
    out = []
    carry = 0.0
    step = speed / rate
    for a, b in zip(points[:-1], points[1:]):
        a, b = np.asarray(a, float), np.asarray(b, float)
        length = float(np.linalg.norm(b - a))
        s = step - carry
        while s <= length + 1e-9:
            out.append(a + (b - a) * (s / length))
            s += step
        carry = length - (s - step)
    if not out or np.linalg.norm(out[-1] - np.asarray(points[-1])) > 1e-9:
        out.append(np.asarray(points[-1], float))
    return np.array(out)


def _make(name, positions, orientations, scored=None, metadata=None, rate=RATE):
    n = len(positions)
    poses = np.concatenate([np.asarray(positions, float), np.asarray(orientations, float)], axis=1)
    scored = np.ones(n, dtype=bool) if scored is None else np.asarray(scored, dtype=bool)
    return ReferenceTrajectory(name, np.arange(n) / rate, poses, scored, metadata or {})


def rectangle_loops(inner=(20.0, 10.0), outer=(40.0, 30.0), growth: float = 5.0):
    """(width, height) of each lap, growing ``growth`` mm per side per lap."""
    w, h = inner
    loops = []
    while w <= outer[0] + 1e-9 and h <= outer[1] + 1e-9:
        loops.append((w, h))
        w, h = w + 2 * growth, h + 2 * growth
    return loops


def nested_rectangle(lift: float = 15.0, speed: float = 2.0, inner=(20.0, 10.0), outer=(40.0, 30.0),
                     growth: float = 5.0, dwell: int = 5) -> ReferenceTrajectory:
    """Lift along +Y, then concentric rectangles in the X-Z plane, inner lap first.

    Each lap starts and ends at the midpoint of its +X edge and runs
    counter-clockwise; consecutive laps are joined by a straight +X step of
    ``growth`` mm. Orientation stays at zero (tool axis along +Y).
    """
    y = lift
    pts = [(0.0, 0.0, 0.0), (0.0, y, 0.0)]
    loops = rectangle_loops(inner, outer, growth)
    for w, h in loops:
        a, b = w / 2, h / 2
        pts += [(a, y, 0.0), (a, y, b), (-a, y, b), (-a, y, -b), (a, y, -b), (a, y, 0.0)]
    pos = np.concatenate([np.zeros((dwell, 3)), _polyline(pts, speed)])
    meta = {"lift": lift, "speed": speed, "loops": [list(l) for l in loops],
            "perimeters": [2 * (w + h) for w, h in loops]}
    return _make("nested_rectangle", pos, np.zeros_like(pos), metadata=meta)


def lissajous(lift: float = 6.0, amplitude: float = 15.0, period: float = 40.0, lead_in: float = 5.0,
              dwell: int = 5) -> ReferenceTrajectory:
    """Vertical figure-eight loop in Z, then the same loop turned into X.

    The first loop is ``x = A/2 sin 2wt, z = A sin wt`` and the second swaps
    the roles, so both loops share the centre and the velocity is continuous
    where they meet.
    """
    w = 2 * math.pi / period
    n_lead = int(round(lead_in * RATE))
    s = np.arange(1, n_lead + 1) / n_lead
    lead = np.stack([np.zeros(n_lead), lift * (s * s * (3 - 2 * s)), np.zeros(n_lead)], axis=1)
    t = np.arange(1, int(round(period * RATE)) + 1) / RATE
    loop1 = np.stack([amplitude / 2 * np.sin(2 * w * t), np.full_like(t, lift), amplitude * np.sin(w * t)], axis=1)
    loop2 = np.stack([amplitude * np.sin(w * t), np.full_like(t, lift), amplitude / 2 * np.sin(2 * w * t)], axis=1)
    pos = np.concatenate([np.zeros((dwell, 3)), lead, loop1, loop2])
    meta = {"lift": lift, "amplitude": amplitude, "period": period, "loop_start": dwell + n_lead}
    return _make("lissajous", pos, np.zeros_like(pos), metadata=meta)


def cone_rotation(tilt_deg: float, azimuth_deg: float) -> np.ndarray:
    """Tool tilted ``tilt_deg`` off +Y, with the tilt plane turned ``azimuth_deg`` about Y."""
    Ry = rot_y(math.radians(azimuth_deg))
    return Ry @ rot_x(math.radians(tilt_deg)) @ Ry.T


def orientation_cone(point_id: str = "P1", tilt: float = 30.0, step: float = 30.0, dwell: int = 10,
                     transition: int = 5, approach: float = 5.0) -> ReferenceTrajectory:
    """Hold a fixed tip position and sweep the tool axis around a cone about +Y.

    After a smooth approach from the home pose and a tilt-in, the tilt
    direction advances by ``step`` degrees per waypoint. Each waypoint blends
    in over ``transition`` samples and is then held for ``dwell`` samples;
    only the held samples are scored.
    """
    if point_id not in CONE_POINTS:
        raise ValueError(f"unknown cone point {point_id!r}; expected one of {sorted(CONE_POINTS)}")
    P = np.array(CONE_POINTS[point_id])
    n_app = int(round(approach * RATE))
    s = np.arange(1, n_app + 1) / n_app
    s = s * s * (3 - 2 * s)
    positions = [P * si for si in s]
    orientations = [np.zeros(3)] * n_app
    scored = [False] * n_app
    waypoint = [-1] * n_app
    # tilt in at azimuth zero
    for k in range(1, transition + 1):
        tk = tilt * k / transition
        positions.append(P)
        orientations.append(matrix_to_euler(cone_rotation(tk, 0.0)))
        scored.append(False)
        waypoint.append(-1)
    n_way = int(round(360.0 / step))
    for j in range(n_way):
        a0, a1 = (j - 1) * step if j else 0.0, j * step
        if j:
            for k in range(1, transition + 1):
                u = 0.5 - 0.5 * math.cos(math.pi * k / transition)
                positions.append(P)
                orientations.append(matrix_to_euler(cone_rotation(tilt, a0 + (a1 - a0) * u)))
                scored.append(False)
                waypoint.append(-1)
        for _ in range(dwell):
            positions.append(P)
            orientations.append(matrix_to_euler(cone_rotation(tilt, a1)))
            scored.append(True)
            waypoint.append(j)
    meta = {"point": point_id, "position": P.tolist(), "tilt": tilt, "step": step, "dwell": dwell,
            "waypoint": waypoint}
    return _make(f"cone_{point_id}", np.array(positions), np.array(orientations), scored, meta)


def tool_axis(orientation_deg) -> np.ndarray:
    """Tracker-frame direction of the tool axis (+Y at the home pose)."""
    return euler_to_matrix(orientation_deg)[:, 1]


def task_a():
    return [nested_rectangle(), lissajous()]


def task_b():
    return [orientation_cone(p) for p in CONE_POINTS]


# -- trials ---------------------------------------------------------------------------


@dataclass
class RunLog:
    trajectory: str
    controller: str
    trial: int
    seed: int
    t: np.ndarray
    desired: np.ndarray
    measured: np.ndarray
    actual: np.ndarray
    commands: np.ndarray
    scored: np.ndarray
    start_error: tuple = (0.0, 0.0)
    degraded: bool = False
    flags: dict = field(default_factory=dict)
    latency_ms: float = 0.0

    def errors(self, source: str = "actual") -> np.ndarray:
        other = self.actual if source == "actual" else self.measured
        return pose_errors(self.desired, other)


def pose_errors(desired: np.ndarray, actual: np.ndarray) -> np.ndarray:
    e = np.asarray(desired, float) - np.asarray(actual, float)
    e[:, 3:] = (e[:, 3:] + 180.0) % 360.0 - 180.0
    e[:, 3:][e[:, 3:] == -180.0] = 180.0
    return e


def calibration_jitter(plant: Plant, rng: np.random.Generator, max_position: float = 0.5,
                       max_angle: float = 0.3) -> np.ndarray:
    """Random encoder-zero error whose nominal start pose stays within the bounds (mm, deg)."""
    cfg = plant.config
    home = sensor_pose(counts_to_config(np.zeros(6), cfg)[0], cfg.geometry)
    j = rng.standard_normal(6) * np.array([60.0, 60.0, 60.0, 60.0, 30.0, 300.0])
    target = rng.uniform(0.3, 1.0)
    for _ in range(60):
        q, _ = counts_to_config(j, cfg)
        p = sensor_pose(q, cfg.geometry)
        dp = float(np.linalg.norm(p.position - home.position))
        da = math.degrees(float(np.linalg.norm(rotation_log(p.rotation @ home.rotation.T))))
        if dp <= target * max_position and da <= target * max_angle:
            return j
        j = j * 0.8
    return np.zeros(6)


def trial_seeds(rng_seed: int, trials: int):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(rng_seed).spawn(trials)]


def run_trial(trajectory: ReferenceTrajectory, controller, plant_config: PlantConfig, seed: int,
              trial: int = 0, jitter: bool = True) -> RunLog:
    plant = Plant(plant_config, seed).reset()
    if jitter:
        plant.offset = plant.offset + calibration_jitter(plant, np.random.default_rng([seed, 1]))
    first = plant.step(np.zeros(6))
    start_err = pose_error(Pose(), first.true_pose)
    controller.reset(first.measured_pose)
    horizon = getattr(getattr(controller, "config", None), "horizon", 1)
    n = len(trajectory)
    measured = np.empty((n, 6))
    actual = np.empty((n, 6))
    commands = np.empty((n, 6))
    m = first.measured_pose
    degraded = False
    for k in range(n):
        cmd = controller.step(trajectory.window(k, horizon), m)
        res = plant.step(cmd)
        m = res.measured_pose
        degraded |= res.saturated
        measured[k] = m.as_vector()
        actual[k] = res.true_pose.as_vector()
        commands[k] = cmd
    if not np.all(np.isfinite(actual)):
        degraded = True
    return RunLog(trajectory.name, controller.name, trial, seed, trajectory.t.copy(), trajectory.poses.copy(),
                  measured, actual, commands, trajectory.scored.copy(),
                  (float(np.linalg.norm(start_err[:3])), float(np.max(np.abs(start_err[3:])))),
                  degraded, dict(controller.state.flags), controller.mean_latency_ms)


def run_trials(trajectory: ReferenceTrajectory, controller, plant_config: PlantConfig | None = None,
               trials: int = 5, rng_seed: int = 0, jitter: bool = True):
    """Closed-loop runs with independent plant noise per trial."""
    plant_config = plant_config or PlantConfig()
    return [run_trial(trajectory, controller, plant_config, s, i, jitter)
            for i, s in enumerate(trial_seeds(rng_seed, trials))]


# -- metrics --------------------------------------------------------------------------


@dataclass
class MetricsReport:
    controller: str
    trajectory: str
    mae: np.ndarray          # (6,) mm x3, deg x3
    std: np.ndarray          # (6,)
    rmse_pos: float
    rmse_ori: float
    trials: int
    samples: int
    latency_ms: float = float("nan")
    degraded: int = 0

    def row(self) -> dict:
        out = {"trajectory": self.trajectory, "controller": self.controller}
        for i, a in enumerate(AXES):
            out[f"{a}_mae"] = float(self.mae[i])
            out[f"{a}_std"] = float(self.std[i])
        out.update({"rmse_pos": self.rmse_pos, "rmse_ori": self.rmse_ori, "trials": self.trials,
                    "samples": self.samples, "degraded": self.degraded, "latency_ms": self.latency_ms})
        return out


def metrics_from_errors(errors: np.ndarray, controller: str = "", trajectory: str = "", trials: int = 1,
                        latency_ms: float = float("nan"), degraded: int = 0) -> MetricsReport:
    """Per-axis MAE and population STD, and RMSE pooled over three axes."""
    e = np.asarray(errors, dtype=float)
    if e.ndim != 2 or e.shape[1] != 6 or len(e) == 0:
        raise ValueError("errors must be a non-empty (n, 6) array")
    mae = np.mean(np.abs(e), axis=0)
    std = np.std(e, axis=0)
    rmse_pos = math.sqrt(float(np.mean(np.sum(e[:, :3] ** 2, axis=1) / 3.0)))
    rmse_ori = math.sqrt(float(np.mean(np.sum(e[:, 3:] ** 2, axis=1) / 3.0)))
    return MetricsReport(controller, trajectory, mae, std, rmse_pos, rmse_ori, trials, len(e), latency_ms, degraded)


def compute_metrics(runs, source: str = "actual") -> MetricsReport:
    runs = list(runs)
    if not runs:
        raise ValueError("no runs to score")
    errors = np.concatenate([r.errors(source)[r.scored] for r in runs])
    latency = float(np.mean([r.latency_ms for r in runs]))
    return metrics_from_errors(errors, runs[0].controller, runs[0].trajectory, len(runs), latency,
                               sum(r.degraded for r in runs))


# -- reports --------------------------------------------------------------------------

TABLE_FIELDS = (["trajectory", "controller"] + [f"{a}_{s}" for a in AXES for s in ("mae", "std")]
                + ["rmse_pos", "rmse_ori", "trials", "samples", "degraded", "latency_ms"])
ERROR_FIELDS = (["t", "scored"] + [f"e_{a}" for a in AXES] + [f"m_{a}" for a in AXES]
                + [f"u{i}" for i in range(1, 7)])


def schema() -> dict:
    return json.loads(resources.files("tdcrbench").joinpath("schema/benchmark.schema.json").read_text())


def write_table(reports, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return path


def read_table(path):
    rows = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out = {}
            for k, v in row.items():
                if k in ("trajectory", "controller"):
                    out[k] = v
                elif k in ("trials", "samples", "degraded"):
                    out[k] = int(v)
                else:
                    out[k] = float(v)
            rows.append(out)
    return rows


def write_error_log(run: RunLog, path, source: str = "actual") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    e = run.errors(source)
    me = run.errors("measured")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERROR_FIELDS)
        for k in range(len(run.t)):
            w.writerow([repr(float(run.t[k])), int(run.scored[k])] + [repr(float(v)) for v in e[k]]
                       + [repr(float(v)) for v in me[k]] + [repr(float(v)) for v in run.commands[k]])
    return path


def report(task_a_reports, task_b_reports, out_dir, runs=(), header: dict | None = None,
           latencies: dict | None = None) -> dict:
    """Write taskA.csv, taskB.csv, benchmark.json and one error CSV per run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    if task_a_reports:
        files["taskA"] = str(write_table(task_a_reports, out / "taskA.csv"))
    if task_b_reports:
        files["taskB"] = str(write_table(task_b_reports, out / "taskB.csv"))
    for run in runs:
        name = f"errors_{run.controller}_{run.trajectory}_{run.trial}.csv"
        write_error_log(run, out / name)
    doc = {
        "format": "tdcrbench-benchmark",
        "version": 1,
        **(header or {}),
        "definitions": {
            "error": "desired minus true tip pose; Euler differences wrapped to (-180, 180] deg",
            "std": "population standard deviation of signed errors pooled over samples and trials",
            "rmse": "sqrt(mean over samples of (e_x^2 + e_y^2 + e_z^2) / 3)",
        },
        "task_a": [r.row() for r in task_a_reports],
        "task_b": [r.row() for r in task_b_reports],
        "latency_ms": latencies or {},
        "nondeterministic_fields": ["latency_ms", "task_a[].latency_ms", "task_b[].latency_ms"],
    }
    (out / "benchmark.json").write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False,
                                                   default=_json_default))
    return doc


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def strip_latency(doc: dict) -> dict:
    """Copy of a benchmark document without the wall-clock fields."""
    doc = json.loads(json.dumps(doc))
    doc.pop("latency_ms", None)
    for key in ("task_a", "task_b"):
        for row in doc.get(key, []):
            row.pop("latency_ms", None)
    return doc
