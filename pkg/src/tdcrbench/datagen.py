"""Monte Carlo data collection, contiguous splits, windowing and dataset files.

Excursions are smooth moves in command space between random knots. Each
move is rehearsed on a copy of the plant first and re-drawn if any measured
tip position leaves the workspace.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .digest import config_hash
from .kinematics import ConfigSpace, Pose, pose_error
from .plant import Plant, config_to_counts, counts_to_config, sensor_pose

FORMAT = "tdcrbench-dataset"
VERSION = 1
POSE_FIELDS = ("x", "y", "z", "ox", "oy", "oz")
CSV_HEADER = (["t"] + ["d" + f for f in POSE_FIELDS] + ["m" + f for f in POSE_FIELDS]
              + [f"u{i}" for i in range(1, 7)])
SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Workspace:
    """Cylindrical dome around the tracker +Y axis (mm)."""

    radius: float = 30.0
    y_min: float = -20.0
    height: float = 45.0

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    def contains(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(math.hypot(p[0], p[2]) <= self.radius - margin
                    and self.y_min + margin <= p[1] <= self.y_max - margin)

    def voxel_coverage(self, positions, size: float = 5.0) -> float:
        """Fraction of workspace voxels (centres inside) holding at least one position."""
        nr = int(math.ceil(self.radius / size))
        xs = (np.arange(-nr, nr) + 0.5) * size
        ys = self.y_min + (np.arange(int(math.ceil(self.height / size))) + 0.5) * size
        inside = {(i, j, k) for i, x in enumerate(xs) for k, z in enumerate(xs) for j, _ in enumerate(ys)
                  if math.hypot(x, z) <= self.radius}
        P = np.asarray(positions, dtype=float)
        ii = np.floor((P[:, 0] + nr * size) / size).astype(int)
        jj = np.floor((P[:, 1] - self.y_min) / size).astype(int)
        kk = np.floor((P[:, 2] + nr * size) / size).astype(int)
        hit = set(zip(ii.tolist(), jj.tolist(), kk.tolist())) & inside
        return len(hit) / len(inside)


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    desired_pose: Pose
    measured_pose: Pose
    command: np.ndarray


@dataclass
class Dataset:
    """Column arrays for ``n`` samples plus split sizes and provenance."""

    t: np.ndarray
    desired: np.ndarray    # (n, 6) pose vectors, mm and deg
    measured: np.ndarray   # (n, 6)
    commands: np.ndarray   # (n, 6) counts
    rate: float = 5.0
    seed: int = 0
    workspace: Workspace = Workspace()
    splits: tuple | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self):
        return [TrajectorySample(float(self.t[i]), Pose.from_vector(self.desired[i]),
                                 Pose.from_vector(self.measured[i]), self.commands[i].copy())
                for i in range(len(self))]

    def split_ranges(self) -> dict:
        if self.splits is None:
            raise DatasetError("dataset has not been split")
        out, start = {}, 0
        for name, size in zip(SPLITS, self.splits):
            out[name] = (start, start + size)
            start += size
        return out

    def equals(self, other: "Dataset") -> bool:
        return (self.splits == other.splits and self.seed == other.seed and self.rate == other.rate
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("t", "desired", "measured", "commands")))


# -- collection -------------------------------------------------------------------


def smoothstep(s):
    return s * s * (3.0 - 2.0 * s)


def _random_knot(plant: Plant, workspace: Workspace, rng: np.random.Generator, theta_max: float,
                 margin: float, tries: int = 200) -> np.ndarray:
    """Counts for a random configuration whose nominal tip lies inside the workspace."""
    cfg = plant.config
    for _ in range(tries):
        theta = theta_max * np.sqrt(rng.uniform(0.0, 1.0, 2))
        delta = rng.uniform(-math.pi, math.pi, 2)
        rot = rng.uniform(-0.5, 0.5)
        base = ConfigSpace(theta[0], delta[0], theta[1], delta[1], rot, 0.0)
        y0 = sensor_pose(base, cfg.geometry).position[1]
        y = rng.uniform(workspace.y_min + margin, workspace.y_max - margin)
        q = ConfigSpace(theta[0], delta[0], theta[1], delta[1], rot, y - y0)
        counts = config_to_counts(q, cfg)
        if np.max(np.abs(counts)) < cfg.count_limit and workspace.contains(sensor_pose(q, cfg.geometry).position, margin):
            return counts
    raise RuntimeError("could not draw a workspace knot")


def _nominal_pose(counts, plant: Plant) -> np.ndarray:
    q, _ = counts_to_config(counts, plant.config)
    return sensor_pose(q, plant.config.geometry).as_vector()


def monte_carlo_collect(duration: float = 408.0, rate: float = 5.0, plant: Plant | None = None,
                        rng_seed: int = 0, workspace: Workspace | None = None, knot_interval=(2.0, 10.0),
                        theta_knot: float = 1.2, margin: float = 2.0, max_rejections: int = 10_000) -> Dataset:
    """Record ``round(duration * rate)`` samples of random smooth command excursions.

    ``desired`` holds the nominal (sheath-free) pose of each command.
    """
    if not duration > 0 or not rate > 0:
        raise ValueError("duration and rate must be positive")
    workspace = workspace or Workspace()
    rng = np.random.default_rng(rng_seed)
    if plant is None:
        plant = Plant(seed=int(rng.integers(2 ** 31)))
        plant.reset()
    n = int(round(duration * rate))
    desired, measured, commands = [], [], []
    current = np.zeros(6)
    rejections = 0
    while len(commands) < n:
        target = _random_knot(plant, workspace, rng, theta_knot, margin)
        steps = max(int(round(rng.uniform(*knot_interval) * rate)), 1)
        trial = plant.clone()
        rows = []
        ok = True
        for k in range(1, steps + 1):
            cmd = current + (target - current) * smoothstep(k / steps)
            res = trial.step(cmd)
            if not workspace.contains(res.measured_pose.position) or res.saturated:
                ok = False
                break
            rows.append((_nominal_pose(cmd, plant), res.measured_pose.as_vector(), cmd))
            if len(commands) + len(rows) >= n:
                break
        if not ok:
            rejections += 1
            if rejections > max_rejections:
                raise RuntimeError("too many rejected excursions")
            continue
        plant = trial
        current = target
        for d, m, c in rows:
            desired.append(d)
            measured.append(m)
            commands.append(c)
    ds = Dataset(np.arange(n) / rate, np.array(desired), np.array(measured), np.array(commands),
                 rate=rate, seed=rng_seed, workspace=workspace)
    ds.metadata.update({"rejections": rejections, "plant_config_hash": config_hash(plant.config),
                        "duration": duration})
    return ds


# -- splitting and windows ------------------------------------------------------------


def split_sizes(n: int, ratios=(7, 2, 1)) -> tuple:
    r = np.asarray(ratios, dtype=float)
    if r.shape != (3,) or np.any(r < 0) or r.sum() <= 0:
        raise ValueError("need three non-negative ratios")
    r = r / r.sum()
    n_train = int(round(n * r[0]))
    n_val = int(round(n * r[1]))
    return n_train, n_val, n - n_train - n_val


def split(dataset: Dataset, ratios=(7, 2, 1), min_size: int = 1) -> Dataset:
    """Contiguous time-ordered split; returns the same dataset with sizes set."""
    sizes = split_sizes(len(dataset), ratios)
    if min(sizes) < min_size:
        raise ValueError(f"dataset of {len(dataset)} samples is too small for windows of {min_size}")
    dataset.splits = sizes
    return dataset


def window_indices(dataset: Dataset, T: int = 5) -> dict:
    """End index of every length-T window, per split."""
    return {name: np.arange(a + T - 1, b) for name, (a, b) in dataset.split_ranges().items()}


def build_windows(dataset: Dataset, T: int = 5, target: str = "absolute") -> dict:
    """Per split: inputs (n, T, 12) of [measured(i), command(i-1)] and targets (n, 6).

    ``command(i-1)`` before a split start is zero. ``target="increment"``
    regresses ``command(t) - command(t-1)`` instead of ``command(t)``.
    """
    if target not in ("absolute", "increment"):
        raise ValueError("target must be 'absolute' or 'increment'")
    out = {}
    for name, (a, b) in dataset.split_ranges().items():
        prev = np.zeros_like(dataset.commands[a:b])
        prev[1:] = dataset.commands[a:b - 1]
        steps = np.concatenate([dataset.measured[a:b], prev], axis=1)
        ends = np.arange(T - 1, b - a)
        X = np.stack([steps[e - T + 1:e + 1] for e in ends]) if len(ends) else np.zeros((0, T, 12))
        Y = dataset.commands[a:b][ends]
        if target == "increment":
            Y = Y - prev[ends]
        out[name] = (X, Y)
    return out


def build_error_windows(dataset: Dataset, N: int = 5, channels=range(6)) -> dict:
    """Per split: stacked errors (n, 6N) of pose(t) against pose(t-j), j = 1..N, and
    count increments command(t) - command(t-1) on ``channels``."""
    channels = list(channels)
    out = {}
    for name, (a, b) in dataset.split_ranges().items():
        ends = np.arange(a + N, b)
        X = np.array([np.concatenate([pose_error(Pose.from_vector(dataset.measured[e]),
                                                 Pose.from_vector(dataset.measured[e - j]))
                                      for j in range(1, N + 1)]) for e in ends]).reshape(len(ends), 6 * N)
        Y = (dataset.commands[ends] - dataset.commands[ends - 1])[:, channels]
        out[name] = (X, Y)
    return out


def normalization(X: np.ndarray, Y: np.ndarray):
    """Per-feature z-score statistics from training windows; flat features get unit std."""
    feats = X.reshape(-1, X.shape[-1])
    in_mean, in_std = feats.mean(axis=0), feats.std(axis=0)
    out_mean, out_std = Y.mean(axis=0), Y.std(axis=0)
    in_std[in_std < 1e-12] = 1.0
    out_std[out_std < 1e-12] = 1.0
    return in_mean, in_std, out_mean, out_std


# -- files ------------------------------------------------------------------------------


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _csv_bytes(ds: Dataset) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i in range(len(ds)):
        row = [ds.t[i], *ds.desired[i], *ds.measured[i], *ds.commands[i]]
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue().encode()


def save_dataset(ds: Dataset, path) -> Path:
    """Write ``<path>.csv`` and its JSON sidecar; returns the CSV path."""
    path = Path(path).with_suffix(".csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _csv_bytes(ds)
    path.write_bytes(data)
    sidecar = {
        "format": FORMAT,
        "version": VERSION,
        "n_samples": len(ds),
        "rate": ds.rate,
        "seed": ds.seed,
        "splits": list(ds.splits) if ds.splits is not None else None,
        "workspace": asdict(ds.workspace),
        "metadata": ds.metadata,
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=1, sort_keys=True))
    return path


def load_dataset(path) -> Dataset:
    path = Path(path).with_suffix(".csv")
    side = json.loads(_sidecar_path(path).read_text())
    if side.get("format") != FORMAT:
        raise DatasetError(f"{path}: not a dataset sidecar")
    if side.get("version") != VERSION:
        raise DatasetError(f"{path}: unsupported dataset version {side.get('version')}")
    data = path.read_bytes()
    if hashlib.sha256(data).hexdigest() != side["sha256"]:
        raise DatasetError(f"{path}: checksum mismatch")
    rows = list(csv.reader(io.StringIO(data.decode())))
    if rows[0] != CSV_HEADER:
        raise DatasetError(f"{path}: unexpected header")
    A = np.array(rows[1:], dtype=float).reshape(-1, len(CSV_HEADER))
    if len(A) != side["n_samples"]:
        raise DatasetError(f"{path}: sample count mismatch")
    return Dataset(A[:, 0].copy(), A[:, 1:7].copy(), A[:, 7:13].copy(), A[:, 13:19].copy(),
                   rate=side["rate"], seed=side["seed"], workspace=Workspace(**side["workspace"]),
                   splits=tuple(side["splits"]) if side["splits"] is not None else None,
                   metadata=side["metadata"])
