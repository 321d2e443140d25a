"""Simulated tendon-driven robot: motor counts in, noisy tip pose out.

Signal path per control tick::

    counts -> lead-screw displacement -> tendon-sheath hysteresis/drift
           -> antagonistic tendon map -> constant-curvature kinematics
           -> sensor registration + Gaussian tracker noise

Actuator channels: 0/1 drive the proximal tendon pairs, 2/3 the distal pairs
(whose guide holes are rotated by 45 degrees), 4 is base rotation and 5 base
translation. Only the four tendon channels pass through the sheath model.
"""
from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import (
    THETA_MAX,
    ConfigSpace,
    HomogeneousTransform,
    Pose,
    SegmentGeometry,
    forward_transform,
    jacobian,
    matrix_to_euler,
    wrap_radians,
)

N_TENDONS = 4
CHARACTERIZATION_AMPLITUDE = 13.4  # mm, full slider stroke used for cyclic loading
N_CHANNELS = 6
DISTAL_OFFSET = math.pi / 4

# world axes (X, Y, Z) = base axes (y, z, x): the robot axis is the tracker's +Y
SENSOR_FROM_BASE = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class SensorSpec:
    position_rmse: float = 0.48
    orientation_rmse: float = 0.3
    rate: float = 5.0
    enabled: bool = True

    @property
    def dt(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class HysteresisParams:
    """Bouc-Wen lag plus saturating drift for one tendon channel.

    Calibrated against the cyclic-loading statistics by
    :func:`calibrate_hysteresis` (``tdcrbench calibrate``).
    """

    enabled: bool = True
    lag: float = 0.0706           # mm, loop half-width at zero load
    yield_disp: float = 0.243     # mm of travel to saturate the Bouc-Wen state
    beta: float = 0.5
    gamma: float = 0.5
    exponent: float = 1.0
    lag_load_coeff: float = 0.0071  # 1/g
    compliance: float = 0.00348     # 1/g, stroke gain = 1 / (1 + compliance * load)
    drift_rate: float = 0.0648      # mm of drift per mm of travel, initial
    drift_fraction: float = 0.105   # saturation level as a fraction of peak displacement
    drift_load_coeff: float = 0.00072  # 1/g

    def scaled(self, load_g: float):
        """Load-scaled (lag, gain, drift_rate, drift_fraction)."""
        lag = self.lag * (1.0 + self.lag_load_coeff * load_g)
        gain = 1.0 / (1.0 + self.compliance * load_g)
        s = 1.0 + self.drift_load_coeff * load_g
        return lag, gain, self.drift_rate * s, self.drift_fraction * s


@dataclass
class HysteresisState:
    z: np.ndarray = field(default_factory=lambda: np.zeros(N_TENDONS))
    commanded: np.ndarray = field(default_factory=lambda: np.zeros(N_TENDONS))
    drift: np.ndarray = field(default_factory=lambda: np.zeros(N_TENDONS))
    peak: np.ndarray = field(default_factory=lambda: np.zeros(N_TENDONS))
    load_g: float = 0.0

    def copy(self) -> "HysteresisState":
        return HysteresisState(self.z.copy(), self.commanded.copy(), self.drift.copy(),
                               self.peak.copy(), self.load_g)


@dataclass(frozen=True)
class PlantConfig:
    geometry: SegmentGeometry = SegmentGeometry()
    hysteresis: HysteresisParams = HysteresisParams()
    sensor: SensorSpec = SensorSpec()
    tendon_gain: float = 1e-3       # mm per count
    rotation_gain: float = 1e-4     # rad per count
    translation_gain: float = 1e-3  # mm per count
    count_limit: float = 50_000.0
    disk_radius: float = 2.5        # mm
    theta_max: float = THETA_MAX
    load_g: float = 0.0
    substeps: int = 8
    pretension_cycles: int = 2

    def with_ideal_actuation(self) -> "PlantConfig":
        """Same robot with the sheath model and tracker noise switched off."""
        return replace(self, hysteresis=replace(self.hysteresis, enabled=False),
                       sensor=replace(self.sensor, enabled=False))

    def channel_gains(self) -> np.ndarray:
        return np.array([self.tendon_gain] * N_TENDONS + [self.rotation_gain, self.translation_gain])


# -- actuator and tendon maps ---------------------------------------------------


def counts_to_tendon_displacement(counts, gain: float = 1e-3, count_limit: float = 50_000.0):
    """Lead-screw map for the tendon channels.

    Returns ``(displacement_mm[4], saturated)``; out-of-limit counts are
    clipped before conversion.
    """
    counts = np.asarray(counts, dtype=float)
    tendon = counts[:N_TENDONS]
    saturated = bool(np.any(np.abs(tendon) > count_limit))
    return gain * np.clip(tendon, -count_limit, count_limit), saturated


def tendon_to_config(effective, g: SegmentGeometry | None = None, disk_radius: float = 2.5,
                     theta_max: float = THETA_MAX, base_rotation: float = 0.0,
                     base_translation: float = 0.0):
    """Antagonistic pair displacements (mm) to bending parameters.

    Each segment's two pair displacements are ``r * theta * (cos, sin)`` of
    ``delta - offset``. Returns ``(ConfigSpace, clamped)``.
    """
    d = np.asarray(effective, dtype=float)
    clamped = False
    out = []
    for (a, b), offset in ((d[0:2], 0.0), (d[2:4], DISTAL_OFFSET)):
        theta = math.hypot(a, b) / disk_radius
        delta = float(wrap_radians(math.atan2(b, a) + offset)) if theta > 0 else 0.0
        if theta > theta_max:
            theta, clamped = theta_max, True
        out += [theta, delta]
    return ConfigSpace(out[0], out[1], out[2], out[3], base_rotation, base_translation), clamped


def config_to_tendon(q: ConfigSpace, disk_radius: float = 2.5) -> np.ndarray:
    """Exact inverse of :func:`tendon_to_config` (below the clamp)."""
    r = disk_radius
    return np.array([
        r * q.theta1 * math.cos(q.delta1),
        r * q.theta1 * math.sin(q.delta1),
        r * q.theta2 * math.cos(q.delta2 - DISTAL_OFFSET),
        r * q.theta2 * math.sin(q.delta2 - DISTAL_OFFSET),
    ])


def counts_to_config(counts, cfg: PlantConfig):
    """Ideal (sheath-free) map from commanded counts to configuration."""
    counts = np.clip(np.asarray(counts, dtype=float), -cfg.count_limit, cfg.count_limit)
    q, clamped = tendon_to_config(cfg.tendon_gain * counts[:N_TENDONS], cfg.geometry, cfg.disk_radius,
                                  cfg.theta_max, cfg.rotation_gain * counts[4],
                                  cfg.translation_gain * counts[5])
    return q, clamped


def config_to_counts(q: ConfigSpace, cfg: PlantConfig) -> np.ndarray:
    """Inverse of :func:`counts_to_config`. Negative bending angles are accepted."""
    tendon = config_to_tendon(q, cfg.disk_radius) / cfg.tendon_gain
    return np.concatenate([tendon, [q.base_rotation / cfg.rotation_gain,
                                    q.base_translation / cfg.translation_gain]])


def counts_per_config(q: ConfigSpace, cfg: PlantConfig) -> np.ndarray:
    """Jacobian d(counts)/d(config) of the ideal map, 6x6."""
    r, k = cfg.disk_radius, cfg.tendon_gain
    G = np.zeros((6, 6))
    for seg, (theta, delta, offset) in enumerate(((q.theta1, q.delta1, 0.0),
                                                   (q.theta2, q.delta2, DISTAL_OFFSET))):
        c, s = math.cos(delta - offset), math.sin(delta - offset)
        i = 2 * seg
        G[i:i + 2, i] = [r * c / k, r * s / k]
        G[i:i + 2, i + 1] = [-r * theta * s / k, r * theta * c / k]
    G[4, 4] = 1.0 / cfg.rotation_gain
    G[5, 5] = 1.0 / cfg.translation_gain
    return G


# Bending vectors (theta cos delta, theta sin delta) chart the segment
# configuration smoothly through the straight pose, where delta is undefined.


def config_to_bending(q: ConfigSpace) -> np.ndarray:
    return np.array([q.theta1 * math.cos(q.delta1), q.theta1 * math.sin(q.delta1),
                     q.theta2 * math.cos(q.delta2), q.theta2 * math.sin(q.delta2),
                     q.base_rotation, q.base_translation])


def bending_to_config(v) -> ConfigSpace:
    v = np.asarray(v, dtype=float)
    t1, t2 = math.hypot(v[0], v[1]), math.hypot(v[2], v[3])
    d1 = math.atan2(v[1], v[0]) if t1 > 0 else 0.0
    d2 = math.atan2(v[3], v[2]) if t2 > 0 else 0.0
    return ConfigSpace(t1, d1, t2, d2, float(v[4]), float(v[5]))


def counts_per_bending(cfg: PlantConfig) -> np.ndarray:
    """Constant 6x6 map from bending-vector coordinates to counts."""
    C = np.zeros((6, 6))
    for i, offset in ((0, 0.0), (2, DISTAL_OFFSET)):
        c, s = math.cos(offset), math.sin(offset)
        C[i:i + 2, i:i + 2] = cfg.disk_radius / cfg.tendon_gain * np.array([[c, s], [-s, c]])
    C[4, 4] = 1.0 / cfg.rotation_gain
    C[5, 5] = 1.0 / cfg.translation_gain
    return C


def sensor_bending_jacobian(q: ConfigSpace, g: SegmentGeometry, theta_floor: float = 1e-7) -> np.ndarray:
    """Tracker-frame Jacobian with respect to bending-vector coordinates."""
    qe = ConfigSpace(max(q.theta1, theta_floor), q.delta1, max(q.theta2, theta_floor), q.delta2,
                     q.base_rotation, q.base_translation)
    J = sensor_jacobian(qe, g)
    out = J.copy()
    for i, (theta, delta) in ((0, (qe.theta1, qe.delta1)), (2, (qe.theta2, qe.delta2))):
        c, s = math.cos(delta), math.sin(delta)
        Jt, Jd = J[:, i], J[:, i + 1] / theta
        out[:, i] = c * Jt - s * Jd
        out[:, i + 1] = s * Jt + c * Jd
    return out


# -- sensor registration ---------------------------------------------------------


def sensor_origin(g: SegmentGeometry) -> np.ndarray:
    return np.array([0.0, 0.0, g.straight_length])


def to_sensor_frame(T: HomogeneousTransform, g: SegmentGeometry) -> Pose:
    """Tracker frame: +Y along the robot axis, origin at the straight tool tip.

    Orientation is the tool rotation relative to the straight tool, expressed
    in tracker axes, so the zero pose reads (0, 0, 0) degrees.
    """
    P = SENSOR_FROM_BASE
    position = P @ (T.translation - sensor_origin(g))
    return Pose(position, matrix_to_euler(P @ T.rotation @ P.T))


def sensor_pose(q: ConfigSpace, g: SegmentGeometry) -> Pose:
    return to_sensor_frame(forward_transform(q, g), g)


def sensor_pose_and_rotation(q: ConfigSpace, g: SegmentGeometry):
    T = forward_transform(q, g)
    P = SENSOR_FROM_BASE
    return P @ (T.translation - sensor_origin(g)), P @ T.rotation @ P.T


def sensor_jacobian(q: ConfigSpace, g: SegmentGeometry) -> np.ndarray:
    """Geometric Jacobian expressed in tracker axes."""
    J = jacobian(q, g)
    P = SENSOR_FROM_BASE
    out = np.empty_like(J)
    out[:3] = P @ J[:3]
    out[3:] = P @ J[3:]
    return out


# -- tendon-sheath model ---------------------------------------------------------


def hysteresis_step(state: HysteresisState, commanded, params: HysteresisParams, dt: float = 0.2,
                    substeps: int = 8):
    """Advance the sheath model along a linear command ramp.

    The model is rate-independent, so ``dt`` only enters the precondition;
    ``substeps`` controls the integration resolution of the ramp. Returns
    ``(new_state, effective_mm)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    commanded = np.asarray(commanded, dtype=float)
    new = state.copy()
    if not params.enabled:
        new.commanded = commanded.copy()
        return new, commanded.copy()

    lag, gain, rate, fraction = params.scaled(state.load_g)
    x = state.commanded.copy()
    dx = (commanded - x) / substeps
    adx = np.abs(dx)
    z, drift, peak = new.z, new.drift, new.peak
    n = params.exponent
    for _ in range(substeps):
        x = x + dx
        zn = np.abs(z) ** n
        z = z + dx / params.yield_disp * (1.0 - zn * (params.beta * np.sign(dx * z) + params.gamma))
        np.clip(z, -1.0, 1.0, out=z)
        np.maximum(peak, np.abs(x), out=peak)
        ceiling = fraction * peak
        room = np.where(ceiling > 0, 1.0 - drift / np.where(ceiling > 0, ceiling, 1.0), 0.0)
        drift = drift + rate * adx * np.maximum(room, 0.0)
    new.z, new.drift, new.peak = z, drift, peak
    new.commanded = commanded.copy()
    effective = gain * (commanded - lag * z) - drift
    return new, effective


def _cycle_statistics(x: np.ndarray, y: np.ndarray, samples_per_cycle: int, cycles: int, amplitude: float):
    drifts, areas, strokes = [], [], []
    prev_end = y[0]
    for k in range(cycles):
        sl = slice(k * samples_per_cycle, (k + 1) * samples_per_cycle + 1)
        xs, ys = x[sl], y[sl]
        stroke = float(ys.max() - ys.min())
        # shoelace on the loop, closed by the chord between its endpoints
        area = 0.5 * abs(float(np.sum(xs[:-1] * ys[1:] - xs[1:] * ys[:-1]) + xs[-1] * ys[0] - xs[0] * ys[-1]))
        drifts.append(abs(float(ys[-1] - prev_end)))
        strokes.append(stroke)
        areas.append(area / (stroke * amplitude) if stroke > 0 else 0.0)
        prev_end = ys[-1]
    return float(np.mean(drifts)), float(np.mean(areas)), float(np.mean(strokes))


def cyclic_response(params: HysteresisParams, load_g: float, cycles: int, amplitude: float = CHARACTERIZATION_AMPLITUDE,
                    samples_per_cycle: int = 200):
    """Drive one tendon channel 0 -> amplitude -> 0 ``cycles`` times."""
    phase = np.linspace(0.0, cycles, cycles * samples_per_cycle + 1)
    x = amplitude * 0.5 * (1.0 - np.cos(2 * math.pi * phase))
    state = HysteresisState(load_g=load_g)
    y = np.empty_like(x)
    y[0] = 0.0
    for i in range(1, len(x)):
        cmd = np.zeros(N_TENDONS)
        cmd[0] = x[i]
        state, eff = hysteresis_step(state, cmd, params, substeps=2)
        y[i] = eff[0]
    return x, y


def characterize_hysteresis(load_g: float, cycles: int = 3, params: HysteresisParams | None = None,
                            amplitude: float = CHARACTERIZATION_AMPLITUDE, samples_per_cycle: int = 200):
    """Cyclic-loading statistics: (mean_drift_mm, norm_area, mean_stroke_mm).

    drift is the per-cycle shift of the unloaded endpoint, the normalized
    area is loop area / (stroke * command amplitude) and the stroke is the
    peak-to-peak effective displacement; all are averaged over cycles.
    """
    if cycles < 3:
        raise ValueError("characterization needs at least 3 cycles")
    params = params if params is not None else HysteresisParams()
    x, y = cyclic_response(params, load_g, cycles, amplitude, samples_per_cycle)
    return _cycle_statistics(x, y, samples_per_cycle, cycles, amplitude)


# Cyclic-loading reference rows: load (g) -> (drift mm, normalized area, stroke mm).
REFERENCE_CYCLIC_STATS = {
    0.0: (0.41, 0.0119, 13.40),
    50.0: (0.46, 0.0134, 11.16),
    100.0: (0.47, 0.0152, 9.72),
}


def calibration_error(params: HysteresisParams, cycles: int = 3, amplitude: float = CHARACTERIZATION_AMPLITUDE) -> float:
    """Worst relative deviation over all nine reference statistics."""
    worst = 0.0
    for load, ref in REFERENCE_CYCLIC_STATS.items():
        got = characterize_hysteresis(load, cycles, params, amplitude, samples_per_cycle=100)
        worst = max(worst, max(abs(g - r) / r for g, r in zip(got, ref)))
    return worst


def calibrate_hysteresis(base: HysteresisParams | None = None, grid: dict | None = None,
                         cycles: int = 3, amplitude: float = CHARACTERIZATION_AMPLITUDE):
    """Coarse grid search over sheath parameters; returns (best_params, worst_rel_error)."""
    base = base or HysteresisParams()
    grid = grid or {
        "lag": [0.066, 0.0706, 0.075],
        "yield_disp": [0.2, 0.243, 0.3],
        "lag_load_coeff": [0.006, 0.0071, 0.008],
        "compliance": [0.0033, 0.00348, 0.0037],
        "drift_fraction": [0.095, 0.105, 0.115],
        "drift_load_coeff": [0.0004, 0.00072, 0.001],
    }
    keys = list(grid)
    best, best_err = base, calibration_error(base, cycles, amplitude)
    for values in itertools.product(*(grid[k] for k in keys)):
        cand = replace(base, **dict(zip(keys, values)))
        err = calibration_error(cand, cycles, amplitude)
        if err < best_err:
            best, best_err = cand, err
    return best, best_err


# -- plant -----------------------------------------------------------------------


@dataclass
class StepResult:
    true_pose: Pose
    measured_pose: Pose
    config: ConfigSpace
    saturated: bool = False
    clamped: bool = False


def plant_step(cmd, state: HysteresisState, cfg: PlantConfig, rng: np.random.Generator,
               offset=None):
    """One control tick. Returns ``(new_state, StepResult)``.

    ``offset`` is the encoder zero (counts) set by auto-zeroing.
    """
    counts = np.asarray(cmd, dtype=float)
    if offset is not None:
        counts = counts + offset
    saturated = bool(np.any(np.abs(counts) > cfg.count_limit))
    counts = np.clip(counts, -cfg.count_limit, cfg.count_limit)
    commanded, _ = counts_to_tendon_displacement(counts, cfg.tendon_gain, cfg.count_limit)
    state, effective = hysteresis_step(state, commanded, cfg.hysteresis, cfg.sensor.dt, cfg.substeps)
    q, clamped = tendon_to_config(effective, cfg.geometry, cfg.disk_radius, cfg.theta_max,
                                  cfg.rotation_gain * counts[4], cfg.translation_gain * counts[5])
    true_pose = sensor_pose(q, cfg.geometry)
    measured = true_pose
    if cfg.sensor.enabled:
        sp = cfg.sensor.position_rmse / math.sqrt(3.0)
        so = cfg.sensor.orientation_rmse / math.sqrt(3.0)
        noise = rng.standard_normal(6)
        measured = Pose(true_pose.position + sp * noise[:3], true_pose.orientation + so * noise[3:])
    return state, StepResult(true_pose, measured, q, saturated, clamped)


class Plant:
    """Stateful simulated robot; one instance per trial or collection run."""

    def __init__(self, config: PlantConfig | None = None, seed: int = 0):
        self.config = config or PlantConfig()
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.state = HysteresisState(load_g=self.config.load_g)
        self.offset = np.zeros(N_CHANNELS)
        self.last_counts = np.zeros(N_CHANNELS)

    def clone(self) -> "Plant":
        return copy.deepcopy(self)

    def step(self, cmd) -> StepResult:
        cmd = np.asarray(cmd, dtype=float)
        self.state, result = plant_step(cmd, self.state, self.config, self.rng, self.offset)
        self.last_counts = cmd.copy()
        return result

    def tendon_range_counts(self) -> float:
        return self.config.disk_radius * self.config.theta_max / self.config.tendon_gain / math.sqrt(2.0)

    def reset(self, pretension: bool = True, auto_zero: bool = True):
        """Fresh sheath state, optional pre-tensioning sweep and encoder zeroing.

        Pre-tensioning drives every tendon channel through its full range so
        that drift settles before use; auto-zeroing then chooses encoder
        offsets that return the zero command to the straight pose.
        """
        cfg = self.config
        self.state = HysteresisState(load_g=cfg.load_g)
        self.offset = np.zeros(N_CHANNELS)
        if pretension and cfg.hysteresis.enabled:
            full = self.tendon_range_counts() * cfg.tendon_gain
            ramp = np.concatenate([np.linspace(0, full, 20), np.linspace(full, -full, 40),
                                   np.linspace(-full, 0, 20)])
            for _ in range(cfg.pretension_cycles):
                for v in ramp:
                    self.state, _ = hysteresis_step(self.state, np.full(N_TENDONS, v), cfg.hysteresis,
                                                    cfg.sensor.dt, 2)
        if auto_zero and cfg.hysteresis.enabled:
            self.offset = self._zero_offsets()
        self.last_counts = np.zeros(N_CHANNELS)
        return self

    def _zero_offsets(self) -> np.ndarray:
        """Fixed-point search for counts whose effective displacement is zero."""
        cfg = self.config
        offset = np.zeros(N_CHANNELS)
        for _ in range(30):
            trial, eff = hysteresis_step(self.state, cfg.tendon_gain * offset[:N_TENDONS], cfg.hysteresis,
                                         cfg.sensor.dt, cfg.substeps)
            if np.max(np.abs(eff)) < 1e-9:
                break
            _, gain, _, _ = cfg.hysteresis.scaled(cfg.load_g)
            offset[:N_TENDONS] -= eff / (gain * cfg.tendon_gain)
        self.state = trial
        return offset
