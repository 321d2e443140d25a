"""The five control laws behind one interface.

Every controller is stepped once per 5 Hz tick with the reference poses for
the current and upcoming ticks and the latest tracker measurement, and
returns the absolute motor-count command to apply. Poses are in the tracker
frame (see :mod:`tdcrbench.plant`).

Model-based controllers estimate the configuration by pushing their own
commanded counts through the ideal (sheath-free) tendon map, so they never
see hysteresis or drift.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .kinematics import ConfigSpace, Pose, matrix_to_euler, pose_error, twist_error
from .nn.model import ModelParams
from .plant import (PlantConfig, bending_to_config, counts_per_bending, sensor_bending_jacobian,
                    sensor_pose_and_rotation)

DEG = math.pi / 180.0


@dataclass(frozen=True)
class CommandLimits:
    rate: tuple = (500.0, 500.0, 500.0, 500.0, 2000.0, 2000.0)  # counts per tick per channel
    absolute: float = 50_000.0


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 5
    q_weights: tuple = (1.0, 1.0, 1.0, 0.1, 0.1, 0.1)  # mm^-2 and deg^-2
    p_weight: float = 1e-7                             # counts^-2
    iterations: int = 2

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if any(w < 0 for w in self.q_weights):
            raise ValueError("Q must be positive semi-definite")
        if self.p_weight < 0:
            raise ValueError("P must be non-negative")


@dataclass
class ControllerState:
    command: np.ndarray = field(default_factory=lambda: np.zeros(6))
    poses: deque = field(default_factory=deque)      # measured poses, oldest first
    commands: deque = field(default_factory=deque)   # executed commands, oldest first
    elapsed_ms: float = 0.0
    steps: int = 0
    flags: dict = field(default_factory=dict)


class Controller:
    """Base class: bookkeeping, limits and timing."""

    name = "base"
    window = 5

    def __init__(self, plant_config: PlantConfig | None = None, limits: CommandLimits | None = None):
        self.plant_config = plant_config or PlantConfig()
        self.limits = limits or CommandLimits()
        self.reset()

    def reset(self, initial_pose: Pose | None = None):
        self.state = ControllerState()
        pose = initial_pose if initial_pose is not None else Pose()
        for _ in range(self.window):
            self.state.poses.append(pose)
            self.state.commands.append(np.zeros(6))

    def step(self, references, measured: Pose) -> np.ndarray:
        """Command for this tick.

        ``references[0]`` is the pose to reach at this tick, later entries
        are upcoming references (used by MPC). ``measured`` is the most
        recent tracker reading.
        """
        t0 = time.perf_counter()
        st = self.state
        st.poses.append(measured)
        while len(st.poses) > self.window:
            st.poses.popleft()
        raw = self.compute(references, measured)
        cmd = self._limit(raw)
        st.command = cmd
        st.commands.append(cmd.copy())
        while len(st.commands) > self.window:
            st.commands.popleft()
        st.elapsed_ms += (time.perf_counter() - t0) * 1e3
        st.steps += 1
        return cmd.copy()

    def compute(self, references, measured: Pose) -> np.ndarray:
        raise NotImplementedError

    def _limit(self, cmd) -> np.ndarray:
        pc = self.plant_config
        cmd = np.array(cmd, dtype=float)
        # keep each segment's tendon pair inside the bending limit so commands never wind up
        radius = pc.disk_radius * pc.theta_max / pc.tendon_gain
        for i in (0, 2):
            norm = math.hypot(cmd[i], cmd[i + 1])
            if norm > radius:
                cmd[i:i + 2] *= radius / norm
        # scale the whole move so the busiest channel hits the rate limit; keeps its direction
        prev = self.state.command
        delta = cmd - prev
        peak = np.max(np.abs(delta) / np.asarray(self.limits.rate, dtype=float))
        if peak > 1.0:
            delta = delta / peak
        return np.clip(prev + delta, -self.limits.absolute, self.limits.absolute)

    @property
    def mean_latency_ms(self) -> float:
        return self.state.elapsed_ms / max(self.state.steps, 1)

    def _bending_estimate(self) -> np.ndarray:
        """Bending-vector configuration implied by the last command under the ideal map."""
        return np.linalg.solve(counts_per_bending(self.plant_config), self.state.command)


def saturation_basis(v, dv, theta_max: float, tol: float = 1e-6) -> np.ndarray:
    """Columns spanning the moves allowed at the bending limit.

    A segment sitting on its limit that the step would push further out
    keeps only its tangential direction; everything else is free.
    """
    cols = []
    for i in (0, 2):
        k = v[i:i + 2]
        norm = math.hypot(k[0], k[1])
        if norm >= theta_max * (1 - tol) and float(k @ dv[i:i + 2]) > 0:
            t = np.zeros(6)
            t[i], t[i + 1] = -k[1] / norm, k[0] / norm
            cols.append(t)
        else:
            for j in (i, i + 1):
                c = np.zeros(6)
                c[j] = 1.0
                cols.append(c)
    for j in (4, 5):
        c = np.zeros(6)
        c[j] = 1.0
        cols.append(c)
    return np.array(cols).T


def damped_pinv_step(J: np.ndarray, e: np.ndarray, damping: float):
    """Damped least-squares step ``J^T (J J^T + l^2 I)^-1 e``; returns (step, cond)."""
    if damping == 0.0:
        return np.linalg.pinv(J) @ e, float(np.linalg.cond(J))
    A = J @ J.T + damping ** 2 * np.eye(J.shape[0])
    return J.T @ np.linalg.solve(A, e), float(np.linalg.cond(A))


class JacobianController(Controller):
    """Resolved-rate inverse kinematics with damped least squares."""

    name = "jacobian"

    def __init__(self, plant_config=None, limits=None, damping: float = 0.01, max_condition: float = 1e8):
        self.damping = damping
        self.max_condition = max_condition
        super().__init__(plant_config, limits)

    def compute(self, references, measured):
        e = twist_error(references[0], measured)
        if not np.any(e):
            return self.state.command.copy()
        v = self._bending_estimate()
        J = sensor_bending_jacobian(bending_to_config(v), self.plant_config.geometry)
        B = np.eye(6)
        for _ in range(3):
            dz, cond = damped_pinv_step(J @ B, e, self.damping)
            if not np.isfinite(cond) or cond > self.max_condition or not np.all(np.isfinite(dz)):
                self.state.flags["singular"] = self.state.flags.get("singular", 0) + 1
                return self.state.command.copy()
            dv = B @ dz
            B_next = saturation_basis(v, dv, self.plant_config.theta_max)
            if B_next.shape == B.shape:
                break
            B = B_next
        return self.state.command + counts_per_bending(self.plant_config) @ dv


def jacobian_control(desired: Pose, measured: Pose, q_est: ConfigSpace, plant_config: PlantConfig | None = None,
                     damping: float = 0.01) -> np.ndarray:
    """Count increment of one resolved-rate step from an explicit configuration estimate."""
    cfg = plant_config or PlantConfig()
    J = sensor_bending_jacobian(q_est, cfg.geometry)
    dv, _ = damped_pinv_step(J, twist_error(desired, measured), damping)
    return counts_per_bending(cfg) @ dv


def mpc_solve(errors, J: np.ndarray, G: np.ndarray, cfg: MpcConfig, prior=None):
    """Stacked least squares for the horizon.

    ``errors[i]`` is the twist error (mm, rad) of reference ``i`` against
    the linearization pose; the prediction is ``e_i = errors[i] - J sum_{j<=i} dq_j``.
    ``prior`` is a configuration offset already committed for the first
    move, so its input penalty covers ``prior + dq_1``. Returns the N x 6
    configuration increments.
    """
    N = cfg.horizon
    n = J.shape[1]
    qw = np.asarray(cfg.q_weights, dtype=float).copy()
    qw[3:] *= (1.0 / DEG) ** 2  # deg^-2 weights applied to radian errors
    sq = np.sqrt(qw)
    sp = math.sqrt(cfg.p_weight)
    prior = np.zeros(n) if prior is None else np.asarray(prior, dtype=float)
    rows = []
    rhs = []
    for i in range(N):
        block = np.zeros((6, N * n))
        for j in range(i + 1):
            block[:, j * n:(j + 1) * n] = J
        rows.append(sq[:, None] * block)
        rhs.append(sq * errors[i])
    if sp > 0:
        PG = sp * G
        for i in range(N):
            block = np.zeros((G.shape[0], N * n))
            block[:, i * n:(i + 1) * n] = PG
            rows.append(block)
            rhs.append(-PG @ prior if i == 0 else np.zeros(G.shape[0]))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x.reshape(N, n)


class MpcController(Controller):
    """Receding-horizon least squares on the Jacobian-linearized prediction."""

    name = "mpc"

    def __init__(self, plant_config=None, limits=None, config: MpcConfig | None = None):
        self.config = config or MpcConfig()
        super().__init__(plant_config, limits)

    def compute(self, references, measured):
        cfg = self.config
        refs = list(references)
        if len(refs) < cfg.horizon:
            refs = refs + [refs[-1]] * (cfg.horizon - len(refs))
        g = self.plant_config.geometry
        C = counts_per_bending(self.plant_config)
        v0 = self._bending_estimate()
        base_pos, base_rot = sensor_pose_and_rotation(bending_to_config(v0), g)
        committed = np.zeros(6)
        lin_pose = measured
        for _ in range(max(cfg.iterations, 1)):
            q_lin = bending_to_config(v0 + committed)
            if np.any(committed):
                # shift the measurement by the model-predicted motion of the committed step
                p, R = sensor_pose_and_rotation(q_lin, g)
                lin_pose = Pose(measured.position + (p - base_pos),
                                matrix_to_euler((R @ base_rot.T) @ measured.rotation))
            errors = [twist_error(r, lin_pose) for r in refs[:cfg.horizon]]
            J = sensor_bending_jacobian(q_lin, g)
            dv = mpc_solve(errors, J, C, cfg, prior=committed)
            if not np.all(np.isfinite(dv)):
                self.state.flags["solver_failure"] = self.state.flags.get("solver_failure", 0) + 1
                return self.state.command.copy()
            committed = committed + dv[0]
        return self.state.command + C @ committed


def mpc_control(reference, measured: Pose, q_est: ConfigSpace, cfg: MpcConfig | None = None,
                plant_config: PlantConfig | None = None) -> np.ndarray:
    """Count increment of the first move of the horizon plan (single linearization)."""
    cfg = cfg or MpcConfig()
    pc = plant_config or PlantConfig()
    errors = [twist_error(r, measured) for r in list(reference)[:cfg.horizon]]
    J = sensor_bending_jacobian(q_est, pc.geometry)
    C = counts_per_bending(pc)
    return C @ mpc_solve(errors, J, C, cfg)[0]


# -- learned controllers ---------------------------------------------------------------


def error_window(target: Pose, history) -> np.ndarray:
    """Stacked pose errors of ``target`` against past poses, newest first (6N)."""
    return np.concatenate([pose_error(target, p) for p in reversed(list(history))])


class FnnController(Controller):
    """Static network mapping the last N tip errors to count increments."""

    name = "fnn"

    def __init__(self, model: ModelParams | None, plant_config=None, limits=None, window: int = 5,
                 channels=None):
        if model is not None and model.arch != "fnn":
            raise ValueError(f"FNN controller needs an fnn model, got {model.arch}")
        self.model = model
        self.window = window
        n_out = model.output_size if model is not None else 6
        self.channels = list(channels) if channels is not None else list(range(n_out))
        if len(self.channels) != n_out:
            raise ValueError("channel list does not match the model output size")
        super().__init__(plant_config, limits)

    def compute(self, references, measured):
        if self.model is None:
            raise RuntimeError("FNN controller has no trained model loaded")
        x = error_window(references[0], self.state.poses)
        inc = self.model.predict(x)
        cmd = self.state.command.copy()
        cmd[self.channels] += inc
        return cmd


class RecurrentController(Controller):
    """GRU or LSTM inverse model over the last T (pose, previous command) pairs.

    The newest window step carries the desired pose; older steps carry
    measured poses unless ``past_poses="desired"``.
    """

    name = "rnn"

    def __init__(self, model: ModelParams | None, plant_config=None, limits=None, past_poses: str = "measured"):
        if model is not None and model.arch not in ("gru", "lstm"):
            raise ValueError(f"recurrent controller needs a gru or lstm model, got {model.arch}")
        if past_poses not in ("measured", "desired"):
            raise ValueError("past_poses must be 'measured' or 'desired'")
        self.model = model
        self.past_poses = past_poses
        self.window = model.seq_len if model is not None else 5
        self.name = model.arch if model is not None else "rnn"
        super().__init__(plant_config, limits)

    def reset(self, initial_pose: Pose | None = None):
        super().reset(initial_pose)
        self._desired = deque([initial_pose if initial_pose is not None else Pose()] * self.window)

    def window_input(self, desired: Pose) -> np.ndarray:
        st = self.state
        poses = list(self._desired if self.past_poses == "desired" else st.poses)
        cmds = list(st.commands)
        T = self.window
        rows = []
        # step i pairs pose(i) with the command executed just before it
        for k in range(T):
            pose = desired if k == T - 1 else poses[k + 1]
            rows.append(np.concatenate([pose.as_vector(), cmds[k]]))
        return np.array(rows)

    def compute(self, references, measured):
        if self.model is None:
            raise RuntimeError("recurrent controller has no trained model loaded")
        desired = references[0]
        x = self.window_input(desired)
        out = self.model.predict(x)
        self._desired.append(desired)
        self._desired.popleft()
        if self.model.metadata.get("target", "absolute") == "increment":
            return self.state.command + out
        return out


def rnn_control(state: ControllerState, desired: Pose, model: ModelParams, past_poses: str = "measured"):
    """Functional form: command for ``desired`` given an existing controller state."""
    ctrl = RecurrentController(model, past_poses=past_poses)
    ctrl.state = state
    return ctrl.model.predict(ctrl.window_input(desired))


def measure_inference_latency(controller: Controller, trials: int = 200, seed: int = 0) -> float:
    """Mean wall-clock milliseconds of one control step on synthetic inputs."""
    if trials < 100:
        raise ValueError("use at least 100 trials")
    rng = np.random.default_rng(seed)
    controller.reset()
    horizon = getattr(getattr(controller, "config", None), "horizon", 1)
    total = 0.0
    for _ in range(trials):
        target = Pose(rng.normal(0, 2, 3), rng.normal(0, 2, 3))
        measured = Pose(rng.normal(0, 2, 3), rng.normal(0, 2, 3))
        t0 = time.perf_counter()
        controller.step([target] * horizon, measured)
        total += time.perf_counter() - t0
    controller.reset()
    return total / trials * 1e3
