"""Constant-curvature kinematics of the two-segment bending module.

Frames
------
The base frame has its z-axis along the undeflected robot axis. The chain is::

    T = Trans(z, base_translation) Rz(base_rotation)
        S(theta1, delta1, L1) Trans(z, L_mid) S(theta2, delta2, L2) Trans(z, d_t)

where ``S`` is a circular arc bent by ``theta`` in the plane at angle ``delta``
about the segment's base z-axis. The arc rotation is
``Rz(delta) Ry(theta) Rz(-delta)``, i.e. segments do not twist.

Orientations are reported as extrinsic X-Y-Z Euler angles in degrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

THETA_MAX = math.pi / 2
SERIES_EPS = 1e-6
JAC_SERIES_EPS = 1e-4

CONFIG_FIELDS = ("theta1", "delta1", "theta2", "delta2", "base_rotation", "base_translation")


@dataclass(frozen=True)
class SegmentGeometry:
    """Lengths in mm."""

    length_proximal: float = 18.0
    length_mid: float = 10.0
    length_distal: float = 18.0
    tool_length: float = 35.0

    def __post_init__(self):
        for name in ("length_proximal", "length_mid", "length_distal", "tool_length"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite length, got {value!r}")

    @property
    def straight_length(self) -> float:
        return self.length_proximal + self.length_mid + self.length_distal + self.tool_length


@dataclass(frozen=True)
class ConfigSpace:
    theta1: float = 0.0
    delta1: float = 0.0
    theta2: float = 0.0
    delta2: float = 0.0
    base_rotation: float = 0.0
    base_translation: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in CONFIG_FIELDS], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ConfigSpace":
        values = np.asarray(values, dtype=float)
        if values.shape != (6,):
            raise ValueError(f"expected 6 configuration values, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def is_valid(self, theta_max: float = THETA_MAX) -> bool:
        q = self.as_array()
        if not np.all(np.isfinite(q)):
            return False
        for theta, delta in ((self.theta1, self.delta1), (self.theta2, self.delta2)):
            if theta < 0 or theta > theta_max + 1e-12:
                return False
            if not (-math.pi < delta <= math.pi):
                return False
        return True


@dataclass(frozen=True)
class Pose:
    """Position in mm, orientation as extrinsic XYZ Euler angles in degrees."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "orientation", wrap_degrees(np.asarray(self.orientation, dtype=float).reshape(3)))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_vector(cls, v) -> "Pose":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.orientation)

    @classmethod
    def from_transform(cls, T: "HomogeneousTransform") -> "Pose":
        return cls(T.translation, matrix_to_euler(T.rotation))


@dataclass(frozen=True)
class HomogeneousTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __matmul__(self, other: "HomogeneousTransform") -> "HomogeneousTransform":
        return HomogeneousTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def is_orthonormal(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(np.linalg.norm(R.T @ R - np.eye(3)) < tol and abs(np.linalg.det(R) - 1.0) < tol)


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def wrap_degrees(angle):
    """Wrap angles to the half-open interval (-180, 180]."""
    return 180.0 - np.mod(180.0 - np.asarray(angle, dtype=float), 360.0)


def wrap_radians(angle):
    """Wrap angles to (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(angle, dtype=float), 2 * math.pi)


def euler_to_matrix(angles_deg) -> np.ndarray:
    """Extrinsic X-Y-Z: R = Rz(c) Ry(b) Rx(a)."""
    a, b, c = np.radians(np.asarray(angles_deg, dtype=float))
    return rot_z(c) @ rot_y(b) @ rot_x(a)


def matrix_to_euler(R: np.ndarray) -> np.ndarray:
    sb = -R[2, 0]
    b = math.asin(min(1.0, max(-1.0, sb)))
    if abs(sb) < 1.0 - 1e-12:
        a = math.atan2(R[2, 1], R[2, 2])
        c = math.atan2(R[1, 0], R[0, 0])
    else:
        # gimbal lock: fold the whole roll into the x angle
        a = math.atan2(-R[1, 2], R[1, 1])
        c = 0.0
    return wrap_degrees(np.degrees([a, b, c]))


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, rad) of a rotation matrix."""
    cos_angle = min(1.0, max(-1.0, (np.trace(R) - 1.0) / 2.0))
    angle = math.acos(cos_angle)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-8:
        return 0.5 * w
    if math.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from R + I
        M = (R + np.eye(3)) / 2.0
        axis = M[:, int(np.argmax(np.diag(M)))]
        axis = axis / np.linalg.norm(axis)
        return axis * angle
    return w * (angle / (2.0 * math.sin(angle)))


def _arc_terms(theta: float):
    """(1 - cos t)/t and sin t/t, with series near zero."""
    if abs(theta) < SERIES_EPS:
        t2 = theta * theta
        return theta / 2.0 - theta * t2 / 24.0, 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    return (1.0 - math.cos(theta)) / theta, math.sin(theta) / theta


def _arc_term_derivatives(theta: float):
    if abs(theta) < JAC_SERIES_EPS:
        t2 = theta * theta
        return 0.5 - t2 / 8.0 + t2 * t2 / 144.0, -theta / 3.0 + theta * t2 / 30.0
    s, c = math.sin(theta), math.cos(theta)
    return (theta * s - (1.0 - c)) / (theta * theta), (theta * c - s) / (theta * theta)


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite kinematic argument: {v!r}")


def segment_transform(theta: float, delta: float, length: float) -> HomogeneousTransform:
    """Base-to-end transform of one constant-curvature segment."""
    _check_finite(theta, delta, length)
    if length <= 0:
        raise ValueError(f"segment length must be positive, got {length}")
    if theta < 0:
        raise ValueError(f"bending angle must be non-negative, got {theta}")
    f, g = _arc_terms(theta)
    cd, sd = math.cos(delta), math.sin(delta)
    p = length * np.array([cd * f, sd * f, g])
    R = rot_z(delta) @ rot_y(theta) @ rot_z(-delta)
    return HomogeneousTransform(R, p)


def _translate_z(d: float) -> HomogeneousTransform:
    return HomogeneousTransform(np.eye(3), np.array([0.0, 0.0, d]))


def chain_transforms(q: ConfigSpace, g: SegmentGeometry) -> list[HomogeneousTransform]:
    """Cumulative frames: [rotated base, proximal end, distal base, distal end, tool]."""
    base = HomogeneousTransform(rot_z(q.base_rotation), np.array([0.0, 0.0, q.base_translation]))
    prox_end = base @ segment_transform(q.theta1, q.delta1, g.length_proximal)
    dist_base = prox_end @ _translate_z(g.length_mid)
    dist_end = dist_base @ segment_transform(q.theta2, q.delta2, g.length_distal)
    tool = dist_end @ _translate_z(g.tool_length)
    return [base, prox_end, dist_base, dist_end, tool]


def forward_transform(q: ConfigSpace, g: SegmentGeometry | None = None) -> HomogeneousTransform:
    g = g or SegmentGeometry()
    return chain_transforms(q, g)[-1]


def forward_kinematics(q: ConfigSpace, g: SegmentGeometry | None = None) -> Pose:
    """Tool-frame pose in the base frame."""
    return Pose.from_transform(forward_transform(q, g))


def _segment_local_derivatives(theta: float, delta: float, length: float):
    """Local (dp/dtheta, w_theta, dp/ddelta, w_delta) in the segment base frame."""
    f, _ = _arc_terms(theta)
    df, dg = _arc_term_derivatives(theta)
    cd, sd = math.cos(delta), math.sin(delta)
    dp_dtheta = length * np.array([cd * df, sd * df, dg])
    w_theta = np.array([-sd, cd, 0.0])
    dp_ddelta = length * f * np.array([-sd, cd, 0.0])
    R = rot_z(delta) @ rot_y(theta) @ rot_z(-delta)
    w_delta = np.array([0.0, 0.0, 1.0]) - R[:, 2]
    return dp_dtheta, w_theta, dp_ddelta, w_delta


def jacobian(q: ConfigSpace, g: SegmentGeometry | None = None) -> np.ndarray:
    """Geometric Jacobian of the tool frame, 6x6.

    Rows are linear velocity (mm/s) then angular velocity (rad/s), both in the
    base frame; columns follow ``CONFIG_FIELDS``.
    """
    g = g or SegmentGeometry()
    base, prox_end, dist_base, dist_end, tool = chain_transforms(q, g)
    p_tip = tool.translation
    J = np.zeros((6, 6))

    for col, (frame, end, theta, delta, length) in enumerate(
        ((base, prox_end, q.theta1, q.delta1, g.length_proximal),
         (dist_base, dist_end, q.theta2, q.delta2, g.length_distal))
    ):
        dp_t, w_t, dp_d, w_d = _segment_local_derivatives(theta, delta, length)
        R0 = frame.rotation
        lever = p_tip - end.translation
        for k, (dp, w) in enumerate(((dp_t, w_t), (dp_d, w_d))):
            w_world = R0 @ w
            J[:3, 2 * col + k] = R0 @ dp + np.cross(w_world, lever)
            J[3:, 2 * col + k] = w_world

    ez = np.array([0.0, 0.0, 1.0])
    J[:3, 4] = np.cross(ez, p_tip - base.translation)
    J[3:, 4] = ez
    J[:3, 5] = ez
    return J


def pose_error(desired: Pose, actual: Pose) -> np.ndarray:
    """Desired minus actual: position in mm, wrapped per-axis Euler difference in degrees."""
    dp = desired.position - actual.position
    do = wrap_degrees(desired.orientation - actual.orientation)
    return np.concatenate([dp, do])


def twist_error(desired: Pose, actual: Pose) -> np.ndarray:
    """Position error (mm) and rotation-vector error (rad), both in the common frame.

    Unlike :func:`pose_error` the angular part is consistent with the angular
    rows of :func:`jacobian`, which is what the model-based control laws
    need.
    """
    dp = desired.position - actual.position
    dw = rotation_log(desired.rotation @ actual.rotation.T)
    return np.concatenate([dp, dw])
