"""Rigid-body transforms, the pinhole camera, and their derivatives.

Conventions used across the package:

* A transform named ``a_from_b`` maps points expressed in frame ``b`` into
  frame ``a``:  ``p_a = a_from_b.apply(p_b)``.
* Twists are ordered translation-first: ``(rho, phi)``.
* Pose updates use the left perturbation ``T <- exp(delta) @ T``.
* Camera frames are z-forward, x-right, y-down.  Robot base frames are
  x-forward, y-left, z-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Below this depth a point is treated as behind the camera / degenerate.
Z_MIN = 0.05

# Angle under which rotation formulas switch to their series expansions.
# Set well above machine epsilon: the closed forms divide differences like
# (1 - cos t) by t^2 and lose all precision long before t reaches 1e-8.
_SMALL_ANGLE = 1e-2


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(theta, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    return r


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(v) @ w == cross(v, w)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rotation_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula for a rotation vector."""
    theta = float(np.linalg.norm(phi))
    w = hat(phi)
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * w + b * (w @ w)


def rotation_log(rot: np.ndarray) -> np.ndarray:
    """Rotation vector of an orthonormal matrix.

    Raises ValueError when the rotation angle is within 1e-6 of pi, where
    the axis is numerically ill defined.
    """
    cos_theta = max(-1.0, min(1.0, 0.5 * (float(np.trace(rot)) - 1.0)))
    sin_vec = 0.5 * _vee(rot - rot.T)
    sin_theta = float(np.linalg.norm(sin_vec))
    theta = math.atan2(sin_theta, cos_theta)
    if theta >= math.pi - 1e-6:
        raise ValueError("rotation angle too close to pi for a stable log")
    if theta < _SMALL_ANGLE:
        # theta/sin(theta) -> 1; first-order series keeps the round trip tight.
        return sin_vec * (1.0 + theta * theta / 6.0)
    return sin_vec * (theta / sin_theta)


@dataclass
class Twist:
    """se(3) element, translation part first."""

    rho: np.ndarray
    phi: np.ndarray

    def __post_init__(self) -> None:
        self.rho = np.asarray(self.rho, dtype=np.float64).reshape(3)
        self.phi = np.asarray(self.phi, dtype=np.float64).reshape(3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rho, self.phi])

    @classmethod
    def from_vector(cls, xi: np.ndarray) -> "Twist":
        xi = np.asarray(xi, dtype=np.float64).reshape(6)
        return cls(xi[:3], xi[3:])


@dataclass
class Pose3:
    """SE(3) transform stored as a 3x3 rotation plus a translation.

    The rotation is re-orthonormalized through a polar decomposition when
    accumulated drift exceeds 1e-9.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        drift = np.linalg.norm(self.rotation.T @ self.rotation - np.eye(3))
        if drift > 1e-9:
            u, _, vt = np.linalg.svd(self.rotation)
            fixed = u @ vt
            if np.linalg.det(fixed) < 0.0:
                u[:, -1] = -u[:, -1]
                fixed = u @ vt
            self.rotation = fixed
        if np.linalg.det(self.rotation) < 0.0:
            raise ValueError("rotation matrix has negative determinant")

    @classmethod
    def identity(cls) -> "Pose3":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose3":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3].copy(), m[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose3") -> "Pose3":
        """self @ other: apply ``other`` first, then ``self``."""
        return Pose3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose3":
        rt = self.rotation.T
        return Pose3(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or a stack of (N, 3) points."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            return self.rotation @ points + self.translation
        return points @ self.rotation.T + self.translation

    def is_close(self, other: "Pose3", tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=tol)
            and np.allclose(self.translation, other.translation, atol=tol)
        )


def exp_se3(twist: Twist) -> Pose3:
    """Exponential map from a twist to a transform."""
    phi = twist.phi
    theta = float(np.linalg.norm(phi))
    w = hat(phi)
    if theta < _SMALL_ANGLE:
        b = 0.5 - theta * theta / 24.0
        c = 1.0 / 6.0 - theta * theta / 120.0
    else:
        b = (1.0 - math.cos(theta)) / (theta * theta)
        c = (theta - math.sin(theta)) / (theta ** 3)
    v = np.eye(3) + b * w + c * (w @ w)
    return Pose3(rotation_exp(phi), v @ twist.rho)


def log_se3(pose: Pose3) -> Twist:
    """Logarithm map; inverse of exp_se3 away from angle pi."""
    phi = rotation_log(pose.rotation)
    theta = float(np.linalg.norm(phi))
    w = hat(phi)
    if theta < _SMALL_ANGLE:
        coef = 1.0 / 12.0 + theta * theta / 720.0
    else:
        coef = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / (
            theta * theta
        )
    v_inv = np.eye(3) - 0.5 * w + coef * (w @ w)
    return Twist(v_inv @ pose.translation, phi)


def apply_left_update(delta: Twist, pose: Pose3) -> Pose3:
    """One Gauss-Newton style update step, exp(delta) @ pose."""
    return exp_se3(delta).compose(pose)


@dataclass
class Pose2:
    """Planar pose; heading wrapped into (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        self.x = float(self.x)
        self.y = float(self.y)
        self.theta = wrap_angle(float(self.theta))

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.theta)

    def to_pose3(self) -> Pose3:
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return Pose3(rot, np.array([self.x, self.y, 0.0]))

    @classmethod
    def from_pose3(cls, pose: Pose3) -> "Pose2":
        return cls(
            pose.translation[0],
            pose.translation[1],
            math.atan2(pose.rotation[1, 0], pose.rotation[0, 0]),
        )

    def is_zero(self) -> bool:
        return self.x == 0.0 and self.y == 0.0 and self.theta == 0.0


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")


def project(intr: CameraIntrinsics, point: np.ndarray, z_min: float = Z_MIN) -> np.ndarray:
    """Pinhole projection of one camera-frame point, with perspective division."""
    z = float(point[2])
    if z <= z_min:
        raise ValueError(f"point depth {z:.4f} at or behind z_min={z_min}")
    return np.array(
        [
            intr.fx * float(point[0]) / z + intr.cx,
            intr.fy * float(point[1]) / z + intr.cy,
        ]
    )


def project_points(
    intr: CameraIntrinsics, points: np.ndarray, z_min: float = Z_MIN
) -> tuple[np.ndarray, np.ndarray]:
    """Batch projection.  Returns (pixels, valid); invalid rows are NaN."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    valid = z > z_min
    pixels = np.full((points.shape[0], 2), np.nan)
    zs = np.where(valid, z, 1.0)
    pixels[:, 0] = np.where(valid, intr.fx * points[:, 0] / zs + intr.cx, np.nan)
    pixels[:, 1] = np.where(valid, intr.fy * points[:, 1] / zs + intr.cy, np.nan)
    return pixels, valid


def projection_jacobian(intr: CameraIntrinsics, point: np.ndarray) -> np.ndarray:
    """2x3 derivative of the pixel with respect to the camera-frame point."""
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    return np.array(
        [
            [intr.fx / z, 0.0, -intr.fx * x / (z * z)],
            [0.0, intr.fy / z, -intr.fy * y / (z * z)],
        ]
    )


def point_pose_jacobian(point: np.ndarray) -> np.ndarray:
    """3x6 derivative of a transformed point with respect to a left perturbation.

    Columns follow the twist order (rho, phi): [I | -hat(p)].
    """
    out = np.zeros((3, 6))
    out[:, :3] = np.eye(3)
    out[:, 3:] = -hat(point)
    return out


def reprojection_jacobian(intr: CameraIntrinsics, point: np.ndarray) -> np.ndarray:
    """2x6 derivative of the projected pixel with respect to a left perturbation
    of the pose that produced the camera-frame point."""
    return projection_jacobian(intr, point) @ point_pose_jacobian(point)
