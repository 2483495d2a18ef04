"""Deterministic simulated world: unicycle dynamics, landmarks, sensors.

Everything random flows through the generator handed in by the caller, so a
run is reproducible bit for bit from its seed.  Obstacles are planar (discs
and convex polygons) and both occlude landmarks and reflect laser beams.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, Pose2, Pose3, Z_MIN, wrap_angle

log = logging.getLogger("vtrnav.world")

DESCRIPTOR_BYTES = 32  # 256-bit binary descriptors

V_MAX = 1.0
W_MAX = 2.0
W_STRAIGHT = 1e-9  # below this the arc integrator degenerates to a line


@dataclass
class Landmark:
    position: np.ndarray  # (3,) world frame
    descriptor: np.ndarray  # (32,) uint8
    active_from: float = -math.inf
    active_until: float = math.inf


class Circle:
    """Disc obstacle; exists once the sim clock passes spawn_time."""

    def __init__(self, center, radius: float, spawn_time: float = -math.inf):
        self.center = np.asarray(center, dtype=np.float64).reshape(2)
        self.radius = float(radius)
        self.spawn_time = float(spawn_time)

    def active(self, t: float) -> bool:
        return t >= self.spawn_time

    def contains(self, p: np.ndarray) -> bool:
        return float(np.sum((p - self.center) ** 2)) <= self.radius ** 2

    def blocks_segments(self, origin: np.ndarray, ends: np.ndarray) -> np.ndarray:
        """True where the segment origin->end crosses the disc interior."""
        d = ends - origin[None, :]
        f = origin[None, :] - self.center[None, :]
        dd = np.sum(d * d, axis=1)
        dd = np.where(dd < 1e-18, 1e-18, dd)
        t = np.clip(-np.sum(f * d, axis=1) / dd, 0.0, 1.0)
        closest = f + t[:, None] * d
        return np.sum(closest * closest, axis=1) < self.radius ** 2

    def ray_ranges(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """First positive hit distance per unit direction, inf when missed."""
        oc = origin[None, :] - self.center[None, :]
        b = np.sum(dirs * oc, axis=1)
        c = float(np.sum(oc[0] * oc[0])) - self.radius ** 2
        disc = b * b - c
        out = np.full(dirs.shape[0], np.inf)
        hit = disc >= 0.0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t_near = -b - root
        t_far = -b + root
        t = np.where(t_near > 1e-9, t_near, t_far)
        good = hit & (t > 1e-9)
        out[good] = t[good]
        return out


class ConvexPolygon:
    """Convex polygonal obstacle, vertices in counter-clockwise order."""

    def __init__(self, vertices, spawn_time: float = -math.inf):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
        if self.vertices.shape[0] < 3:
            raise ValueError("polygon needs at least 3 vertices")
        self.spawn_time = float(spawn_time)
        self._edges = np.roll(self.vertices, -1, axis=0) - self.vertices

    def active(self, t: float) -> bool:
        return t >= self.spawn_time

    def contains(self, p: np.ndarray) -> bool:
        rel = p[None, :] - self.vertices
        cross = self._edges[:, 0] * rel[:, 1] - self._edges[:, 1] * rel[:, 0]
        return bool(np.all(cross >= 0.0))

    def blocks_segments(self, origin: np.ndarray, ends: np.ndarray) -> np.ndarray:
        n = ends.shape[0]
        blocked = np.zeros(n, dtype=bool)
        if self.contains(origin):
            blocked[:] = True
            return blocked
        for i in range(self.vertices.shape[0]):
            a = self.vertices[i]
            e = self._edges[i]
            blocked |= _segments_cross(origin, ends, a, a + e)
        inside = (ends[:, None, :] - self.vertices[None, :, :])
        cross = self._edges[None, :, 0] * inside[:, :, 1] - self._edges[None, :, 1] * inside[:, :, 0]
        blocked |= np.all(cross >= 0.0, axis=1)
        return blocked

    def ray_ranges(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        out = np.full(dirs.shape[0], np.inf)
        for i in range(self.vertices.shape[0]):
            a = self.vertices[i]
            b = a + self._edges[i]
            out = np.minimum(out, _ray_segment(origin, dirs, a, b))
        return out


def _segments_cross(origin: np.ndarray, ends: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Proper crossing test for many segments origin->ends against one segment a->b."""
    d = ends - origin[None, :]
    e = b - a
    ao = a[None, :] - origin[None, :]
    denom = d[:, 0] * e[1] - d[:, 1] * e[0]
    safe = np.where(np.abs(denom) < 1e-15, 1.0, denom)
    t = (ao[:, 0] * e[1] - ao[:, 1] * e[0]) / safe
    s = (ao[:, 0] * d[:, 1] - ao[:, 1] * d[:, 0]) / safe
    ok = (np.abs(denom) >= 1e-15) & (t > 0.0) & (t < 1.0) & (s > 0.0) & (s < 1.0)
    return ok


def _ray_segment(origin: np.ndarray, dirs: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    e = b - a
    ao = a[None, :] - origin[None, :]
    denom = dirs[:, 0] * e[1] - dirs[:, 1] * e[0]
    safe = np.where(np.abs(denom) < 1e-15, 1.0, denom)
    t = (ao[:, 0] * e[1] - ao[:, 1] * e[0]) / safe
    s = (ao[:, 0] * dirs[:, 1] - ao[:, 1] * dirs[:, 0]) / safe
    ok = (np.abs(denom) >= 1e-15) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
    return np.where(ok, t, np.inf)


class WorldModel:
    """Static landmark field plus obstacles, stored column-wise for speed."""

    def __init__(self, landmarks, obstacles=(), bounds=None):
        landmarks = list(landmarks)
        n = len(landmarks)
        self.positions = np.zeros((n, 3))
        self.descriptors = np.zeros((n, DESCRIPTOR_BYTES), dtype=np.uint8)
        self.active_from = np.zeros(n)
        self.active_until = np.zeros(n)
        for i, lm in enumerate(landmarks):
            self.positions[i] = np.asarray(lm.position, dtype=np.float64)
            self.descriptors[i] = np.asarray(lm.descriptor, dtype=np.uint8)
            self.active_from[i] = lm.active_from
            self.active_until[i] = lm.active_until
        self.obstacles = list(obstacles)
        self.bounds = None if bounds is None else np.asarray(bounds, dtype=np.float64).reshape(4)

    def landmark_count(self) -> int:
        return self.positions.shape[0]

    def active_obstacles(self, t: float):
        return [ob for ob in self.obstacles if ob.active(t)]

    def bound_segments(self):
        if self.bounds is None:
            return []
        x0, y0, x1, y1 = self.bounds
        c = [np.array([x0, y0]), np.array([x1, y0]), np.array([x1, y1]), np.array([x0, y1])]
        return [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]


@dataclass
class RobotState:
    pose: Pose2 = field(default_factory=Pose2)
    time: float = 0.0


def step_dynamics(state: RobotState, v: float, w: float, dt: float) -> RobotState:
    """Exact unicycle arc integration over one step of dt seconds."""
    if not 0.0 < dt <= 0.5:
        raise ValueError(f"dt={dt} outside (0, 0.5]")
    if abs(v) > V_MAX or abs(w) > W_MAX:
        log.warning("command (v=%.3f, w=%.3f) clamped to limits", v, w)
        v = max(-V_MAX, min(V_MAX, v))
        w = max(-W_MAX, min(W_MAX, w))
    th = state.pose.theta
    if abs(w) < W_STRAIGHT:
        x = state.pose.x + v * math.cos(th) * dt
        y = state.pose.y + v * math.sin(th) * dt
        return RobotState(Pose2(x, y, th), state.time + dt)
    th1 = th + w * dt
    x = state.pose.x + (v / w) * (math.sin(th1) - math.sin(th))
    y = state.pose.y - (v / w) * (math.cos(th1) - math.cos(th))
    return RobotState(Pose2(x, y, wrap_angle(th1)), state.time + dt)


def _forward_camera_mount(height: float = 0.3) -> Pose3:
    # Optical axis along base +x: cam x = -base y, cam y = -base z, cam z = base x.
    rot = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    center = np.array([0.0, 0.0, height])
    return Pose3(rot, -rot @ center)


@dataclass
class CameraConfig:
    intrinsics: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(380.0, 380.0, 320.0, 240.0, 640, 480)
    )
    cam_from_base: Pose3 = field(default_factory=_forward_camera_mount)
    max_range: float = 8.0
    fov_deg: float = 90.0
    sigma_px: float = 0.5
    sigma_depth_frac: float = 0.01
    p_flip: float = 0.02


@dataclass
class LaserConfig:
    beam_count: int = 360
    span_deg: float = 270.0
    max_range: float = 10.0
    mount: Pose2 = field(default_factory=Pose2)

    def beam_angles(self) -> np.ndarray:
        half = math.radians(self.span_deg) / 2.0
        return np.linspace(-half, half, self.beam_count)


@dataclass
class SensorRig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    laser: LaserConfig = field(default_factory=LaserConfig)


@dataclass
class Frame:
    """One camera observation: aligned pixels, descriptors, camera-frame points."""

    frame_id: int
    timestamp: float
    pixels: np.ndarray  # (N, 2) float32
    descriptors: np.ndarray  # (N, 32) uint8
    points_cam: np.ndarray  # (N, 3) float64
    odom_delta: Pose3 = field(default_factory=Pose3)

    def count(self) -> int:
        return self.pixels.shape[0]


def sense_camera(
    world: WorldModel,
    state: RobotState,
    rig: SensorRig,
    rng: np.random.Generator,
    frame_id: int = 0,
    odom_delta: Pose3 | None = None,
) -> Frame:
    """Observe every visible landmark: active, in the frustum, unoccluded.

    Noise model: Gaussian pixel jitter, radial (depth) scaling of the
    camera-frame point, and independent descriptor bit flips.
    """
    cam = rig.camera
    intr = cam.intrinsics
    t = state.time
    active = (world.active_from <= t) & (t <= world.active_until)

    cam_from_world = cam.cam_from_base.compose(state.pose.to_pose3().inverse())
    p_cam = cam_from_world.apply(world.positions)

    z = p_cam[:, 2]
    visible = active & (z > Z_MIN)
    half_fov = math.radians(cam.fov_deg) / 2.0
    visible &= np.abs(np.arctan2(p_cam[:, 0], z)) <= half_fov
    visible &= np.linalg.norm(p_cam, axis=1) <= cam.max_range

    if np.any(visible):
        robot_xy = np.array([state.pose.x, state.pose.y])
        ends = world.positions[:, :2]
        for ob in world.active_obstacles(t):
            blocked = ob.blocks_segments(robot_xy, ends)
            visible &= ~blocked

    idx = np.flatnonzero(visible)
    pts = p_cam[idx]
    zs = pts[:, 2]
    u = intr.fx * pts[:, 0] / zs + intr.cx
    v = intr.fy * pts[:, 1] / zs + intr.cy
    pix = np.stack([u, v], axis=1)
    pix = pix + rng.normal(0.0, 1.0, size=pix.shape) * cam.sigma_px
    in_img = (
        (pix[:, 0] >= 0.0)
        & (pix[:, 0] < intr.width)
        & (pix[:, 1] >= 0.0)
        & (pix[:, 1] < intr.height)
    )

    pts = pts[in_img]
    pix = pix[in_img]
    idx = idx[in_img]

    radial = 1.0 + rng.normal(0.0, 1.0, size=pts.shape[0]) * cam.sigma_depth_frac
    pts = pts * radial[:, None]

    desc = world.descriptors[idx].copy()
    if desc.shape[0] > 0:
        flips = rng.random((desc.shape[0], DESCRIPTOR_BYTES * 8)) < cam.p_flip
        desc ^= np.packbits(flips, axis=1)

    return Frame(
        frame_id=frame_id,
        timestamp=t,
        pixels=pix.astype(np.float32),
        descriptors=desc,
        points_cam=pts,
        odom_delta=Pose3() if odom_delta is None else odom_delta,
    )


def sense_laser(world: WorldModel, state: RobotState, rig: SensorRig) -> np.ndarray:
    """Range per beam against spawned obstacles and world bounds, max_range cap."""
    cfg = rig.laser
    mount_world = state.pose.compose(cfg.mount)
    origin = np.array([mount_world.x, mount_world.y])
    angles = cfg.beam_angles() + mount_world.theta
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    ranges = np.full(cfg.beam_count, np.inf)
    for ob in world.active_obstacles(state.time):
        ranges = np.minimum(ranges, ob.ray_ranges(origin, dirs))
    for a, b in world.bound_segments():
        ranges = np.minimum(ranges, _ray_segment(origin, dirs, a, b))
    return np.minimum(ranges, cfg.max_range)


@dataclass
class OdometryModel:
    """Wheel odometry corruption: proportional bias plus white noise."""

    v_bias_ppm: float = 0.0
    w_bias_ppm: float = 0.0
    v_sigma: float = 0.0  # m/s
    w_sigma: float = 0.0  # rad/s


def odometry_step(
    model: OdometryModel, true_delta: Pose2, dt: float, rng: np.random.Generator
) -> Pose3:
    """Corrupted odometry for one control step.

    Exact standstill reports exact identity; noise is only injected on motion.
    """
    if true_delta.is_zero():
        return Pose3.identity()
    ts = 1.0 + model.v_bias_ppm * 1e-6
    ws = 1.0 + model.w_bias_ppm * 1e-6
    noise = rng.normal(0.0, 1.0, size=3)
    dx = true_delta.x * ts + noise[0] * model.v_sigma * dt
    dy = true_delta.y * ts + noise[1] * model.v_sigma * dt
    dth = true_delta.theta * ws + noise[2] * model.w_sigma * dt
    return Pose2(dx, dy, dth).to_pose3()
