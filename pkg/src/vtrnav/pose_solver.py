"""Gauss-Newton pose estimation from 3D-2D correspondences.

The iterate maps keyframe-camera points into the live camera; the residual
is projected-minus-observed pixels, so the normal-equation step carries a
minus sign and descends.  The returned pose is the inverse of the iterate:
the live camera expressed in keyframe-camera coordinates, which is what the
goal chain consumes.  Failure is reported, never papered over: there is no
damping fallback, a bad geometry or a bad fit rejects the match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .geometry import CameraIntrinsics, Pose3, Twist, Z_MIN, apply_left_update

REJECT_TOO_FEW = "too_few_correspondences"
REJECT_DEPTH = "depth_culled"
REJECT_DEGENERATE = "degenerate_geometry"
REJECT_NO_CONVERGENCE = "no_convergence"
REJECT_HIGH_RESIDUAL = "high_residual"

# JtJ condition beyond this is treated as rank deficient (collinear points,
# one-sided geometry); well-posed problems sit orders of magnitude below.
_MAX_CONDITION = 1e12


@dataclass
class SolverConfig:
    max_iters: int = 20
    step_tol: float = 1e-8
    min_correspondences: int = 6
    max_mean_reproj_px: float = 3.0

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_tol <= 0.0:
            raise ValueError("step_tol must be positive")
        if self.min_correspondences < 3:
            raise ValueError("min_correspondences must be at least 3")
        if self.max_mean_reproj_px <= 0.0:
            raise ValueError("max_mean_reproj_px must be positive")


@dataclass
class SolveResult:
    pose: Pose3 | None  # keyframe camera <- live camera; None on rejection
    iterations: int
    mean_reproj_px: float
    converged: bool
    rejection: str | None = None
    residual_norms: list[float] = field(default_factory=list)


def _reject(cause: str, iterations: int = 0, mean_px: float = math.inf,
            norms: list[float] | None = None) -> SolveResult:
    return SolveResult(None, iterations, mean_px, False, cause, norms or [])


def _stacked_jacobian(intr: CameraIntrinsics, q: np.ndarray) -> np.ndarray:
    """(2N, 6) reprojection Jacobian for transformed points q, left perturbation."""
    n = q.shape[0]
    x, y, z = q[:, 0], q[:, 1], q[:, 2]
    dproj = np.zeros((n, 2, 3))
    dproj[:, 0, 0] = intr.fx / z
    dproj[:, 0, 2] = -intr.fx * x / (z * z)
    dproj[:, 1, 1] = intr.fy / z
    dproj[:, 1, 2] = -intr.fy * y / (z * z)
    dpoint = np.zeros((n, 3, 6))
    dpoint[:, :, :3] = np.eye(3)
    # Rotation block is -hat(q), written out to stay vectorized.
    dpoint[:, 0, 4] = z
    dpoint[:, 0, 5] = -y
    dpoint[:, 1, 3] = -z
    dpoint[:, 1, 5] = x
    dpoint[:, 2, 3] = y
    dpoint[:, 2, 4] = -x
    return (dproj @ dpoint).reshape(2 * n, 6)


def _pixels(intr: CameraIntrinsics, q: np.ndarray) -> np.ndarray:
    z = q[:, 2]
    return np.stack([intr.fx * q[:, 0] / z + intr.cx,
                     intr.fy * q[:, 1] / z + intr.cy], axis=1)


def solve(correspondences, intr: CameraIntrinsics,
          cfg: SolverConfig | None = None) -> SolveResult:
    """Fit the relative pose explaining the correspondences, or reject.

    Initialization is the identity; points whose transformed depth drops to
    z_min or below are excluded from that iteration's system.
    """
    cfg = cfg or SolverConfig()
    points = np.array([c.point for c in correspondences], dtype=np.float64).reshape(-1, 3)
    observed = np.array([c.pixel for c in correspondences], dtype=np.float64).reshape(-1, 2)
    if points.shape[0] < cfg.min_correspondences:
        return _reject(REJECT_TOO_FEW)

    pose = Pose3.identity()  # live camera <- keyframe camera iterate
    stepped_below_tol = False
    norms: list[float] = []
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        q = pose.apply(points)
        keep = q[:, 2] > Z_MIN
        if int(keep.sum()) < cfg.min_correspondences:
            return _reject(REJECT_DEPTH, iterations - 1, norms=norms)
        qk = q[keep]
        err = _pixels(intr, qk) - observed[keep]
        norms.append(float(np.linalg.norm(err)))
        jac = _stacked_jacobian(intr, qk)
        jtj = jac.T @ jac
        jte = jac.T @ err.reshape(-1)
        eig = np.linalg.eigvalsh(jtj)
        if eig[0] <= 0.0 or eig[-1] / eig[0] > _MAX_CONDITION:
            return _reject(REJECT_DEGENERATE, iterations - 1, norms=norms)
        try:
            delta = cho_solve(cho_factor(jtj), -jte)
        except LinAlgError:
            return _reject(REJECT_DEGENERATE, iterations - 1, norms=norms)
        pose = apply_left_update(Twist.from_vector(delta), pose)
        if float(np.linalg.norm(delta)) < cfg.step_tol:
            stepped_below_tol = True
            break

    q = pose.apply(points)
    keep = q[:, 2] > Z_MIN
    if int(keep.sum()) < cfg.min_correspondences:
        return _reject(REJECT_DEPTH, iterations, norms=norms)
    err = _pixels(intr, q[keep]) - observed[keep]
    mean_px = float(np.linalg.norm(err, axis=1).mean())
    if not stepped_below_tol:
        return _reject(REJECT_NO_CONVERGENCE, iterations, mean_px, norms)
    if mean_px > cfg.max_mean_reproj_px:
        return _reject(REJECT_HIGH_RESIDUAL, iterations, mean_px, norms)
    return SolveResult(pose.inverse(), iterations, mean_px, True, None, norms)
