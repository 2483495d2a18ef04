"""Arc-candidate local planner over a robot-centric occupancy grid.

Each tick the laser scan becomes a small occupancy grid (no persistence, no
ray clearing), occupied cells grow by the robot radius, and a pre-cached fan
of constant-curvature arcs is checked against it.  Feasible arcs are scored
by how well their endpoints line up with the next few goals; the winner's
angular velocity is commanded at a fixed cruise speed.  A separate near-goal
branch crawls onto the final goal.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from .world import LaserConfig

log = logging.getLogger("vtrnav.planner")


@dataclass(frozen=True)
class PlannerConfig:
    k: int = 21
    angle_span_deg: float = 60.0
    v_nominal: float = 0.3
    horizon: float = 1.0
    arc_samples: int = 25
    grid_size_m: float = 8.0
    resolution: float = 0.05
    inflation_radius: float = 0.25
    near_goal_dist: float = 0.5
    score_coeff: float = 0.005
    goals_scored: int = 3
    levels: int = 1

    def __post_init__(self) -> None:
        if self.k < 3 or self.k % 2 == 0:
            raise ValueError("k must be odd and at least 3")
        if not 0.0 < self.angle_span_deg <= 90.0:
            raise ValueError("angle_span_deg must be in (0, 90]")
        for name in ("v_nominal", "horizon", "grid_size_m", "resolution",
                     "near_goal_dist", "score_coeff"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.arc_samples < 20:
            raise ValueError("arc_samples must be at least 20")
        if self.inflation_radius < 0.0:
            raise ValueError("inflation_radius must be non-negative")
        if self.goals_scored < 1:
            raise ValueError("goals_scored must be at least 1")
        if self.levels not in (1, 2):
            raise ValueError("levels must be 1 or 2")


@dataclass
class CandidateTrajectory:
    omega: float  # rad/s
    v: float  # m/s
    horizon: float  # s
    points: np.ndarray  # (arc_samples, 2) robot frame, starts at the origin
    endpoint: np.ndarray  # (2,)
    end_heading: float  # rad


@dataclass
class OccupancyGrid:
    """Square robot-centric grid; the robot sits in the center cell.

    ``occupied`` holds raw beam returns, ``blocked`` adds the inflation.
    Index 0 is the x axis: cell (ix, iy) covers x in
    [(ix - size/2) * res, (ix - size/2 + 1) * res), same for y.
    """

    resolution: float
    size: int
    occupied: np.ndarray  # (size, size) bool
    blocked: np.ndarray  # (size, size) bool


@functools.lru_cache(maxsize=8)
def gen_candidates(cfg: PlannerConfig) -> tuple[CandidateTrajectory, ...]:
    """The arc fan, cached per config.  Treat the result as read-only.

    Headings are built as exact IEEE negation pairs around zero so a
    mirrored scene can select the bitwise-negated omega.
    """
    half = (cfg.k - 1) // 2
    span = math.radians(cfg.angle_span_deg)
    pos = [span * (i + 1) / half for i in range(half)]
    headings = [-h for h in reversed(pos)] + [0.0] + pos

    t = np.linspace(0.0, cfg.horizon, cfg.arc_samples)
    out = []
    for heading in headings:
        omega = heading / cfg.horizon
        if omega == 0.0:
            pts = np.stack([cfg.v_nominal * t, np.zeros_like(t)], axis=1)
        else:
            r = cfg.v_nominal / omega
            pts = np.stack([r * np.sin(omega * t), r * (1.0 - np.cos(omega * t))], axis=1)
        out.append(CandidateTrajectory(
            omega=omega,
            v=cfg.v_nominal,
            horizon=cfg.horizon,
            points=pts,
            endpoint=pts[-1].copy(),
            end_heading=heading,
        ))
    return tuple(out)


def build_grid(ranges: np.ndarray, laser: LaserConfig, cfg: PlannerConfig) -> OccupancyGrid:
    """Mark the cell under every returning beam endpoint; everything else free."""
    n = int(round(cfg.grid_size_m / cfg.resolution))
    occupied = np.zeros((n, n), dtype=bool)
    ranges = np.asarray(ranges, dtype=np.float64)
    hit = ranges < laser.max_range
    if hit.any():
        angles = laser.beam_angles()[hit] + laser.mount.theta
        xs = laser.mount.x + ranges[hit] * np.cos(angles)
        ys = laser.mount.y + ranges[hit] * np.sin(angles)
        ix = np.floor(xs / cfg.resolution).astype(np.int64) + n // 2
        iy = np.floor(ys / cfg.resolution).astype(np.int64) + n // 2
        ok = (ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
        occupied[ix[ok], iy[ok]] = True
    return OccupancyGrid(cfg.resolution, n, occupied, occupied.copy())


def inflate(grid: OccupancyGrid, cfg: PlannerConfig) -> OccupancyGrid:
    """Grow occupied cells by a disc of the inflation radius (in cells)."""
    r = int(round(cfg.inflation_radius / grid.resolution))
    if r == 0 or not grid.occupied.any():
        blocked = grid.occupied.copy()
    else:
        span = np.arange(-r, r + 1)
        structure = span[:, None] ** 2 + span[None, :] ** 2 <= r * r
        blocked = binary_dilation(grid.occupied, structure=structure)
    return OccupancyGrid(grid.resolution, grid.size, grid.occupied.copy(), blocked)


def _points_clear(grid: OccupancyGrid, points: np.ndarray) -> bool:
    idx = np.floor(points / grid.resolution).astype(np.int64) + grid.size // 2
    inside = (idx >= 0).all(axis=1) & (idx < grid.size).all(axis=1)
    if not inside.any():
        return True
    return not grid.blocked[idx[inside, 0], idx[inside, 1]].any()


def feasible(grid: OccupancyGrid, traj: CandidateTrajectory) -> bool:
    """True when no sampled arc point lands in a blocked cell.

    Points beyond the grid edge count as free; the grid is the sensing
    horizon, not a wall.
    """
    return _points_clear(grid, traj.points)


def _cell_blocked(grid: OccupancyGrid, xy) -> bool:
    return not _points_clear(grid, np.asarray(xy, dtype=np.float64).reshape(1, 2))


def _has_clear_child(grid: OccupancyGrid, traj: CandidateTrajectory,
                     cfg: PlannerConfig) -> bool:
    """Second-level feasibility: some same-fan arc from the endpoint is clear."""
    ch, sh = math.cos(traj.end_heading), math.sin(traj.end_heading)
    rot = np.array([[ch, -sh], [sh, ch]])
    for child in gen_candidates(cfg):
        pts = child.points @ rot.T + traj.endpoint
        if _points_clear(grid, pts):
            return True
    return False


def score(traj: CandidateTrajectory, goals, cfg: PlannerConfig | None = None) -> float:
    """Mean endpoint-to-goal alignment over the next few goals.

    Each term is 1 - sqrt(min(coeff * angle_deg, 1)); a zero-length endpoint
    or goal vector counts as perfectly aligned.
    """
    cfg = cfg if cfg is not None else PlannerConfig()
    goals = np.asarray(goals, dtype=np.float64).reshape(len(goals), -1)
    if goals.shape[0] == 0:
        raise ValueError("score needs at least one goal")
    ex, ey = float(traj.endpoint[0]), float(traj.endpoint[1])
    en = math.hypot(ex, ey)
    terms = []
    for g in goals[: cfg.goals_scored]:
        gx, gy = float(g[0]), float(g[1])
        gn = math.hypot(gx, gy)
        if en == 0.0 or gn == 0.0:
            theta = 0.0
        else:
            cosv = (ex * gx + ey * gy) / (en * gn)
            theta = math.degrees(math.acos(max(-1.0, min(1.0, cosv))))
        terms.append(1.0 - math.sqrt(min(cfg.score_coeff * theta, 1.0)))
    return sum(terms) / len(terms)


def plan_on_grid(grid: OccupancyGrid, goals, cfg: PlannerConfig | None = None
                 ) -> tuple[float, float]:
    """Pick (v, omega) for one tick against an already inflated grid.

    Empty goals stop the robot.  Within near_goal_dist of goal 0 the command
    crawls straight onto it if its cell is clear.  Otherwise the best-scoring
    feasible arc wins; ties prefer the straightest omega, then the earlier
    candidate.  No feasible arc means stop in place.
    """
    cfg = cfg if cfg is not None else PlannerConfig()
    if len(goals) == 0:
        return 0.0, 0.0
    goals = np.asarray(goals, dtype=np.float64).reshape(len(goals), -1)

    gx, gy = float(goals[0, 0]), float(goals[0, 1])
    d_p = math.hypot(gx, gy)
    if d_p < cfg.near_goal_dist:
        if _cell_blocked(grid, (gx, gy)):
            return 0.0, 0.0
        return d_p, math.atan2(gy, gx)

    best = None
    best_score = -1.0
    for cand in gen_candidates(cfg):
        if not feasible(grid, cand):
            continue
        if cfg.levels == 2 and not _has_clear_child(grid, cand, cfg):
            continue
        s = score(cand, goals, cfg)
        if (best is None or s > best_score
                or (s == best_score and abs(cand.omega) < abs(best.omega))):
            best, best_score = cand, s
    if best is None:
        log.debug("no feasible candidate, stopping")
        return 0.0, 0.0
    return cfg.v_nominal, best.omega


def plan(ranges: np.ndarray, goals, cfg: PlannerConfig | None = None,
         laser: LaserConfig | None = None) -> tuple[float, float]:
    """One planning tick straight from a laser scan."""
    cfg = cfg if cfg is not None else PlannerConfig()
    laser = laser if laser is not None else LaserConfig()
    grid = inflate(build_grid(ranges, laser, cfg), cfg)
    return plan_on_grid(grid, goals, cfg)
