"""Relative goal bookkeeping between successful localizations.

Goals are keyframe origins expressed in the current robot base frame.  A
successful match rebuilds the whole list from the matched keyframe to the
route tail; between matches the list rides on odometry and gets pruned as
goals fall behind the robot or come within arrival range.  No global frame
exists anywhere in here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose3
from .keyframe_map import TopoMetricMap


@dataclass
class GoalConfig:
    arrival_radius: float = 0.3
    bearing_limit_deg: float = 60.0
    lost_timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.arrival_radius <= 0.0:
            raise ValueError("arrival_radius must be positive")
        if not 0.0 < self.bearing_limit_deg <= 180.0:
            raise ValueError("bearing_limit_deg must be in (0, 180]")
        if self.lost_timeout <= 0.0:
            raise ValueError("lost_timeout must be positive")


@dataclass
class Goal:
    translation: np.ndarray  # (3,) meters, current robot base frame
    source_kf: int


@dataclass
class GoalList:
    """Value type owned by the tick loop; every operation returns a new one.

    ``tail_arrived`` latches once the final goal is cleared by the arrival
    rule (as opposed to falling behind the robot), which is the half of the
    arrival condition only pruning can see.
    """

    goals: list[Goal] = field(default_factory=list)
    last_match_kf: int = -1
    staleness: float = 0.0
    tail_arrived: bool = False


def rebuild(m: TopoMetricMap, matched_kf: int, kf_from_robot: Pose3) -> GoalList:
    """Goal list from a fresh localization against ``matched_kf``.

    ``kf_from_robot`` maps the current robot base frame into the matched
    keyframe's base frame.  Goals are the downstream keyframe origins in the
    robot frame, one per chain node through to the tail; matching at the tail
    itself yields a single terminal goal at the tail's own offset.
    """
    m.get(matched_kf)  # raises KeyError when not alive
    robot_from_kf = kf_from_robot.inverse()
    goals: list[Goal] = []
    acc = robot_from_kf
    cur = matched_kf
    while True:
        step = m.successor(cur)
        if step is None:
            break
        cur, rel = step
        acc = acc.compose(rel)
        goals.append(Goal(acc.translation.copy(), cur))
    if not goals:
        goals.append(Goal(robot_from_kf.translation.copy(), matched_kf))
    return GoalList(goals, matched_kf, 0.0)


def propagate(gl: GoalList, odom_delta: Pose3, dt: float) -> GoalList:
    """Re-express every goal in the robot frame after one odometry step.

    ``odom_delta`` maps the new base frame into the previous one (the same
    convention the frame stream uses), so goals move through its inverse.
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    goals = gl.goals
    if goals:
        moved = odom_delta.inverse().apply(np.stack([g.translation for g in goals]))
        goals = [Goal(moved[k].copy(), g.source_kf) for k, g in enumerate(goals)]
    return GoalList(list(goals), gl.last_match_kf, gl.staleness + dt, gl.tail_arrived)


def prune(gl: GoalList, cfg: GoalConfig | None = None) -> GoalList:
    """Drop leading goals the robot has passed or reached.

    Repeatedly: erase goal 0 when its planar bearing leaves the steering
    scope, or when its planar distance is under the arrival radius; stop as
    soon as goal 0 survives both tests.  Only the head is ever tested, so
    surviving goals keep their order.
    """
    cfg = cfg if cfg is not None else GoalConfig()
    limit = math.radians(cfg.bearing_limit_deg)
    n = len(gl.goals)
    arrived = gl.tail_arrived
    i = 0
    while i < n:
        x, y = float(gl.goals[i].translation[0]), float(gl.goals[i].translation[1])
        if abs(math.atan2(y, x)) > limit:
            i += 1
            continue
        if math.hypot(x, y) < cfg.arrival_radius:
            arrived = arrived or i == n - 1
            i += 1
            continue
        break
    return GoalList(list(gl.goals[i:]), gl.last_match_kf, gl.staleness, arrived)


def is_lost(gl: GoalList, cfg: GoalConfig | None = None) -> bool:
    """True once the list has gone unrefreshed longer than the timeout."""
    cfg = cfg if cfg is not None else GoalConfig()
    return gl.staleness > cfg.lost_timeout
