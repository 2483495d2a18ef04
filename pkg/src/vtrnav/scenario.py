"""Scenario files: one human-readable config drives teach, compress, and repeat.

A scenario bundles the simulated world (landmark field, obstacles, landmark
churn), the taught route, and every stage's knobs, so that a single file plus
a seed reproduces a whole experiment bit for bit.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .goals import GoalConfig
from .map_ops import ClusterConfig, ExpansionConfig
from .matching import MatchConfig
from .planner import PlannerConfig
from .pose_solver import SolverConfig
from .world import (
    Circle,
    ConvexPolygon,
    Landmark,
    WorldModel,
)

DESCRIPTOR_BYTES = 32


@dataclass
class SpawnConfig:
    """Start-pose perturbation applied to every repeat run."""

    lateral: float = 0.2  # m, sign drawn from the run rng
    heading_deg: float = 5.0


@dataclass
class VocabConfig:
    branching: int = 8
    depth: int = 3
    seed: int = 0


@dataclass
class NoiseConfig:
    sigma_px: float = 0.5
    sigma_depth_frac: float = 0.01
    p_flip: float = 0.02
    odom_v_sigma: float = 0.0  # m/s
    odom_w_sigma: float = 0.0  # rad/s
    odom_v_bias_ppm: float = 0.0
    odom_w_bias_ppm: float = 0.0


@dataclass
class LandmarkSpec:
    """Either an explicit list of positions or a seeded random field.

    ``placement`` is "route" (scatter at a lateral offset from the taught
    polyline, extended past the end so the camera always sees texture ahead)
    or "box" (uniform over ``region`` = [x0, y0, x1, y1]).
    """

    count: int = 600
    seed: int = 1
    placement: str = "route"
    lateral: tuple[float, float] = (0.8, 4.0)
    z: tuple[float, float] = (0.2, 1.8)
    extend: float = 6.0
    region: tuple[float, float, float, float] | None = None
    positions: np.ndarray | None = None  # (N, 3) overrides generation


@dataclass
class ObstacleSpec:
    kind: str  # circle | polygon
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.3
    vertices: np.ndarray | None = None  # (K, 2) for polygons
    spawn_time: float = -math.inf
    stages: tuple[str, ...] = ("teach", "repeat")


@dataclass
class ChurnEvent:
    """Deactivate (or newly activate) a random slice of the landmark field."""

    kind: str  # die | born
    at: float
    fraction: float = 1.0
    seed: int = 0
    stages: tuple[str, ...] = ("repeat",)


@dataclass
class LimitConfig:
    max_duration: float = 120.0  # s of simulated time per stage
    stuck_timeout: float = 8.0  # s without teach progress before aborting
    wp_radius: float = 0.06  # m, route-end arrival for the teach follower
    lookahead: float = 0.6  # m, teach follower target distance


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    waypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    tick_rate: float = 10.0
    match_period: int = 5
    v_cruise: float = 0.3
    success_radius: float = 0.5
    tau_loop: float = 0.35
    # Hidden from teach-time queries: ~9 m of recent travel at the default
    # cadence, comfortably past the 8 m camera range so a straight corridor
    # does not loop-close onto its own wake.
    exclusion_window: int = 60
    spawn: SpawnConfig = field(default_factory=SpawnConfig)
    vocab: VocabConfig = field(default_factory=VocabConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    landmarks: LandmarkSpec = field(default_factory=LandmarkSpec)
    obstacles: list[ObstacleSpec] = field(default_factory=list)
    churn: list[ChurnEvent] = field(default_factory=list)
    limits: LimitConfig = field(default_factory=LimitConfig)
    matcher: MatchConfig = field(default_factory=MatchConfig)
    # min_correspondences above the solver's bare DOF floor: a live frame
    # matched against an off-route viewpoint can scrape together a handful
    # of window-compatible pairs, and a six-point localization is not
    # evidence the robot is near the keyframe.  Kept moderate because the
    # grid filter thins honest long-range pair sets to a few dozen.
    solver: SolverConfig = field(
        default_factory=lambda: SolverConfig(min_correspondences=12))
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    goals: GoalConfig = field(default_factory=GoalConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    expansion: ExpansionConfig = field(default_factory=ExpansionConfig)

    def __post_init__(self) -> None:
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)
        if self.waypoints.shape[0] < 2:
            raise ValueError("a route needs at least 2 waypoints")
        if not 5.0 <= self.tick_rate <= 100.0:
            raise ValueError("tick_rate must be in [5, 100] Hz")
        if self.match_period < 1:
            raise ValueError("match_period must be at least 1 tick")
        if route_length(self.waypoints) <= 1e-9:
            raise ValueError("route has zero length")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate


def route_length(waypoints: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(waypoints, axis=0), axis=1)))


def sample_route(waypoints: np.ndarray, spacing: float = 0.05) -> np.ndarray:
    """Densify the waypoint polyline to roughly uniform spacing."""
    pts = [waypoints[0]]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        seg = float(np.linalg.norm(b - a))
        if seg <= 1e-12:
            continue
        n = max(1, int(math.ceil(seg / spacing)))
        for k in range(1, n + 1):
            pts.append(a + (b - a) * (k / n))
    return np.asarray(pts)


# ------------------------------------------------------------- world build


def _route_landmarks(spec: LandmarkSpec, waypoints: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    wps = waypoints.copy()
    # Extend the last leg so the camera still sees texture at the route end.
    tail = wps[-1] - wps[-2]
    tail = tail / max(np.linalg.norm(tail), 1e-12)
    wps = np.vstack([wps, wps[-1] + tail * spec.extend])

    segs = np.diff(wps, axis=0)
    lens = np.linalg.norm(segs, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    s = rng.uniform(0.0, cum[-1], spec.count)
    side = np.where(rng.random(spec.count) < 0.5, -1.0, 1.0)
    lat = rng.uniform(spec.lateral[0], spec.lateral[1], spec.count) * side
    z = rng.uniform(spec.z[0], spec.z[1], spec.count)

    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1)
    frac = (s - cum[idx]) / np.where(lens[idx] > 1e-12, lens[idx], 1.0)
    base = wps[idx] + segs[idx] * frac[:, None]
    tangent = segs[idx] / np.where(lens[idx] > 1e-12, lens[idx], 1.0)[:, None]
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    xy = base + normal * lat[:, None]
    return np.column_stack([xy, z])


def _box_landmarks(spec: LandmarkSpec) -> np.ndarray:
    if spec.region is None:
        raise ValueError("box placement needs a region")
    rng = np.random.default_rng(spec.seed)
    x0, y0, x1, y1 = spec.region
    x = rng.uniform(x0, x1, spec.count)
    y = rng.uniform(y0, y1, spec.count)
    z = rng.uniform(spec.z[0], spec.z[1], spec.count)
    return np.column_stack([x, y, z])


def build_world(sc: Scenario, stage: str = "teach") -> WorldModel:
    """Materialize the landmark field, obstacles, and churn for one stage.

    Descriptors are drawn from the landmark seed so the same scenario always
    produces the same world; churn turns into per-landmark active windows.
    """
    spec = sc.landmarks
    if spec.positions is not None:
        positions = np.asarray(spec.positions, dtype=np.float64).reshape(-1, 3)
    elif spec.placement == "route":
        positions = _route_landmarks(spec, sc.waypoints)
    elif spec.placement == "box":
        positions = _box_landmarks(spec)
    else:
        raise ValueError(f"unknown landmark placement {spec.placement!r}")

    n = positions.shape[0]
    rng = np.random.default_rng(spec.seed + 104729)  # descriptor stream
    descriptors = rng.integers(0, 256, size=(n, DESCRIPTOR_BYTES), dtype=np.uint8)

    active_from = np.full(n, -math.inf)
    active_until = np.full(n, math.inf)
    for ev in sc.churn:
        if stage not in ev.stages:
            continue
        ev_rng = np.random.default_rng(ev.seed + 7919)
        chosen = ev_rng.random(n) < ev.fraction
        if ev.kind == "die":
            active_until[chosen] = np.minimum(active_until[chosen], ev.at)
        elif ev.kind == "born":
            active_from[chosen] = np.maximum(active_from[chosen], ev.at)
        else:
            raise ValueError(f"unknown churn kind {ev.kind!r}")

    landmarks = [
        Landmark(positions[i], descriptors[i], active_from[i], active_until[i])
        for i in range(n)
    ]

    obstacles = []
    for ob in sc.obstacles:
        if stage not in ob.stages:
            continue
        if ob.kind == "circle":
            obstacles.append(Circle(ob.center, ob.radius, ob.spawn_time))
        elif ob.kind == "polygon":
            obstacles.append(ConvexPolygon(ob.vertices, ob.spawn_time))
        else:
            raise ValueError(f"unknown obstacle kind {ob.kind!r}")
    return WorldModel(landmarks, obstacles)


# --------------------------------------------------------------- yaml i/o


_SECTION_TYPES = {
    "spawn": SpawnConfig,
    "vocab": VocabConfig,
    "noise": NoiseConfig,
    "limits": LimitConfig,
    "matcher": MatchConfig,
    "solver": SolverConfig,
    "planner": PlannerConfig,
    "goals": GoalConfig,
    "cluster": ClusterConfig,
    "expansion": ExpansionConfig,
}


def _build_section(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def _landmark_spec(data: dict) -> LandmarkSpec:
    data = dict(data)
    if "positions" in data and data["positions"] is not None:
        data["positions"] = np.asarray(data["positions"], dtype=np.float64)
    for key in ("lateral", "z", "region"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    return _build_section(LandmarkSpec, data)


def _obstacle_spec(data: dict) -> ObstacleSpec:
    data = dict(data)
    data["kind"] = data.pop("type", data.pop("kind", None))
    if data["kind"] is None:
        raise ValueError("obstacle entry needs a type")
    if "center" in data:
        data["center"] = tuple(data["center"])
    if "vertices" in data and data["vertices"] is not None:
        data["vertices"] = np.asarray(data["vertices"], dtype=np.float64)
    if "stages" in data:
        data["stages"] = tuple(data["stages"])
    return _build_section(ObstacleSpec, data)


def _churn_event(data: dict) -> ChurnEvent:
    data = dict(data)
    if "stages" in data:
        data["stages"] = tuple(data["stages"])
    return _build_section(ChurnEvent, data)


def scenario_from_dict(data: dict) -> Scenario:
    data = dict(data)
    kwargs: dict = {}
    for key in ("name", "seed", "tick_rate", "match_period", "v_cruise",
                "success_radius", "tau_loop", "exclusion_window"):
        if key in data:
            kwargs[key] = data.pop(key)
    if "waypoints" not in data:
        raise ValueError("scenario needs a waypoints list")
    kwargs["waypoints"] = np.asarray(data.pop("waypoints"), dtype=np.float64)
    if "landmarks" in data:
        kwargs["landmarks"] = _landmark_spec(data.pop("landmarks"))
    if "obstacles" in data:
        kwargs["obstacles"] = [_obstacle_spec(ob) for ob in data.pop("obstacles")]
    if "churn" in data:
        kwargs["churn"] = [_churn_event(ev) for ev in data.pop("churn")]
    for key, cls in _SECTION_TYPES.items():
        if key in data:
            kwargs[key] = _build_section(cls, data.pop(key))
    if data:
        raise ValueError(f"unknown scenario keys: {sorted(data)}")
    return Scenario(**kwargs)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path} does not hold a scenario mapping")
    return scenario_from_dict(data)


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    return value


def scenario_to_dict(sc: Scenario) -> dict:
    out: dict = {
        "name": sc.name,
        "seed": sc.seed,
        "waypoints": _plain(sc.waypoints),
        "tick_rate": sc.tick_rate,
        "match_period": sc.match_period,
        "v_cruise": sc.v_cruise,
        "success_radius": sc.success_radius,
        "tau_loop": sc.tau_loop,
        "exclusion_window": sc.exclusion_window,
        "landmarks": _plain(sc.landmarks),
        "obstacles": [dict(_plain(ob), type=ob.kind) for ob in sc.obstacles],
        "churn": [_plain(ev) for ev in sc.churn],
    }
    for ob in out["obstacles"]:
        ob.pop("kind")
    for key in _SECTION_TYPES:
        out[key] = _plain(getattr(sc, key))
    return out


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(sc), fh, sort_keys=False)
