"""Stage orchestration: teach a route, compress the map, repeat the route.

Every stage is a plain function over in-memory objects; file I/O lives in
thin wrappers so tests can drive the pipeline without touching disk.  All
stages consume a single numpy Generator in tick order, which makes whole
runs bit-for-bit reproducible from (scenario, seed).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .bow import (
    Vocabulary,
    deserialize_vocabulary,
    query_loops,
    serialize_vocabulary,
    to_bow,
    train_vocabulary,
)
from .geometry import Pose2, Pose3
from .goals import GoalList, is_lost, prune, propagate, rebuild
from .keyframe_map import (
    KeyframeRecorder,
    TopoMetricMap,
    combined_features,
    deserialize_map,
    serialize_map,
)
from .map_ops import ClusterConfig, MatchEvent, expand_map, reduce_redundancy
from .matching import grid_filter, match
from .planner import plan
from .pose_solver import solve
from .scenario import Scenario, build_world, route_length, sample_route
from .world import (
    CameraConfig,
    OdometryModel,
    RobotState,
    SensorRig,
    odometry_step,
    sense_camera,
    sense_laser,
    step_dynamics,
)

log = logging.getLogger(__name__)


def _wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def _rel2(prev: Pose2, new: Pose2) -> Pose2:
    return prev.inverse().compose(new)


def _rig(sc: Scenario) -> SensorRig:
    rig = SensorRig()
    rig.camera.sigma_px = sc.noise.sigma_px
    rig.camera.sigma_depth_frac = sc.noise.sigma_depth_frac
    rig.camera.p_flip = sc.noise.p_flip
    return rig


def _odometry(sc: Scenario) -> OdometryModel:
    return OdometryModel(
        v_bias_ppm=sc.noise.odom_v_bias_ppm,
        w_bias_ppm=sc.noise.odom_w_bias_ppm,
        v_sigma=sc.noise.odom_v_sigma,
        w_sigma=sc.noise.odom_w_sigma,
    )


def rebind_vocabulary(m: TopoMetricMap, vocab: Vocabulary) -> None:
    """Recompute every bow in the map; bows are not stored in map files.

    Refuses a vocabulary whose content hash disagrees with the one the map
    was built against, since scores would silently change.
    """
    if m.vocab_hash != 0 and m.vocab_hash != vocab.content_hash():
        raise ValueError("vocabulary does not match the one this map was built with")
    for kf in m.alive_keyframes():
        kf.bow = to_bow(vocab, kf.descriptors)
        for att in kf.attached:
            att.bow = to_bow(vocab, att.descriptors)
    m.bump_version()


# ------------------------------------------------------------------ teach


@dataclass
class TeachResult:
    m: TopoMetricMap
    vocab: Vocabulary
    path: np.ndarray  # (T, 4) rows t, x, y, theta (true poses)
    kf_poses: dict[int, Pose2]
    loop_links: int
    ticks: int


class _Follower:
    """Carrot-on-a-stick waypoint follower for the teach drive.

    The carrot only ever advances along the polyline, so self-crossing
    routes cannot confuse it the way nearest-point projection would.
    """

    def __init__(self, waypoints: np.ndarray, lookahead: float, wp_radius: float):
        self.route = sample_route(waypoints, spacing=0.05)
        self.idx = 0
        self.lookahead = lookahead
        self.wp_radius = wp_radius
        self.end = waypoints[-1]

    def carrot(self, pose: Pose2) -> np.ndarray:
        p = np.array([pose.x, pose.y])
        while (
            self.idx + 1 < len(self.route)
            and float(np.linalg.norm(self.route[self.idx] - p)) < self.lookahead
        ):
            self.idx += 1
        return self.route[self.idx]

    def done(self, pose: Pose2) -> bool:
        at_end = self.idx + 1 >= len(self.route)
        return at_end and math.hypot(pose.x - self.end[0], pose.y - self.end[1]) < self.wp_radius

    def command(self, pose: Pose2, v_cruise: float) -> tuple[float, float]:
        target = self.carrot(pose)
        alpha = _wrap(math.atan2(target[1] - pose.y, target[0] - pose.x) - pose.theta)
        w = max(-1.8, min(1.8, 2.5 * alpha))
        v = v_cruise if abs(alpha) < math.pi / 3.0 else 0.05
        if self.idx + 1 >= len(self.route):
            # Taper into the route end instead of overshooting past it.
            dist = math.hypot(pose.x - self.end[0], pose.y - self.end[1])
            v = min(v, max(0.05, dist))
        return v, w


def _start_pose(sc: Scenario) -> Pose2:
    p0, p1 = sc.waypoints[0], sc.waypoints[1]
    return Pose2(p0[0], p0[1], math.atan2(p1[1] - p0[1], p1[0] - p0[0]))


def _try_loop_link(m, kf, sc, rig) -> bool:
    """Teach-time loop closure for a freshly inserted keyframe."""
    cands = query_loops(
        m, kf.bow, tau_loop=sc.tau_loop,
        exclusion_window=sc.exclusion_window, include_attachments=False,
    )
    cam = rig.camera
    for c in cands[:1]:
        if c.kf_id >= kf.kf_id:  # guards the exclusion_window = 0 case
            continue
        target = m.get(c.kf_id)
        corrs = match(target.pixels, target.descriptors, target.points,
                      kf.pixels, kf.descriptors, sc.matcher)
        corrs = grid_filter(corrs, sc.matcher, (cam.intrinsics.width, cam.intrinsics.height))
        res = solve(corrs, cam.intrinsics, sc.solver)
        if res.converged:
            rel = cam.cam_from_base.inverse().compose(res.pose).compose(cam.cam_from_base)
            m.attach_loop(kf.kf_id, c.kf_id, rel)
            return True
    return False


def run_teach(sc: Scenario, out_dir=None) -> TeachResult:
    """Drive the route, record keyframes, close teach-time loops.

    The vocabulary is trained on the world's full descriptor population
    before the drive so quantization is available while keyframes stream in.
    """
    if route_length(sc.waypoints) <= 1e-9:
        raise ValueError("route has zero length")
    world = build_world(sc, stage="teach")
    rig = _rig(sc)
    odom_model = _odometry(sc)
    rng = np.random.default_rng(sc.seed)
    vocab = train_vocabulary(
        world.descriptors, branching=sc.vocab.branching,
        depth=sc.vocab.depth, seed=sc.vocab.seed,
    )

    m = TopoMetricMap()
    m.vocab_hash = vocab.content_hash()
    recorder = KeyframeRecorder(cadence=5)
    follower = _Follower(sc.waypoints, sc.limits.lookahead, sc.limits.wp_radius)
    state = RobotState(_start_pose(sc), 0.0)
    odom_delta = Pose3.identity()
    dt = sc.dt
    max_ticks = int(round(sc.limits.max_duration * sc.tick_rate))

    path = []
    kf_poses: dict[int, Pose2] = {}
    loop_links = 0
    last_frame_pose = state.pose
    progress_idx = -1
    progress_t = 0.0
    tick = 0

    for tick in range(max_ticks):
        t = tick * dt
        state = RobotState(state.pose, t)
        frame = sense_camera(world, state, rig, rng, frame_id=tick, odom_delta=odom_delta)
        last_frame_pose = state.pose
        kf = recorder.observe(frame)
        if kf is not None:
            kf.bow = to_bow(vocab, kf.descriptors)
            m.insert(kf)
            kf_poses[kf.kf_id] = state.pose
            loop_links += _try_loop_link(m, kf, sc, rig)
        path.append((t, state.pose.x, state.pose.y, state.pose.theta))

        if follower.done(state.pose):
            break
        if follower.idx > progress_idx:
            progress_idx = follower.idx
            progress_t = t
        elif t - progress_t > sc.limits.stuck_timeout:
            raise RuntimeError(
                f"teach follower stuck for {t - progress_t:.1f}s at "
                f"({state.pose.x:.2f}, {state.pose.y:.2f}), route point {follower.idx}"
            )

        v, w = follower.command(state.pose, sc.v_cruise)
        new_state = step_dynamics(state, v, w, dt)
        odom_delta = odometry_step(odom_model, _rel2(state.pose, new_state.pose), dt, rng)
        state = new_state
    else:
        raise RuntimeError(
            f"teach drive exceeded {sc.limits.max_duration:.0f}s before reaching the route end"
        )

    kf = recorder.finalize()
    if kf is not None:
        kf.bow = to_bow(vocab, kf.descriptors)
        m.insert(kf)
        kf_poses[kf.kf_id] = last_frame_pose
        loop_links += _try_loop_link(m, kf, sc, rig)

    if len(m) == 0:
        raise RuntimeError("teach drive produced no keyframes")
    result = TeachResult(m, vocab, np.asarray(path), kf_poses, loop_links, tick + 1)
    if out_dir is not None:
        write_teach_outputs(result, sc, out_dir)
    return result


# --------------------------------------------------------------- compress


def run_compress(m: TopoMetricMap, vocab: Vocabulary,
                 cfg: ClusterConfig | None = None,
                 tau: float | None = None,
                 camera: CameraConfig | None = None) -> dict:
    """Cluster the map in place; returns a summary report."""
    cfg = cfg if cfg is not None else ClusterConfig()
    if tau is not None:
        cfg = dataclasses.replace(cfg, tau_cluster=tau)
    camera = camera if camera is not None else CameraConfig()
    before = len(m)
    merged = reduce_redundancy(m, vocab, cfg, camera)
    counts = [kf.feature_count() for kf in m.alive_keyframes()]
    hist, edges = np.histogram(counts, bins=10)
    return {
        "keyframes_before": before,
        "keyframes_after": len(m),
        "merged": len(merged),
        "tau_cluster": cfg.tau_cluster,
        "points_histogram": {
            "counts": hist.tolist(),
            "edges": [float(e) for e in edges],
        },
    }


# ----------------------------------------------------------------- repeat


@dataclass
class RunReport:
    end_point_distance: float
    success: bool
    path: np.ndarray  # (T, 4) rows t, x, y, theta (true poses)
    matches: list[tuple[int, int, float]]  # (tick, kf id, score)
    goal_staleness_max: float
    terminated_by: str  # arrival | lost | budget
    chamfer_distance: float | None = None
    attachments_added: int = 0
    ticks: int = 0
    seed: int = 0
    scenario: str = ""
    success_radius: float = 0.5
    tick_ms_max: float = 0.0
    match_world_xy: list[tuple[float, float]] = field(default_factory=list)


def _spawn_state(sc: Scenario, rng: np.random.Generator) -> RobotState:
    base = _start_pose(sc)
    lat = sc.spawn.lateral * (1.0 if rng.random() < 0.5 else -1.0)
    hdg = math.radians(sc.spawn.heading_deg) * (1.0 if rng.random() < 0.5 else -1.0)
    nx, ny = -math.sin(base.theta), math.cos(base.theta)
    return RobotState(Pose2(base.x + nx * lat, base.y + ny * lat, base.theta + hdg), 0.0)


def _attempt_match(m, vocab, frame, sc, rig, top_n: int = 8,
                   accept_dist: float = 1.0, widen: bool = False):
    """query -> correspondence -> solve; nearest converged candidate wins.

    Several candidates are tried because the nearest keyframe can fail the
    pixel window under a large viewpoint offset while one slightly farther
    along the route (smaller parallax) still matches.  Among converged
    solves the one whose estimated camera offset is smallest is preferred:
    a distant keyframe can converge too, but rebuilding goals from it
    injects more pose error.  A candidate closer than ``accept_dist`` is
    accepted immediately since no farther one can beat it meaningfully.
    With ``widen`` (used when no goal is being tracked, i.e. at spawn or
    after losing the route) a failed pass is repeated once with a widened
    pixel window; descriptor distance still gates identity, so the wider
    window only admits pairs the Hamming test already trusts.
    """
    cam = rig.camera
    cands = query_loops(m, frame, vocab, tau_loop=sc.tau_loop,
                        exclusion_window=0, include_attachments=True)
    wide = dataclasses.replace(sc.matcher, gamma=3.0 * sc.matcher.gamma)
    for matcher in (sc.matcher, wide) if widen else (sc.matcher,):
        best = None
        best_d = math.inf
        for c in cands[:top_n]:
            kf = m.get(c.kf_id)
            px, desc, pts = combined_features(kf)
            corrs = match(px, desc, pts, frame.pixels, frame.descriptors, matcher)
            corrs = grid_filter(corrs, matcher, (cam.intrinsics.width, cam.intrinsics.height))
            res = solve(corrs, cam.intrinsics, sc.solver)
            if not res.converged:
                continue
            d = float(np.linalg.norm(res.pose.translation))
            if d < best_d:
                best = MatchEvent(frame.timestamp, c.kf_id, res.pose), c.score
                best_d = d
            if best_d < accept_dist:
                break
        if best is not None:
            return best
    return None, 0.0


def run_repeat(
    m: TopoMetricMap,
    vocab: Vocabulary,
    sc: Scenario,
    seed: int | None = None,
    single_goal: bool = False,
    expansion: bool = True,
    out_dir=None,
    trace=None,
) -> RunReport:
    """Autonomously retrace the taught route against the given map.

    ``single_goal`` restricts planner scoring to the nearest goal only;
    ``expansion`` controls whether unmatched frames are attached back into
    the map between matches.  Failures terminate the run and are reported,
    never raised.  ``trace``, if given, is called each tick with
    ``(tick, pose, goal_list, v, w)`` after planning; it is a diagnostic
    hook and must not mutate its arguments.
    """
    run_seed = sc.seed + 1000 if seed is None else seed
    world = build_world(sc, stage="repeat")
    rig = _rig(sc)
    odom_model = _odometry(sc)
    rng = np.random.default_rng(run_seed)
    planner_cfg = dataclasses.replace(sc.planner, goals_scored=1) if single_goal else sc.planner

    state = _spawn_state(sc, rng)
    gl = GoalList()
    odom_delta = Pose3.identity()
    dt = sc.dt
    max_ticks = int(round(sc.limits.max_duration * sc.tick_rate))

    path = []
    matches: list[tuple[int, int, float]] = []
    match_world_xy: list[tuple[float, float]] = []
    stale_max = 0.0
    tick_ms_max = 0.0
    attachments = 0
    last_event: MatchEvent | None = None
    gap_frames = []
    terminated_by = "budget"

    for tick in range(max_ticks):
        t0 = time.perf_counter()
        t = tick * dt
        state = RobotState(state.pose, t)
        frame = sense_camera(world, state, rig, rng, frame_id=tick, odom_delta=odom_delta)
        ranges = sense_laser(world, state, rig)

        matched = False
        if tick % sc.match_period == 0:
            event, score = _attempt_match(m, vocab, frame, sc, rig,
                                          widen=not gl.goals)
            if event is not None:
                matched = True
                matches.append((tick, event.kf_id, score))
                bc = rig.camera.cam_from_base.inverse()
                kf_from_robot = bc.compose(event.kf_cam_from_live_cam).compose(rig.camera.cam_from_base)
                robot_from_kf = kf_from_robot.inverse()
                c, s = math.cos(state.pose.theta), math.sin(state.pose.theta)
                gx = state.pose.x + c * robot_from_kf.translation[0] - s * robot_from_kf.translation[1]
                gy = state.pose.y + s * robot_from_kf.translation[0] + c * robot_from_kf.translation[1]
                match_world_xy.append((gx, gy))
                gl = rebuild(m, event.kf_id, kf_from_robot)
                if expansion and last_event is not None:
                    attachments += expand_map(m, gap_frames, (last_event, event),
                                              sc.expansion, rig.camera, vocab)
                last_event = event
                gap_frames = []
        if not matched and expansion and last_event is not None:
            gap_frames.append(frame)

        gl = prune(gl, sc.goals)
        stale_max = max(stale_max, gl.staleness)
        path.append((t, state.pose.x, state.pose.y, state.pose.theta))

        if gl.tail_arrived and not gl.goals:
            terminated_by = "arrival"
            tick_ms_max = max(tick_ms_max, (time.perf_counter() - t0) * 1e3)
            break
        if is_lost(gl, sc.goals):
            terminated_by = "lost"
            tick_ms_max = max(tick_ms_max, (time.perf_counter() - t0) * 1e3)
            break

        goal_vecs = np.array([g.translation[:2] for g in gl.goals], dtype=np.float64)
        v, w = plan(ranges, goal_vecs, planner_cfg, rig.laser)
        if trace is not None:
            trace(tick, state.pose, gl, v, w)
        new_state = step_dynamics(state, v, w, dt)
        odom_delta = odometry_step(odom_model, _rel2(state.pose, new_state.pose), dt, rng)
        gl = propagate(gl, odom_delta, dt)
        stale_max = max(stale_max, gl.staleness)
        state = new_state
        tick_ms_max = max(tick_ms_max, (time.perf_counter() - t0) * 1e3)

    end = sc.waypoints[-1]
    end_dist = math.hypot(state.pose.x - end[0], state.pose.y - end[1])
    report = RunReport(
        end_point_distance=end_dist,
        success=terminated_by == "arrival" and end_dist < sc.success_radius,
        path=np.asarray(path),
        matches=matches,
        goal_staleness_max=stale_max,
        terminated_by=terminated_by,
        attachments_added=attachments,
        ticks=len(path),
        seed=run_seed,
        scenario=sc.name,
        success_radius=sc.success_radius,
        tick_ms_max=tick_ms_max,
        match_world_xy=match_world_xy,
    )
    log.info("repeat %s seed %d: %s, end-point %.3fm, %d matches",
             sc.name, run_seed, terminated_by, end_dist, len(matches))
    if out_dir is not None:
        write_repeat_outputs(report, m, sc, out_dir, expansion=expansion)
    return report


# ------------------------------------------------------------------- eval


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between two 2D point sets."""
    from scipy.spatial import cKDTree

    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("chamfer distance needs non-empty paths")
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def run_eval(dirs) -> tuple[str, list[dict]]:
    """Summarize one or more run directories.

    Chamfer distance against the reference route is reported when both CSVs
    are present; it never affects the success flag.
    """
    rows = []
    for d in dirs:
        with open(os.path.join(d, "report.json"), "r", encoding="utf-8") as fh:
            rep = json.load(fh)
        row = {
            "run": os.path.basename(os.path.normpath(d)),
            "scenario": rep.get("scenario", ""),
            "seed": rep.get("seed", 0),
            "end_point_distance": float(rep["end_point_distance"]),
            "success": bool(rep["success"]),
            "terminated_by": rep.get("terminated_by", ""),
            "matches": rep.get("match_count", 0),
            "chamfer_distance": rep.get("chamfer_distance"),
        }
        traj_path = os.path.join(d, "trajectory.csv")
        route_path = os.path.join(d, "route.csv")
        if row["chamfer_distance"] is None and os.path.exists(traj_path) and os.path.exists(route_path):
            traj = read_trajectory(traj_path)
            route = np.loadtxt(route_path, delimiter=",", skiprows=1, ndmin=2)
            row["chamfer_distance"] = chamfer_distance(traj[:, 1:3], route)
        rows.append(row)

    n_ok = sum(r["success"] for r in rows)
    header = f"{'run':<24} {'scenario':<16} {'seed':>6} {'end_dist':>9} {'chamfer':>9} {'ok':>3}  end"
    lines = [header, "-" * len(header)]
    for r in rows:
        ch = "-" if r["chamfer_distance"] is None else f"{r['chamfer_distance']:.3f}"
        lines.append(
            f"{r['run']:<24} {r['scenario']:<16} {r['seed']:>6} "
            f"{r['end_point_distance']:>9.3f} {ch:>9} {'yes' if r['success'] else 'no':>3}  {r['terminated_by']}"
        )
    lines.append(f"success rate: {n_ok}/{len(rows)}")
    return "\n".join(lines), rows


def write_metrics_csv(rows: list[dict], path) -> None:
    fields = ["run", "scenario", "seed", "end_point_distance", "success",
              "terminated_by", "matches", "chamfer_distance"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


# ------------------------------------------------------------------- i/o


def write_trajectory(path, rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,y,theta\n")
        for t, x, y, th in np.asarray(rows).reshape(-1, 4):
            fh.write(f"{t:.17g},{x:.17g},{y:.17g},{th:.17g}\n")


def read_trajectory(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_map(path, m: TopoMetricMap) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_map(m))


def load_map(path) -> TopoMetricMap:
    with open(path, "rb") as fh:
        return deserialize_map(fh.read())


def write_vocab(path, vocab: Vocabulary) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_vocabulary(vocab))


def load_vocab(path) -> Vocabulary:
    with open(path, "rb") as fh:
        return deserialize_vocabulary(fh.read())


def find_vocab_for(map_path) -> str:
    """Vocabulary lookup convention: vocab.vtrvoc beside the map, or the
    map's own name with a .vtrvoc extension."""
    directory = os.path.dirname(os.path.abspath(map_path))
    sibling = os.path.join(directory, "vocab.vtrvoc")
    if os.path.exists(sibling):
        return sibling
    stem = os.path.splitext(map_path)[0] + ".vtrvoc"
    if os.path.exists(stem):
        return stem
    raise FileNotFoundError(f"no vocabulary found beside {map_path}")


def _write_route(path, sc: Scenario) -> None:
    route = sample_route(sc.waypoints, spacing=0.05)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y\n")
        for x, y in route:
            fh.write(f"{x:.17g},{y:.17g}\n")


def write_teach_outputs(result: TeachResult, sc: Scenario, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_map(os.path.join(out_dir, "map.vtrmap"), result.m)
    write_vocab(os.path.join(out_dir, "vocab.vtrvoc"), result.vocab)
    write_trajectory(os.path.join(out_dir, "trajectory.csv"), result.path)
    _write_route(os.path.join(out_dir, "route.csv"), sc)
    with open(os.path.join(out_dir, "keyframes.csv"), "w", encoding="utf-8") as fh:
        fh.write("kf_id,x,y,theta\n")
        for kf_id in sorted(result.kf_poses):
            p = result.kf_poses[kf_id]
            fh.write(f"{kf_id},{p.x:.17g},{p.y:.17g},{p.theta:.17g}\n")
    report = {
        "scenario": sc.name,
        "keyframes": len(result.m),
        "loop_links": result.loop_links,
        "ticks": result.ticks,
        "route_length": route_length(sc.waypoints),
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)


def write_repeat_outputs(report: RunReport, m: TopoMetricMap, sc: Scenario,
                         out_dir, expansion: bool = True) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory(os.path.join(out_dir, "trajectory.csv"), report.path)
    _write_route(os.path.join(out_dir, "route.csv"), sc)
    with open(os.path.join(out_dir, "matches.csv"), "w", encoding="utf-8") as fh:
        fh.write("tick,kf_id,score,kf_x,kf_y\n")
        for (tick, kf_id, score), (gx, gy) in zip(report.matches, report.match_world_xy):
            fh.write(f"{tick},{kf_id},{score:.17g},{gx:.17g},{gy:.17g}\n")
    if expansion:
        write_map(os.path.join(out_dir, "map_expanded.vtrmap"), m)
    payload = {
        "scenario": report.scenario,
        "seed": report.seed,
        "end_point_distance": report.end_point_distance,
        "success": report.success,
        "terminated_by": report.terminated_by,
        "goal_staleness_max": report.goal_staleness_max,
        "match_count": len(report.matches),
        "attachments_added": report.attachments_added,
        "ticks": report.ticks,
        "success_radius": report.success_radius,
        "tick_ms_max": report.tick_ms_max,
        "chamfer_distance": report.chamfer_distance,
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
