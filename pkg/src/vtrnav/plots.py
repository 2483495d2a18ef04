"""SVG figure output for run directories.

Files are plain hand-written SVG so there is no plotting dependency; every
emitter works from the CSVs a run leaves behind.  World y points up, SVG y
points down, so all drawing goes through one flip transform.
"""

from __future__ import annotations

import csv
import math
import os
from xml.sax.saxutils import escape

import numpy as np

from .geometry import Pose2
from .runner import load_map, read_trajectory

_STYLE = """
  .teach { fill: none; stroke: #888888; stroke-width: 2; stroke-dasharray: 6 4; }
  .repeat { fill: none; stroke: #c0392b; stroke-width: 2; }
  .ray { stroke: #2980b9; stroke-width: 1; opacity: 0.55; }
  .chain { fill: none; stroke: #555555; stroke-width: 1.5; }
  .kf { fill: #2c3e50; }
  .att { fill: #27ae60; }
  .loop { stroke: #8e44ad; stroke-width: 1; stroke-dasharray: 3 3; }
  .marker { fill: #000000; }
  text { font-family: sans-serif; font-size: 13px; fill: #333333; }
"""


class _Canvas:
    """Accumulates SVG elements in world coordinates, renders at the end."""

    def __init__(self, width: int = 800, pad: float = 0.05):
        self.width = width
        self.pad = pad
        self.elements: list[str] = []
        self.xs: list[float] = []
        self.ys: list[float] = []

    def _track(self, xs, ys) -> None:
        self.xs.extend(float(v) for v in xs)
        self.ys.extend(float(v) for v in ys)

    def polyline(self, pts: np.ndarray, cls: str) -> None:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        if pts.shape[0] == 0:
            return
        self._track(pts[:, 0], pts[:, 1])
        coords = " ".join(f"{x:.4f},{-y:.4f}" for x, y in pts)
        self.elements.append(f'<polyline class="{cls}" points="{coords}"/>')

    def line(self, a, b, cls: str) -> None:
        self._track([a[0], b[0]], [a[1], b[1]])
        self.elements.append(
            f'<line class="{cls}" x1="{a[0]:.4f}" y1="{-a[1]:.4f}" '
            f'x2="{b[0]:.4f}" y2="{-b[1]:.4f}"/>'
        )

    def circle(self, center, r: float, cls: str) -> None:
        self._track([center[0]], [center[1]])
        self.elements.append(
            f'<circle class="{cls}" cx="{center[0]:.4f}" cy="{-center[1]:.4f}" r="{r:.4f}"/>'
        )

    def render(self, title: str) -> str:
        if not self.xs:
            self.xs, self.ys = [0.0, 1.0], [0.0, 1.0]
        x0, x1 = min(self.xs), max(self.xs)
        y0, y1 = min(self.ys), max(self.ys)
        span_x = max(x1 - x0, 1e-6)
        span_y = max(y1 - y0, 1e-6)
        margin = self.pad * max(span_x, span_y)
        vx = x0 - margin
        vy = -(y1 + margin)  # flipped axis: top of the box is max world y
        vw = span_x + 2 * margin
        vh = span_y + 2 * margin
        height = int(round(self.width * vh / vw))
        scale = vw / self.width  # world units per pixel, for stroke sizing
        body = "\n".join(self.elements)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{height}" viewBox="{vx:.4f} {vy:.4f} {vw:.4f} {vh:.4f}">\n'
            f"<title>{escape(title)}</title>\n"
            f'<style>{_STYLE}\n  * {{ vector-effect: non-scaling-stroke; }}\n</style>\n'
            f'<text x="{vx + 0.5 * scale * 10:.4f}" y="{vy + 20 * scale:.4f}" '
            f'font-size="{16 * scale:.4f}">{escape(title)}</text>\n'
            f"{body}\n</svg>\n"
        )


def _read_matches(path):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                (int(row["tick"]), int(row["kf_id"]), float(row["score"]),
                 float(row["kf_x"]), float(row["kf_y"]))
            )
    return rows


def plot_trajectories(run_dir, out_path) -> str:
    """Taught route vs. driven path."""
    canvas = _Canvas()
    route_path = os.path.join(run_dir, "route.csv")
    if os.path.exists(route_path):
        route = np.loadtxt(route_path, delimiter=",", skiprows=1, ndmin=2)
        canvas.polyline(route, "teach")
    traj = read_trajectory(os.path.join(run_dir, "trajectory.csv"))
    canvas.polyline(traj[:, 1:3], "repeat")
    canvas.circle(traj[0, 1:3], 0.08, "marker")
    canvas.circle(traj[-1, 1:3], 0.08, "marker")
    svg = canvas.render("taught route (dashed) vs. driven path")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return out_path


def plot_loop_rays(run_dir, out_path) -> str:
    """Driven path with one ray per accepted loop match."""
    canvas = _Canvas()
    traj = read_trajectory(os.path.join(run_dir, "trajectory.csv"))
    canvas.polyline(traj[:, 1:3], "repeat")
    matches_path = os.path.join(run_dir, "matches.csv")
    n_rays = 0
    if os.path.exists(matches_path):
        # Trajectory row index is the tick: one row is appended per tick.
        for tick, _, _, gx, gy in _read_matches(matches_path):
            src = traj[min(tick, traj.shape[0] - 1), 1:3]
            canvas.line(src, (gx, gy), "ray")
            n_rays += 1
    svg = canvas.render(f"loop matches ({n_rays} rays)")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return out_path


def plot_map_overlay(run_dir, out_path) -> str:
    """Dead-reckoned keyframe chain with attachments and loop links.

    The map has no global frame; poses here are the fold of successor
    transforms from the first alive keyframe, good enough to look at.
    """
    map_path = os.path.join(run_dir, "map_expanded.vtrmap")
    if not os.path.exists(map_path):
        map_path = os.path.join(run_dir, "map.vtrmap")
    m = load_map(map_path)
    canvas = _Canvas()

    poses: dict[int, Pose2] = {}
    alive = m.alive_ids()
    cur = Pose2()
    poses[alive[0]] = cur
    for a, b in zip(alive[:-1], alive[1:]):
        rel = m.chain_transform(a, b)  # a_base from b_base
        t = rel.translation
        yaw = math.atan2(rel.rotation[1, 0], rel.rotation[0, 0])
        cur = cur.compose(Pose2(float(t[0]), float(t[1]), yaw))
        poses[b] = cur

    canvas.polyline(np.array([[p.x, p.y] for p in poses.values()]), "chain")
    for kf in m.alive_keyframes():
        p = poses[kf.kf_id]
        canvas.circle((p.x, p.y), 0.07, "kf")
        for att in kf.attached:
            off = att.anchor_offset.translation  # frame origin in anchor cam
            # camera x is base -y, camera z is base x (forward)
            dx, dy = float(off[2]), float(-off[0])
            c, s = math.cos(p.theta), math.sin(p.theta)
            canvas.circle((p.x + c * dx - s * dy, p.y + s * dx + c * dy), 0.045, "att")
        if kf.loop_link is not None and kf.loop_link.target in poses:
            q = poses[kf.loop_link.target]
            canvas.line((p.x, p.y), (q.x, q.y), "loop")
    svg = canvas.render("keyframe chain, attachments, loop links")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return out_path


def emit_plots(run_dir, out_dir=None) -> list[str]:
    """Write every figure the directory has data for; returns written paths."""
    out_dir = run_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    written = [plot_trajectories(run_dir, os.path.join(out_dir, "trajectories.svg"))]
    written.append(plot_loop_rays(run_dir, os.path.join(out_dir, "loop_rays.svg")))
    if os.path.exists(os.path.join(run_dir, "map.vtrmap")) or os.path.exists(
        os.path.join(run_dir, "map_expanded.vtrmap")
    ):
        written.append(plot_map_overlay(run_dir, os.path.join(out_dir, "map_overlay.svg")))
    return written
