"""Figure emission tests: every SVG must be well-formed XML and reflect the
run data it was drawn from."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from vtrnav.plots import emit_plots, plot_loop_rays, plot_map_overlay, plot_trajectories
from vtrnav.runner import (
    rebind_vocabulary,
    run_repeat,
    run_teach,
    write_teach_outputs,
)
from vtrnav.keyframe_map import deserialize_map, serialize_map
from vtrnav.scenario import LandmarkSpec, Scenario

SVG = "{http://www.w3.org/2000/svg}"


def scenario() -> Scenario:
    return Scenario(name="plots", seed=4,
                    waypoints=np.array([[0.0, 0.0], [8.0, 0.0]]),
                    landmarks=LandmarkSpec(count=400, seed=4))


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    sc = scenario()
    res = run_teach(sc)
    m = deserialize_map(serialize_map(res.m))
    rebind_vocabulary(m, res.vocab)
    out = tmp_path_factory.mktemp("run")
    rep = run_repeat(m, res.vocab, sc, seed=60, expansion=True, out_dir=out)
    return out, rep


def svg_root(path) -> ET.Element:
    return ET.parse(path).getroot()


def test_trajectories_svg_holds_both_paths(run_dir):
    out, _ = run_dir
    path = plot_trajectories(out, out / "trajectories.svg")
    root = svg_root(path)
    polys = root.findall(f"{SVG}polyline")
    classes = {p.get("class") for p in polys}
    assert {"teach", "repeat"} <= classes
    assert len(root.findall(f"{SVG}circle")) == 2  # start and end markers


def test_loop_rays_svg_one_line_per_match(run_dir):
    out, rep = run_dir
    path = plot_loop_rays(out, out / "loop_rays.svg")
    root = svg_root(path)
    rays = [el for el in root.findall(f"{SVG}line") if el.get("class") == "ray"]
    assert len(rays) == len(rep.matches)
    title = root.find(f"{SVG}title")
    assert f"{len(rep.matches)} rays" in title.text


def test_map_overlay_svg_marks_every_keyframe(run_dir):
    out, _ = run_dir
    m = deserialize_map((out / "map_expanded.vtrmap").read_bytes())
    path = plot_map_overlay(out, out / "map_overlay.svg")
    root = svg_root(path)
    kf_dots = [el for el in root.findall(f"{SVG}circle") if el.get("class") == "kf"]
    att_dots = [el for el in root.findall(f"{SVG}circle") if el.get("class") == "att"]
    assert len(kf_dots) == len(m)
    assert len(att_dots) == sum(len(kf.attached) for kf in m.alive_keyframes())


def test_emit_plots_writes_all_figures(run_dir):
    out, _ = run_dir
    written = emit_plots(out)
    names = {p.split("/")[-1] for p in map(str, written)}
    assert names == {"trajectories.svg", "loop_rays.svg", "map_overlay.svg"}
    for p in written:
        svg_root(p)  # parses as XML


def test_emit_plots_without_map_skips_overlay(tmp_path):
    sc = scenario()
    res = run_teach(sc)
    write_teach_outputs(res, sc, tmp_path)
    (tmp_path / "map.vtrmap").unlink()
    written = emit_plots(tmp_path)
    names = {str(p).split("/")[-1] for p in written}
    assert "map_overlay.svg" not in names
    assert "trajectories.svg" in names


def test_viewbox_covers_route(run_dir):
    out, _ = run_dir
    path = plot_trajectories(out, out / "vb.svg")
    root = svg_root(path)
    vx, vy, vw, vh = (float(v) for v in root.get("viewBox").split())
    # Route spans x in [0, 8] at y near 0 (flipped to -y in SVG space).
    assert vx <= 0.0 and vx + vw >= 8.0
    assert vy <= 0.0 <= vy + vh
