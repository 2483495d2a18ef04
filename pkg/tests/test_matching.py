"""Matching unit tests.

The main oracle is an independent brute-force matcher written with scalar
loops and int.bit_count, exercised against random scenes.  Window and
threshold edges are probed with hand-placed features.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from vtrnav.matching import Correspondence, MatchConfig, grid_filter, match


def random_scene(rng: np.random.Generator, n_map: int, n_live: int):
    map_pix = rng.uniform(0, 640, size=(n_map, 2)).astype(np.float32)
    map_desc = rng.integers(0, 256, size=(n_map, 32), dtype=np.uint8)
    map_pts = rng.uniform(-5, 5, size=(n_map, 3))
    live_pix = rng.uniform(0, 640, size=(n_live, 2)).astype(np.float32)
    live_desc = rng.integers(0, 256, size=(n_live, 32), dtype=np.uint8)
    return map_pix, map_desc, map_pts, live_pix, live_desc


def brute_force_match(map_pix, map_desc, map_pts, live_pix, live_desc, cfg):
    """Same contract, different machinery: scalar loops and byte popcounts."""
    claimed = set()
    out = []
    for n in range(len(map_pix)):
        cands = []
        for k in range(len(live_pix)):
            du = float(map_pix[n, 0]) - float(live_pix[k, 0])
            dv = float(map_pix[n, 1]) - float(live_pix[k, 1])
            if math.isnan(du) or math.isnan(dv):
                continue
            if math.hypot(du, dv) >= cfg.gamma:
                continue
            d = sum((int(a) ^ int(b)).bit_count() for a, b in zip(map_desc[n], live_desc[k]))
            if d <= cfg.tau_hamming:
                cands.append((d, k))
        for d, k in sorted(cands):
            if k not in claimed:
                claimed.add(k)
                out.append((n, k, d))
                break
    return out


def desc_with_bits(n_bits: int) -> np.ndarray:
    d = np.zeros(32, dtype=np.uint8)
    full, rem = divmod(n_bits, 8)
    d[:full] = 0xFF
    if rem:
        d[full] = (1 << rem) - 1
    return d


# ---------------------------------------------------------------- match


def test_identical_frame_matches_everything_exactly():
    rng = np.random.default_rng(0)
    map_pix, map_desc, map_pts, _, _ = random_scene(rng, 15, 0)
    got = match(map_pix, map_desc, map_pts, map_pix, map_desc, MatchConfig())
    assert len(got) == 15
    for n, c in enumerate(got):
        assert c.map_index == n
        assert c.live_index == n
        assert c.hamming == 0
        assert np.allclose(c.pixel, map_pix[n])
        assert np.allclose(c.point, map_pts[n])


def test_feature_outside_window_is_dropped():
    cfg = MatchConfig(gamma=40.0)
    map_pix = np.array([[100.0, 100.0]], dtype=np.float32)
    desc = np.zeros((1, 32), dtype=np.uint8)
    pts = np.zeros((1, 3))
    live = np.array([[180.0, 100.0]], dtype=np.float32)  # 2 gamma away
    assert match(map_pix, desc, pts, live, desc, cfg) == []


def test_window_edge_is_strict():
    cfg = MatchConfig(gamma=40.0)
    desc = np.zeros((1, 32), dtype=np.uint8)
    pts = np.zeros((1, 3))
    map_pix = np.array([[100.0, 100.0]], dtype=np.float32)
    on_edge = np.array([[140.0, 100.0]], dtype=np.float32)
    just_in = np.array([[139.9, 100.0]], dtype=np.float32)
    assert match(map_pix, desc, pts, on_edge, desc, cfg) == []
    assert len(match(map_pix, desc, pts, just_in, desc, cfg)) == 1


def test_hamming_threshold_is_inclusive():
    cfg = MatchConfig(tau_hamming=40)
    map_pix = np.array([[100.0, 100.0]], dtype=np.float32)
    pts = np.zeros((1, 3))
    zero = np.zeros((1, 32), dtype=np.uint8)
    at_tau = desc_with_bits(40)[None, :]
    over_tau = desc_with_bits(41)[None, :]
    got = match(map_pix, zero, pts, map_pix, at_tau, cfg)
    assert len(got) == 1 and got[0].hamming == 40
    assert match(map_pix, zero, pts, map_pix, over_tau, cfg) == []


def test_lowest_map_index_wins_and_loser_falls_back():
    # Both map features prefer live 0; map 0 takes it, map 1 gets live 1.
    cfg = MatchConfig(gamma=40.0, tau_hamming=40)
    map_pix = np.array([[100.0, 100.0], [102.0, 100.0]], dtype=np.float32)
    map_desc = np.stack([desc_with_bits(0), desc_with_bits(0)])
    pts = np.zeros((2, 3))
    live_pix = np.array([[101.0, 100.0], [99.0, 100.0]], dtype=np.float32)
    live_desc = np.stack([desc_with_bits(2), desc_with_bits(10)])
    got = match(map_pix, map_desc, pts, live_pix, live_desc, cfg)
    assert [(c.map_index, c.live_index, c.hamming) for c in got] == [(0, 0, 2), (1, 1, 10)]


def test_match_equals_brute_force_oracle():
    cfg = MatchConfig(gamma=60.0, tau_hamming=120)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        map_pix, map_desc, map_pts, live_pix, live_desc = random_scene(rng, 20, 25)
        got = match(map_pix, map_desc, map_pts, live_pix, live_desc, cfg)
        want = brute_force_match(map_pix, map_desc, map_pts, live_pix, live_desc, cfg)
        assert [(c.map_index, c.live_index, c.hamming) for c in got] == want


def test_no_live_feature_claimed_twice():
    cfg = MatchConfig(gamma=640.0, tau_hamming=256)
    rng = np.random.default_rng(42)
    map_pix, map_desc, map_pts, live_pix, live_desc = random_scene(rng, 40, 10)
    got = match(map_pix, map_desc, map_pts, live_pix, live_desc, cfg)
    lives = [c.live_index for c in got]
    assert len(lives) == len(set(lives)) == 10


def test_output_pixels_stay_inside_window():
    cfg = MatchConfig(gamma=50.0, tau_hamming=256)
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        map_pix, map_desc, map_pts, live_pix, live_desc = random_scene(rng, 30, 30)
        for c in match(map_pix, map_desc, map_pts, live_pix, live_desc, cfg):
            assert np.linalg.norm(c.pixel - map_pix[c.map_index]) < cfg.gamma


def test_nan_map_pixels_are_skipped():
    cfg = MatchConfig()
    map_pix = np.array([[np.nan, np.nan], [100.0, 100.0]], dtype=np.float32)
    desc = np.zeros((2, 32), dtype=np.uint8)
    pts = np.arange(6, dtype=np.float64).reshape(2, 3)
    live = np.array([[100.0, 100.0]], dtype=np.float32)
    got = match(map_pix, desc, pts, live, desc[:1], cfg)
    assert [(c.map_index, c.live_index) for c in got] == [(1, 0)]


def test_empty_inputs_give_empty_output():
    cfg = MatchConfig()
    empty_pix = np.zeros((0, 2), dtype=np.float32)
    empty_desc = np.zeros((0, 32), dtype=np.uint8)
    empty_pts = np.zeros((0, 3))
    live = np.array([[1.0, 1.0]], dtype=np.float32)
    ldesc = np.zeros((1, 32), dtype=np.uint8)
    assert match(empty_pix, empty_desc, empty_pts, live, ldesc, cfg) == []
    assert match(live, ldesc, np.zeros((1, 3)), empty_pix, empty_desc, cfg) == []


def test_match_config_validation():
    with pytest.raises(ValueError):
        MatchConfig(gamma=0.0)
    with pytest.raises(ValueError):
        MatchConfig(tau_hamming=-1)
    with pytest.raises(ValueError):
        MatchConfig(tau_hamming=300)
    with pytest.raises(ValueError):
        MatchConfig(grid_cols=0)


# ---------------------------------------------------------------- grid filter


def corr(u, v, ham, idx):
    return Correspondence(
        point=np.zeros(3), pixel=np.array([u, v], dtype=np.float64),
        hamming=ham, map_index=idx, live_index=idx,
    )


def test_grid_filter_keeps_singletons_row_major():
    cfg = MatchConfig(grid_cols=2, grid_rows=2)
    cors = [
        corr(500, 400, 3, 0),  # bottom right
        corr(10, 10, 5, 1),    # top left
        corr(500, 10, 1, 2),   # top right
    ]
    got = grid_filter(cors, cfg, (640, 480))
    assert [c.map_index for c in got] == [1, 2, 0]


def test_grid_filter_single_cell_keeps_min_hamming():
    cfg = MatchConfig(grid_cols=8, grid_rows=6)
    rng = np.random.default_rng(1)
    hams = rng.permutation(10) + 1
    cors = [corr(5 + i, 5, int(h), i) for i, h in enumerate(hams)]
    got = grid_filter(cors, cfg, (640, 480))
    assert len(got) == 1
    assert got[0].hamming == 1


def test_grid_filter_tie_takes_lowest_map_index():
    cfg = MatchConfig(grid_cols=1, grid_rows=1)
    got = grid_filter([corr(10, 10, 7, 4), corr(20, 20, 7, 2)], cfg, (640, 480))
    assert [c.map_index for c in got] == [2]


def test_grid_filter_empty_and_bounds():
    cfg = MatchConfig(grid_cols=8, grid_rows=6)
    assert grid_filter([], cfg, (640, 480)) == []
    # Edge pixels clamp into the last cell instead of indexing out of range.
    got = grid_filter([corr(640.0, 480.0, 1, 0)], cfg, (640, 480))
    assert len(got) == 1
    assert len(grid_filter([corr(0.0, 0.0, 1, 0)], cfg, (640, 480))) == 1


def test_grid_filter_output_bounded_by_cell_count():
    cfg = MatchConfig(grid_cols=3, grid_rows=2)
    rng = np.random.default_rng(2)
    cors = [corr(rng.uniform(0, 640), rng.uniform(0, 480), int(rng.integers(0, 50)), i)
            for i in range(100)]
    got = grid_filter(cors, cfg, (640, 480))
    assert len(got) <= 6
    # Each survivor is its cell's minimum.
    for c in got:
        col = int(c.pixel[0] // (640 / 3))
        row = int(c.pixel[1] // (480 / 2))
        cell = [o for o in cors
                if int(o.pixel[0] // (640 / 3)) == col and int(o.pixel[1] // (480 / 2)) == row]
        assert c.hamming == min(o.hamming for o in cell)
