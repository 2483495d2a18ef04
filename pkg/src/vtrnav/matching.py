"""Windowed 3D-2D correspondence search between map features and a live frame.

Each map feature looks for live features inside a circular pixel window and
takes the closest descriptor under a Hamming budget.  Live features are
claimed exclusively: map features are visited in index order, so on a clash
the lower index wins and the later feature falls back to its next-best
unclaimed candidate.  A grid filter then thins the raw matches to at most
one per image cell so the solver sees a spatially even spread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bow import hamming_matrix


@dataclass
class MatchConfig:
    gamma: float = 40.0  # window radius, pixels
    tau_hamming: int = 40
    grid_cols: int = 8
    grid_rows: int = 6

    def __post_init__(self) -> None:
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if not 0 <= self.tau_hamming <= 256:
            raise ValueError("tau_hamming must be in [0, 256]")
        if self.grid_cols < 1 or self.grid_rows < 1:
            raise ValueError("grid dimensions must be at least 1")


@dataclass
class Correspondence:
    """A matched pair: map point (keyframe camera frame) and live pixel."""

    point: np.ndarray  # (3,) float64
    pixel: np.ndarray  # (2,) float64, live frame
    hamming: int
    map_index: int
    live_index: int


def match(
    map_pixels: np.ndarray,
    map_descriptors: np.ndarray,
    map_points: np.ndarray,
    live_pixels: np.ndarray,
    live_descriptors: np.ndarray,
    cfg: MatchConfig,
) -> list[Correspondence]:
    """Greedy windowed matching; deterministic for fixed inputs.

    Map features with NaN pixels (merged points that fell behind the camera)
    can never satisfy the window test and drop out naturally.
    """
    n_map = map_pixels.shape[0]
    n_live = live_pixels.shape[0]
    if n_map == 0 or n_live == 0:
        return []
    diff = map_pixels[:, None, :].astype(np.float64) - live_pixels[None, :, :]
    with np.errstate(invalid="ignore"):
        in_window = (diff ** 2).sum(axis=2) < cfg.gamma ** 2
    ham = hamming_matrix(map_descriptors, live_descriptors)
    usable = in_window & (ham <= cfg.tau_hamming)

    claimed = np.zeros(n_live, dtype=bool)
    out: list[Correspondence] = []
    for n in range(n_map):
        cand = np.flatnonzero(usable[n])
        if cand.size == 0:
            continue
        # Ties on distance resolve to the lowest live index.
        for k in cand[np.lexsort((cand, ham[n, cand]))]:
            if not claimed[k]:
                claimed[k] = True
                out.append(
                    Correspondence(
                        point=np.array(map_points[n], dtype=np.float64),
                        pixel=np.array(live_pixels[k], dtype=np.float64),
                        hamming=int(ham[n, k]),
                        map_index=n,
                        live_index=int(k),
                    )
                )
                break
    return out


def grid_filter(
    correspondences: list[Correspondence],
    cfg: MatchConfig,
    image_size: tuple[int, int],
) -> list[Correspondence]:
    """Keep the minimum-Hamming correspondence per grid cell, row-major order.

    Ties inside a cell resolve to the lowest map index.  Pixels on or past
    the image edge clamp into the boundary cells.
    """
    if not correspondences:
        return []
    width, height = image_size
    if width <= 0 or height <= 0:
        raise ValueError("image size must be positive")
    cell_w = width / cfg.grid_cols
    cell_h = height / cfg.grid_rows
    best: dict[tuple[int, int], Correspondence] = {}
    for c in correspondences:
        col = int(np.clip(c.pixel[0] // cell_w, 0, cfg.grid_cols - 1))
        row = int(np.clip(c.pixel[1] // cell_h, 0, cfg.grid_rows - 1))
        cur = best.get((row, col))
        if cur is None or (c.hamming, c.map_index) < (cur.hamming, cur.map_index):
            best[(row, col)] = c
    return [best[key] for key in sorted(best)]
