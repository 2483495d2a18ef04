"""Map maintenance: post-teach clustering and repeat-time expansion.

Clustering walks the chain from the head, merging runs of visually similar
keyframes into the first keyframe of the run.  Merged 3-D points move into
the representative's camera frame through the composed base-frame chain and
the fixed camera mounting, and get reprojected there for windowed matching.
Expansion attaches unmatched repeat frames to their estimated nearest
keyframes without touching the goal chain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bow import Vocabulary, hamming_matrix, similarity, to_bow
from .geometry import Pose3, project_points
from .keyframe_map import ClusterLink, LowLevelFrame, TopoMetricMap
from .world import CameraConfig, Frame

log = logging.getLogger("vtrnav.map_ops")


@dataclass
class ClusterConfig:
    tau_cluster: float = 0.35
    max_points_per_keyframe: int = 600
    dedupe_radius_px: float = 2.0
    dedupe_hamming: int = 10

    def __post_init__(self) -> None:
        # tau above 1 is legal and means "never merge" (similarity tops out at 1).
        if self.tau_cluster <= 0.0:
            raise ValueError("tau_cluster must be positive")
        if self.max_points_per_keyframe < 1:
            raise ValueError("max_points_per_keyframe must be at least 1")
        if self.dedupe_radius_px < 0.0:
            raise ValueError("dedupe_radius_px must be non-negative")


@dataclass
class ExpansionConfig:
    min_match_interval: float = 1.0
    attach_bow: bool = True

    def __post_init__(self) -> None:
        if self.min_match_interval <= 0.0:
            raise ValueError("min_match_interval must be positive")


@dataclass
class MatchEvent:
    """One successful repeat-time match, as the expansion bookkeeping sees it."""

    time: float
    kf_id: int
    kf_cam_from_live_cam: Pose3


def _dedupe_and_cap(pixels: np.ndarray, descriptors: np.ndarray, points: np.ndarray,
                    cfg: ClusterConfig):
    """Collapse near-identical features onto the earliest occurrence, then cap.

    A feature is dropped when some kept earlier feature sits within the pixel
    radius and under the Hamming cutoff.  NaN-pixel features (points behind
    the representative's camera) never collide and are kept as bare points.
    """
    n = pixels.shape[0]
    kept_pix = np.empty((n, 2), dtype=np.float64)
    kept_desc = np.empty((n, 32), dtype=np.uint8)
    keep: list[int] = []
    r2 = cfg.dedupe_radius_px ** 2
    for j in range(n):
        k = len(keep)
        if k:
            with np.errstate(invalid="ignore"):
                close = ((kept_pix[:k] - pixels[j]) ** 2).sum(axis=1) <= r2
            if np.any(close):
                ham = hamming_matrix(descriptors[j], kept_desc[:k][close]).ravel()
                if np.any(ham < cfg.dedupe_hamming):
                    continue
        kept_pix[k] = pixels[j]
        kept_desc[k] = descriptors[j]
        keep.append(j)
    keep = keep[: cfg.max_points_per_keyframe]
    return pixels[keep], descriptors[keep], points[keep]


def reduce_redundancy(m: TopoMetricMap, vocab: Vocabulary, cfg: ClusterConfig,
                      camera: CameraConfig) -> dict[int, int]:
    """Merge similar keyframe runs in place.  Returns {erased id: representative}.

    Similarity is always evaluated against the bow each keyframe had when the
    pass started, so the scan target does not drift as points accumulate.
    The tail keyframe is never merged (the route terminus must survive), and
    keyframes that already carry a cluster link or attachments act as segment
    boundaries, which makes a second pass at the same threshold a no-op.
    """
    if len(m) < 2:
        return {}
    original_bow = {}
    for kf in m.alive_keyframes():
        if kf.bow is None:
            raise ValueError(f"keyframe {kf.kf_id} has no bow vector; run teach first")
        original_bow[kf.kf_id] = kf.bow

    cam_from_base = camera.cam_from_base
    base_from_cam = cam_from_base.inverse()
    tail = m.tail_id
    merged_into: dict[int, int] = {}
    rep_from_merged_rel: dict[int, Pose3] = {}

    rep_id = m.head_id
    while rep_id != tail:
        rep = m.get(rep_id)
        run: list[tuple[int, Pose3]] = []  # (merged id, rep_base_from_id_base)
        acc = Pose3.identity()
        closed = rep.cluster_link is not None or bool(rep.attached)
        cur = m.next_alive(rep_id)
        while True:
            cur_kf = m.get(cur)
            acc = acc.compose(cur_kf.t_prev)
            boundary = (cur == tail or closed
                        or cur_kf.cluster_link is not None or bool(cur_kf.attached))
            if boundary or similarity(original_bow[rep_id], original_bow[cur]) < cfg.tau_cluster:
                break
            run.append((cur, acc))
            cur = m.next_alive(cur)
        if run:
            pixels = [rep.pixels.astype(np.float64)]
            descs = [rep.descriptors]
            points = [rep.points]
            for merged_id, rep_from_merged in run:
                merged = m.get(merged_id)
                to_rep_cam = cam_from_base.compose(rep_from_merged).compose(base_from_cam)
                moved = to_rep_cam.apply(merged.points)
                pix, _ = project_points(camera.intrinsics, moved)
                pixels.append(pix)
                descs.append(merged.descriptors)
                points.append(moved)
            all_pix = np.concatenate(pixels, axis=0)
            all_desc = np.concatenate(descs, axis=0)
            all_pts = np.concatenate(points, axis=0)
            all_pix, all_desc, all_pts = _dedupe_and_cap(all_pix, all_desc, all_pts, cfg)
            rep.pixels = all_pix.astype(np.float32)
            rep.descriptors = all_desc
            rep.points = all_pts
            rep.bow = to_bow(vocab, rep.descriptors)
            rep.cluster_link = ClusterLink(cur, acc)
            for merged_id, rep_from_merged in run:
                merged_into[merged_id] = rep_id
                rep_from_merged_rel[merged_id] = rep_from_merged
                m.erase(merged_id)
            log.debug("merged %d keyframes into %d, successor %d", len(run), rep_id, cur)
        rep_id = cur

    _remap_loop_links(m, merged_into, rep_from_merged_rel)
    m.bump_version()
    return merged_into


def _remap_loop_links(m: TopoMetricMap, merged_into: dict[int, int],
                      rep_from_merged_rel: dict[int, Pose3]) -> None:
    """Point loop links whose target was merged at the surviving representative.

    The stored pose maps source base into target base, so rebasing prepends
    the representative-from-target transform recorded during the merge.
    Links that would stop being strictly backward are dropped.
    """
    if not merged_into:
        return
    for kf in m.alive_keyframes():
        link = kf.loop_link
        if link is None or link.target not in merged_into:
            continue
        rep_id = merged_into[link.target]
        if rep_id >= kf.kf_id:
            kf.loop_link = None
            continue
        link.rel = rep_from_merged_rel[link.target].compose(link.rel)
        link.target = rep_id


def expand_map(
    m: TopoMetricMap,
    unmatched_frames: list[Frame],
    bracket: tuple[MatchEvent, MatchEvent],
    cfg: ExpansionConfig,
    camera: CameraConfig,
    vocab: Vocabulary | None = None,
) -> int:
    """Attach the frames between two successful matches to their nearest
    keyframes.  Returns the number of frames attached.

    Frame positions are propagated forward from the first match: its solved
    pose composed with each frame's accumulated odometry.  Candidate anchors
    are the alive keyframes of the bracketed chain segment.  The goal chain
    is never modified.
    """
    first, second = bracket
    if not unmatched_frames:
        return 0
    if second.time - first.time < cfg.min_match_interval:
        return 0
    if first.kf_id not in m or second.kf_id not in m or second.kf_id < first.kf_id:
        return 0

    cam_from_base = camera.cam_from_base
    base_from_cam = cam_from_base.inverse()

    segment = [i for i in m.alive_ids() if first.kf_id <= i <= second.kf_id]
    anchor_from_first = {
        kf_id: m.chain_transform(first.kf_id, kf_id).inverse() for kf_id in segment
    }
    first_from_live = base_from_cam.compose(first.kf_cam_from_live_cam).compose(cam_from_base)

    attached = 0
    odom = Pose3.identity()
    for frame in unmatched_frames:
        odom = odom.compose(frame.odom_delta)
        first_from_frame = first_from_live.compose(odom)
        best_id = None
        best_dist = np.inf
        best_rel = None
        for kf_id in segment:
            rel = anchor_from_first[kf_id].compose(first_from_frame)  # kf_base <- frame_base
            d = float(np.linalg.norm(rel.translation))
            if d < best_dist - 1e-12:
                best_id, best_dist, best_rel = kf_id, d, rel
        if best_id is None:
            continue
        anchor_offset = cam_from_base.compose(best_rel).compose(base_from_cam)
        bow = None
        if cfg.attach_bow and vocab is not None and frame.count() > 0:
            bow = to_bow(vocab, frame.descriptors)
        m.get(best_id).attached.append(
            LowLevelFrame(
                pixels=frame.pixels.copy(),
                descriptors=frame.descriptors.copy(),
                points=frame.points_cam.copy(),
                anchor_offset=anchor_offset,
                bow=bow,
            )
        )
        attached += 1
    if attached:
        m.bump_version()
    return attached
