"""Topo-metric keyframe chain: relative transforms only, no global poses.

Each keyframe stores its transform from the predecessor keyframe (robot base
frame), its feature pixels and descriptors, the matching 3-D points in its
own camera frame, optional loop and cluster links, and any low-level frames
attached by map expansion.  The binary map format is VTRMAP/1.
"""

from __future__ import annotations

import logging
import struct
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .bow import BowVector
from .geometry import Pose3

log = logging.getLogger("vtrnav.map")

MAP_MAGIC = b"VTRMAP01"
DESCRIPTOR_WIDTH_BITS = 256
_DESC_BYTES = DESCRIPTOR_WIDTH_BITS // 8


class MapFormatError(ValueError):
    pass


@dataclass
class LoopLink:
    """Teach-time loop closure: ``rel`` maps this keyframe's base frame into
    the (earlier) target keyframe's base frame."""

    target: int
    rel: Pose3


@dataclass
class ClusterLink:
    """Chain shortcut to the next representative: ``rel`` maps the successor's
    base frame into this keyframe's base frame."""

    target: int
    rel: Pose3


@dataclass
class LowLevelFrame:
    """A repeat-pass frame attached to a keyframe by map expansion.

    Points live in the attached frame's own camera frame; ``anchor_offset``
    maps them into the anchor keyframe's camera frame.
    """

    pixels: np.ndarray  # (N, 2) float32
    descriptors: np.ndarray  # (N, 32) uint8
    points: np.ndarray  # (N, 3) float64
    anchor_offset: Pose3
    bow: BowVector | None = None


@dataclass
class Keyframe:
    kf_id: int
    t_prev: Pose3  # predecessor base frame from this base frame
    pixels: np.ndarray  # (N, 2) float32
    descriptors: np.ndarray  # (N, 32) uint8
    points: np.ndarray  # (N, 3) float64, this keyframe's camera frame
    bow: BowVector | None = None
    loop_link: LoopLink | None = None
    cluster_link: ClusterLink | None = None
    attached: list[LowLevelFrame] = field(default_factory=list)

    def feature_count(self) -> int:
        return self.pixels.shape[0]


class TopoMetricMap:
    """Ordered keyframe store with erase-by-tombstone and a bow row cache."""

    def __init__(self) -> None:
        self._keyframes: dict[int, Keyframe] = {}
        self._alive: list[int] = []  # sorted
        self._alive_set: set[int] = set()
        self.vocab_hash: int = 0
        self._version = 0
        self._bow_cache: dict[bool, tuple[int, np.ndarray, list]] = {}

    # -- bookkeeping

    def bump_version(self) -> None:
        self._version += 1

    def __len__(self) -> int:
        return len(self._alive)

    def __contains__(self, kf_id: int) -> bool:
        return kf_id in self._alive_set

    def alive_ids(self) -> list[int]:
        return list(self._alive)

    def alive_keyframes(self):
        return [self._keyframes[i] for i in self._alive]

    @property
    def head_id(self) -> int:
        if not self._alive:
            raise ValueError("empty map has no head")
        return self._alive[0]

    @property
    def tail_id(self) -> int:
        if not self._alive:
            raise ValueError("empty map has no tail")
        return self._alive[-1]

    def get(self, kf_id: int) -> Keyframe:
        if kf_id not in self._keyframes or kf_id not in self._alive_set:
            raise KeyError(f"keyframe {kf_id} is not alive in this map")
        return self._keyframes[kf_id]

    # -- construction

    def insert(self, kf: Keyframe) -> None:
        if self._alive and kf.kf_id <= self._alive[-1]:
            raise ValueError(
                f"keyframe ids must increase: got {kf.kf_id} after {self._alive[-1]}"
            )
        if kf.kf_id in self._keyframes:
            raise ValueError(f"keyframe id {kf.kf_id} already present")
        self._keyframes[kf.kf_id] = kf
        self._alive.append(kf.kf_id)
        self._alive_set.add(kf.kf_id)
        self.bump_version()

    def erase(self, kf_id: int) -> None:
        """Tombstone a keyframe: it leaves the chain but the object remains."""
        self._alive.remove(kf_id)
        self._alive_set.discard(kf_id)
        self.bump_version()

    def attach_loop(self, src_id: int, target_id: int, rel: Pose3) -> None:
        if src_id == target_id:
            raise ValueError("a keyframe cannot loop onto itself")
        if target_id >= src_id:
            raise ValueError("loop targets must be earlier keyframes")
        src = self.get(src_id)
        self.get(target_id)  # must be alive
        src.loop_link = LoopLink(target_id, rel)
        self.bump_version()

    # -- chain walking

    def next_alive(self, kf_id: int) -> int | None:
        ids = self._alive
        pos = bisect_left(ids, kf_id)
        if pos >= len(ids) or ids[pos] != kf_id:
            raise KeyError(f"keyframe {kf_id} is not alive in this map")
        return ids[pos + 1] if pos + 1 < len(ids) else None

    def successor(self, kf_id: int) -> tuple[int, Pose3] | None:
        """Next chain node and the transform this_base_from_next_base."""
        kf = self.get(kf_id)
        if kf.cluster_link is not None:
            return kf.cluster_link.target, kf.cluster_link.rel
        nxt = self.next_alive(kf_id)
        if nxt is None:
            return None
        return nxt, self.get(nxt).t_prev

    def chain_transform(self, from_id: int, to_id: int) -> Pose3:
        """Compose successor transforms: from_id base frame <- to_id base frame."""
        if from_id == to_id:
            self.get(from_id)
            return Pose3.identity()
        out = Pose3.identity()
        cur = from_id
        while cur != to_id:
            step = self.successor(cur)
            if step is None:
                raise ValueError(f"no chain path from {from_id} to {to_id}")
            cur, rel = step
            out = out.compose(rel)
        return out

    def validate(self) -> None:
        """Head-to-tail reachability plus link direction invariants."""
        if not self._alive:
            return
        cur = self.head_id
        visited = [cur]
        while cur != self.tail_id:
            step = self.successor(cur)
            if step is None or step[0] <= cur or step[0] not in self._alive_set:
                raise ValueError(f"chain breaks at keyframe {cur}")
            cur = step[0]
            visited.append(cur)
        alive = self._alive_set
        for kf_id in visited:
            kf = self._keyframes[kf_id]
            if kf.loop_link is not None:
                if kf.loop_link.target >= kf_id or kf.loop_link.target not in alive:
                    raise ValueError(f"bad loop link on keyframe {kf_id}")
            if kf.cluster_link is not None and kf.cluster_link.target not in alive:
                raise ValueError(f"dangling cluster link on keyframe {kf_id}")

    # -- bow rows for place recognition

    def bow_rows(self, include_attachments: bool = True):
        """Stacked dense bow matrix plus (kf_id, attachment_index) owners."""
        cached = self._bow_cache.get(include_attachments)
        if cached is not None and cached[0] == self._version:
            return cached[1], cached[2]
        rows: list[np.ndarray] = []
        owners: list[tuple[int, int | None]] = []
        for kf_id in self._alive:
            kf = self._keyframes[kf_id]
            if kf.bow is None:
                raise ValueError(f"keyframe {kf_id} has no bow vector")
            rows.append(kf.bow.dense())
            owners.append((kf_id, None))
            if include_attachments:
                for j, att in enumerate(kf.attached):
                    if att.bow is not None and not att.bow.is_empty():
                        rows.append(att.bow.dense())
                        owners.append((kf_id, j))
        matrix = np.stack(rows) if rows else np.zeros((0, 0))
        self._bow_cache[include_attachments] = (self._version, matrix, owners)
        return matrix, owners


def combined_features(kf: Keyframe):
    """Keyframe features plus attachment features, attachment points pushed
    into the keyframe camera frame.  Returns (pixels, descriptors, points)."""
    pixels = [kf.pixels]
    descs = [kf.descriptors]
    points = [kf.points]
    for att in kf.attached:
        pixels.append(att.pixels)
        descs.append(att.descriptors)
        points.append(att.anchor_offset.apply(att.points))
    return (
        np.concatenate(pixels, axis=0),
        np.concatenate(descs, axis=0),
        np.concatenate(points, axis=0),
    )


class KeyframeRecorder:
    """Turns the teach frame stream into keyframes every ``cadence`` frames.

    Odometry deltas accumulate between keyframes so each new keyframe carries
    the composed transform from its predecessor.  Empty frames are skipped
    with a warning and the cadence slides to the next usable frame.
    """

    def __init__(self, cadence: int = 5):
        if cadence < 1:
            raise ValueError("cadence must be at least 1")
        self.cadence = cadence
        self._accum = Pose3.identity()
        self._since_last = 0
        self._next_id = 0
        self._started = False
        self._last_frame = None
        self._last_emitted = False

    def _emit(self, frame) -> Keyframe:
        kf = Keyframe(
            kf_id=self._next_id,
            t_prev=Pose3.identity() if self._next_id == 0 else self._accum,
            pixels=frame.pixels.copy(),
            descriptors=frame.descriptors.copy(),
            points=frame.points_cam.copy(),
        )
        self._next_id += 1
        self._accum = Pose3.identity()
        self._since_last = 0
        self._last_emitted = True
        return kf

    def observe(self, frame) -> Keyframe | None:
        self._accum = self._accum.compose(frame.odom_delta)
        self._last_frame = frame
        self._last_emitted = False
        due = (not self._started) or self._since_last + 1 >= self.cadence
        self._since_last += 1
        if not due:
            return None
        if frame.count() == 0:
            log.warning("frame %d has no features; keyframe deferred", frame.frame_id)
            return None
        self._started = True
        return self._emit(frame)

    def finalize(self) -> Keyframe | None:
        """Force a terminal keyframe at the last seen frame so the mapped
        route ends where the taught route ends."""
        if self._last_frame is None or self._last_emitted:
            return None
        if self._last_frame.count() == 0:
            log.warning("terminal frame has no features; tail keyframe dropped")
            return None
        return self._emit(self._last_frame)


# ---------------------------------------------------------------- VTRMAP/1


def _pack_pose(pose: Pose3) -> bytes:
    return struct.pack("<12d", *pose.rotation.reshape(9), *pose.translation)


def _unpack_pose(blob: bytes, offset: int) -> tuple[Pose3, int]:
    vals = struct.unpack_from("<12d", blob, offset)
    rot = np.array(vals[:9]).reshape(3, 3)
    return Pose3(rot, np.array(vals[9:])), offset + 96


_FEATURE_DTYPE = np.dtype([("u", "<f4"), ("v", "<f4"), ("d", "u1", (_DESC_BYTES,))])


def _pack_features(pixels: np.ndarray, descriptors: np.ndarray) -> bytes:
    n = pixels.shape[0]
    rows = np.empty(n, dtype=_FEATURE_DTYPE)
    rows["u"] = pixels[:, 0]
    rows["v"] = pixels[:, 1]
    rows["d"] = descriptors
    return struct.pack("<I", n) + rows.tobytes()


def _unpack_features(blob: bytes, offset: int):
    (n,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    need = n * _FEATURE_DTYPE.itemsize
    if offset + need > len(blob):
        raise MapFormatError("truncated feature block")
    rows = np.frombuffer(blob, dtype=_FEATURE_DTYPE, count=n, offset=offset)
    offset += need
    pixels = np.stack([rows["u"], rows["v"]], axis=1).astype(np.float32)
    descriptors = rows["d"].copy()
    return pixels, descriptors, offset


def serialize_map(m: TopoMetricMap) -> bytes:
    """VTRMAP/1 byte stream; erased keyframes are omitted entirely."""
    chunks = [
        MAP_MAGIC,
        struct.pack("<IIQ", len(m), DESCRIPTOR_WIDTH_BITS, m.vocab_hash),
    ]
    for kf in m.alive_keyframes():
        body = [struct.pack("<Q", kf.kf_id), _pack_pose(kf.t_prev)]
        body.append(_pack_features(kf.pixels, kf.descriptors))
        body.append(kf.points.astype(np.float64).tobytes())
        if kf.loop_link is None:
            body.append(struct.pack("<B", 0))
        else:
            body.append(struct.pack("<BQ", 1, kf.loop_link.target))
            body.append(_pack_pose(kf.loop_link.rel))
        if kf.cluster_link is None:
            body.append(struct.pack("<B", 0))
        else:
            body.append(struct.pack("<BQ", 1, kf.cluster_link.target))
            body.append(_pack_pose(kf.cluster_link.rel))
        body.append(struct.pack("<I", len(kf.attached)))
        for att in kf.attached:
            body.append(_pack_features(att.pixels, att.descriptors))
            body.append(att.points.astype(np.float64).tobytes())
            body.append(_pack_pose(att.anchor_offset))
        record = b"".join(body)
        chunks.append(struct.pack("<I", len(record)))
        chunks.append(record)
    return b"".join(chunks)


def deserialize_map(blob: bytes) -> TopoMetricMap:
    if blob[:8] != MAP_MAGIC:
        raise MapFormatError("not a map file (bad magic)")
    try:
        count, width, vocab_hash = struct.unpack_from("<IIQ", blob, 8)
    except struct.error as exc:
        raise MapFormatError("truncated map header") from exc
    if width != DESCRIPTOR_WIDTH_BITS:
        raise MapFormatError(f"unsupported descriptor width {width}")
    m = TopoMetricMap()
    m.vocab_hash = vocab_hash
    offset = 24
    for _ in range(count):
        try:
            (record_len,) = struct.unpack_from("<I", blob, offset)
        except struct.error as exc:
            raise MapFormatError("truncated map record header") from exc
        offset += 4
        end = offset + record_len
        if end > len(blob):
            raise MapFormatError("map record overruns the file")
        kf = _read_keyframe(blob, offset, end)
        m.insert(kf)
        offset = end
    if offset != len(blob):
        raise MapFormatError("trailing bytes after the last map record")
    _validate_links(m)
    return m


def _read_keyframe(blob: bytes, offset: int, end: int) -> Keyframe:
    (kf_id,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    t_prev, offset = _unpack_pose(blob, offset)
    pixels, descriptors, offset = _unpack_features(blob, offset)
    n = pixels.shape[0]
    points = (
        np.frombuffer(blob, dtype="<f8", count=3 * n, offset=offset).reshape(n, 3).copy()
    )
    offset += 24 * n
    kf = Keyframe(kf_id=int(kf_id), t_prev=t_prev, pixels=pixels, descriptors=descriptors, points=points)
    (flag,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    if flag:
        (target,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        rel, offset = _unpack_pose(blob, offset)
        kf.loop_link = LoopLink(int(target), rel)
    (flag,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    if flag:
        (target,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        rel, offset = _unpack_pose(blob, offset)
        kf.cluster_link = ClusterLink(int(target), rel)
    (n_att,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    for _ in range(n_att):
        apix, adesc, offset = _unpack_features(blob, offset)
        an = apix.shape[0]
        apts = (
            np.frombuffer(blob, dtype="<f8", count=3 * an, offset=offset).reshape(an, 3).copy()
        )
        offset += 24 * an
        anchor, offset = _unpack_pose(blob, offset)
        kf.attached.append(LowLevelFrame(apix, adesc, apts, anchor))
    if offset != end:
        raise MapFormatError(f"record length mismatch in keyframe {kf_id}")
    return kf


def _validate_links(m: TopoMetricMap) -> None:
    alive = set(m.alive_ids())
    for kf in m.alive_keyframes():
        if kf.loop_link is not None:
            if kf.loop_link.target not in alive or kf.loop_link.target >= kf.kf_id:
                raise MapFormatError(f"dangling loop link on keyframe {kf.kf_id}")
        if kf.cluster_link is not None:
            if kf.cluster_link.target not in alive or kf.cluster_link.target <= kf.kf_id:
                raise MapFormatError(f"dangling cluster link on keyframe {kf.kf_id}")


def structurally_equal(a: TopoMetricMap, b: TopoMetricMap) -> bool:
    """Field-for-field equality of everything the byte format stores."""
    if a.alive_ids() != b.alive_ids() or a.vocab_hash != b.vocab_hash:
        return False
    for ka, kb in zip(a.alive_keyframes(), b.alive_keyframes()):
        if ka.kf_id != kb.kf_id:
            return False
        if not _pose_eq(ka.t_prev, kb.t_prev):
            return False
        if not (
            np.array_equal(ka.pixels, kb.pixels, equal_nan=True)
            and np.array_equal(ka.descriptors, kb.descriptors)
            and np.array_equal(ka.points, kb.points, equal_nan=True)
        ):
            return False
        for la, lb in ((ka.loop_link, kb.loop_link), (ka.cluster_link, kb.cluster_link)):
            if (la is None) != (lb is None):
                return False
            if la is not None and (la.target != lb.target or not _pose_eq(la.rel, lb.rel)):
                return False
        if len(ka.attached) != len(kb.attached):
            return False
        for aa, ab in zip(ka.attached, kb.attached):
            if not (
                np.array_equal(aa.pixels, ab.pixels, equal_nan=True)
                and np.array_equal(aa.descriptors, ab.descriptors)
                and np.array_equal(aa.points, ab.points, equal_nan=True)
                and _pose_eq(aa.anchor_offset, ab.anchor_offset)
            ):
                return False
    return True


def _pose_eq(a: Pose3, b: Pose3) -> bool:
    return np.array_equal(a.rotation, b.rotation) and np.array_equal(
        a.translation, b.translation
    )
