"""Binary bag-of-words place recognition.

A small vocabulary tree is trained by hierarchical k-medians directly in
Hamming space (centroids are per-bit majorities), frames are quantized into
TF-IDF weighted word histograms, and similarity is the L1 form
``1 - 0.5 * sum |a - b|`` over L1-normalized vectors.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

DESCRIPTOR_BYTES = 32

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)

VOCAB_MAGIC = b"VTRVOC01"


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between (N, 32) and (M, 32) uint8 arrays."""
    a = np.ascontiguousarray(a, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
    b = np.ascontiguousarray(b, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
    # Popcount on uint64 words: 4 per descriptor instead of 32 byte lookups.
    aw = a.view(np.uint64)
    bw = b.view(np.uint64)
    return np.bitwise_count(aw[:, None, :] ^ bw[None, :, :]).sum(axis=2, dtype=np.uint64)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    return int(_POPCOUNT[np.asarray(a, dtype=np.uint8) ^ np.asarray(b, dtype=np.uint8)].sum())


def _majority_centroid(descs: np.ndarray) -> np.ndarray:
    """Per-bit majority; exact ties resolve to 0."""
    bits = np.unpackbits(descs, axis=1)
    ones = bits.sum(axis=0)
    return np.packbits(ones * 2 > descs.shape[0])


def _kmedians(
    descs: np.ndarray, k: int, rng: np.random.Generator, max_iters: int = 15
) -> tuple[np.ndarray, np.ndarray]:
    """k-medians in Hamming space.  Returns (centroids, assignment).

    Initial centroids are drawn without replacement from the distinct
    descriptors, so the procedure is deterministic for a given generator.
    Empty clusters are dropped.
    """
    unique = np.unique(descs, axis=0)
    k = min(k, unique.shape[0])
    pick = rng.choice(unique.shape[0], size=k, replace=False)
    centroids = unique[np.sort(pick)]
    assign = np.full(descs.shape[0], -1)
    for _ in range(max_iters):
        dists = hamming_matrix(descs, centroids)
        new_assign = np.argmin(dists, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(centroids.shape[0]):
            members = descs[assign == c]
            if members.shape[0] > 0:
                centroids[c] = _majority_centroid(members)
    keep = np.array([np.any(assign == c) for c in range(centroids.shape[0])])
    centroids = centroids[keep]
    remap = np.cumsum(keep) - 1
    assign = remap[assign]
    return centroids, assign


@dataclass
class VocabNode:
    centroid: np.ndarray
    children: list = field(default_factory=list)
    word_id: int = -1  # set on leaves only
    idf: float = 0.0

    def is_leaf(self) -> bool:
        return not self.children


class Vocabulary:
    """Hierarchical binary vocabulary with per-word IDF weights."""

    def __init__(self, root: VocabNode, branching: int, depth: int):
        self.root = root
        self.branching = branching
        self.depth = depth
        self.leaves: list[VocabNode] = []
        self._collect_leaves(root)
        for wid, leaf in enumerate(self.leaves):
            leaf.word_id = wid

    def _collect_leaves(self, node: VocabNode) -> None:
        if node.is_leaf():
            self.leaves.append(node)
        else:
            for child in node.children:
                self._collect_leaves(child)

    @property
    def n_words(self) -> int:
        return len(self.leaves)

    def word_ids(self, descs: np.ndarray) -> np.ndarray:
        """Quantize descriptors by greedy descent (ties to the lowest child)."""
        descs = np.asarray(descs, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
        out = np.zeros(descs.shape[0], dtype=np.int64)
        if descs.shape[0]:
            self._descend(self.root, descs, np.arange(descs.shape[0]), out)
        return out

    def _descend(self, node: VocabNode, descs, idx, out) -> None:
        if node.is_leaf():
            out[idx] = node.word_id
            return
        cents = np.stack([c.centroid for c in node.children])
        pick = np.argmin(hamming_matrix(descs[idx], cents), axis=1)
        for c, child in enumerate(node.children):
            sel = idx[pick == c]
            if sel.size:
                self._descend(child, descs, sel, out)

    def idf_vector(self) -> np.ndarray:
        return np.array([leaf.idf for leaf in self.leaves])

    def content_hash(self) -> int:
        digest = hashlib.sha256(serialize_vocabulary(self)).digest()
        return struct.unpack("<Q", digest[:8])[0]


def train_vocabulary(
    descriptors: np.ndarray, branching: int = 8, depth: int = 3, seed: int = 0
) -> Vocabulary:
    """Build the tree, then fit IDF weights from the training distribution."""
    descriptors = np.asarray(descriptors, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
    if descriptors.shape[0] == 0:
        raise ValueError("cannot train a vocabulary from an empty descriptor set")
    if branching < 2 or depth < 1:
        raise ValueError("branching must be >= 2 and depth >= 1")
    rng = np.random.default_rng(seed)

    def build(descs: np.ndarray, level: int) -> VocabNode:
        node = VocabNode(centroid=np.zeros(DESCRIPTOR_BYTES, dtype=np.uint8))
        if level >= depth or np.unique(descs, axis=0).shape[0] < 2:
            return node
        centroids, assign = _kmedians(descs, branching, rng)
        if centroids.shape[0] < 2:
            return node
        for c in range(centroids.shape[0]):
            child = build(descs[assign == c], level + 1)
            child.centroid = centroids[c]
            node.children.append(child)
        return node

    vocab = Vocabulary(build(descriptors, 0), branching, depth)

    # Smoothed IDF over the training descriptors; strictly positive so every
    # present word carries weight.
    n = descriptors.shape[0]
    counts = np.bincount(vocab.word_ids(descriptors), minlength=vocab.n_words)
    for leaf, c in zip(vocab.leaves, counts):
        leaf.idf = math.log((1.0 + n) / (1.0 + float(c))) + 1.0
    return vocab


@dataclass
class BowVector:
    """Sparse L1-normalized word histogram."""

    ids: np.ndarray  # sorted int64 word ids
    weights: np.ndarray  # float64, sum to 1 unless empty
    n_words: int

    def is_empty(self) -> bool:
        return self.ids.size == 0

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n_words)
        out[self.ids] = self.weights
        return out

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(w) for i, w in zip(self.ids, self.weights)}

    @classmethod
    def empty(cls, n_words: int) -> "BowVector":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0), n_words)


def to_bow(vocab: Vocabulary, descriptors: np.ndarray) -> BowVector:
    descriptors = np.asarray(descriptors, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
    if descriptors.shape[0] == 0:
        return BowVector.empty(vocab.n_words)
    wids = vocab.word_ids(descriptors)
    counts = np.bincount(wids, minlength=vocab.n_words).astype(np.float64)
    weighted = counts * vocab.idf_vector()
    total = weighted.sum()
    ids = np.flatnonzero(weighted).astype(np.int64)
    return BowVector(ids, weighted[ids] / total, vocab.n_words)


def similarity(a: BowVector, b: BowVector) -> float:
    """1 - 0.5 * L1 distance; zero when either side saw nothing."""
    if a.is_empty() or b.is_empty():
        return 0.0
    union = np.union1d(a.ids, b.ids)
    av = np.zeros(union.size)
    bv = np.zeros(union.size)
    av[np.searchsorted(union, a.ids)] = a.weights
    bv[np.searchsorted(union, b.ids)] = b.weights
    return float(1.0 - 0.5 * np.abs(av - bv).sum())


@dataclass
class LoopCandidate:
    kf_id: int
    score: float
    attachment_index: int | None = None


def query_loops(
    m,
    query,
    vocab: Vocabulary | None = None,
    tau_loop: float = 0.35,
    exclusion_window: int = 0,
    include_attachments: bool = True,
) -> list[LoopCandidate]:
    """Rank keyframes (and their attachments) by similarity to a query.

    ``query`` is either a BowVector or anything with a ``descriptors`` field
    (then ``vocab`` must be given).  The trailing ``exclusion_window`` newest
    alive keyframes are skipped, which keeps teach-time detection from
    matching its own recent past.  Ties rank the lower keyframe id first.
    """
    if isinstance(query, BowVector):
        qbow = query
    else:
        if vocab is None:
            raise ValueError("a vocabulary is required to quantize a raw frame")
        qbow = to_bow(vocab, query.descriptors)
    if qbow.is_empty():
        return []

    rows, owners = m.bow_rows(include_attachments=include_attachments)
    if rows.shape[0] == 0:
        return []
    dense_q = qbow.dense()
    occupied = rows.sum(axis=1) > 0.0
    scores = 1.0 - 0.5 * np.abs(rows - dense_q[None, :]).sum(axis=1)
    scores = np.where(occupied, scores, 0.0)

    alive = m.alive_ids()
    excluded = set(alive[max(0, len(alive) - exclusion_window) :]) if exclusion_window > 0 else set()

    best: dict[int, LoopCandidate] = {}
    for (kf_id, att_idx), score in zip(owners, scores):
        if kf_id in excluded:
            continue
        cur = best.get(kf_id)
        if cur is None or score > cur.score:
            best[kf_id] = LoopCandidate(kf_id, float(score), att_idx)
    out = [c for c in best.values() if c.score >= tau_loop]
    out.sort(key=lambda c: (-c.score, c.kf_id))
    return out


def serialize_vocabulary(vocab: Vocabulary) -> bytes:
    """VTRVOC/1: magic, branching, depth, node count, preorder node records."""
    chunks = [VOCAB_MAGIC, struct.pack("<III", vocab.branching, vocab.depth, _count(vocab.root))]

    def emit(node: VocabNode) -> None:
        chunks.append(node.centroid.tobytes())
        if node.is_leaf():
            chunks.append(struct.pack("<BId", 1, node.word_id, node.idf))
        else:
            chunks.append(struct.pack("<BI", 0, len(node.children)))
            for child in node.children:
                emit(child)

    emit(vocab.root)
    return b"".join(chunks)


def _count(node: VocabNode) -> int:
    return 1 + sum(_count(c) for c in node.children)


def deserialize_vocabulary(blob: bytes) -> Vocabulary:
    if blob[:8] != VOCAB_MAGIC:
        raise ValueError("not a vocabulary file (bad magic)")
    try:
        branching, depth, n_nodes = struct.unpack_from("<III", blob, 8)
    except struct.error as exc:
        raise ValueError("truncated vocabulary header") from exc
    offset = 20
    seen = 0

    def read() -> VocabNode:
        nonlocal offset, seen
        if offset + DESCRIPTOR_BYTES + 1 > len(blob):
            raise ValueError("truncated vocabulary file")
        centroid = np.frombuffer(blob, dtype=np.uint8, count=DESCRIPTOR_BYTES, offset=offset).copy()
        offset += DESCRIPTOR_BYTES
        (leaf_flag,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        seen += 1
        node = VocabNode(centroid=centroid)
        if leaf_flag:
            if offset + 12 > len(blob):
                raise ValueError("truncated vocabulary file")
            wid, idf = struct.unpack_from("<Id", blob, offset)
            offset += 12
            node.word_id = wid
            node.idf = idf
        else:
            if offset + 4 > len(blob):
                raise ValueError("truncated vocabulary file")
            (n_children,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            node.children = [read() for _ in range(n_children)]
        return node

    root = read()
    if offset != len(blob):
        raise ValueError("trailing bytes after the vocabulary tree")
    if seen != n_nodes:
        raise ValueError(f"vocabulary node count mismatch: header {n_nodes}, read {seen}")
    # Validate the stored ids against preorder before the constructor
    # renumbers leaves (renumbering is then a no-op).
    stored: list[int] = []

    def walk(node: VocabNode) -> None:
        if node.is_leaf():
            stored.append(node.word_id)
        for child in node.children:
            walk(child)

    walk(root)
    if stored != list(range(len(stored))):
        raise ValueError("vocabulary word ids out of order")
    return Vocabulary(root, branching, depth)
