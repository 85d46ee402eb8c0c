"""Runtime perception post-processing.

Consecutive-frame gating over a bounded frame buffer, confidence-weighted
multi-frame box fusion, duplicate suppression, and depth-ranked top-K
selection. Everything here is a pure function; the session layer owns state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detectors import Detection
from .errors import InputError
from .geometry import BoundingBox, iou


class FrameBuffer:
    """Ring of the last `capacity` frames' detection lists.

    Frame indices must be strictly increasing; the buffer keeps insertion
    order and drops the oldest entry past capacity.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: list[tuple[int, tuple[Detection, ...]]] = []

    def push(self, frame_index: int, detections: list[Detection]) -> None:
        if self._entries and frame_index <= self._entries[-1][0]:
            raise ValueError(
                f"frame index {frame_index} not after {self._entries[-1][0]}"
            )
        self._entries.append((frame_index, tuple(detections)))
        if len(self._entries) > self.capacity:
            self._entries.pop(0)

    def entries(self) -> list[tuple[int, tuple[Detection, ...]]]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def gate_consecutive(buffer: FrameBuffer, window: int, conf_threshold: float) -> bool:
    """True iff the last `window` frames are consecutive and each holds a
    detection at or above the confidence threshold."""
    if window < 1:
        raise ValueError("window must be >= 1")
    entries = buffer.entries()
    if len(entries) < window:
        return False
    tail = entries[-window:]
    indices = [idx for idx, _ in tail]
    if any(b - a != 1 for a, b in zip(indices, indices[1:])):
        return False
    return all(
        any(d.confidence >= conf_threshold for d in dets) for _, dets in tail
    )


@dataclass(frozen=True)
class FusedDetection:
    label: str
    box: BoundingBox
    confidence: float  # max over members
    votes: int
    frame_indices: tuple[int, ...] = ()
    members: tuple[Detection, ...] = field(default=(), repr=False)


def _weighted_box(members: list[Detection]) -> BoundingBox:
    weights = np.array([m.confidence for m in members], dtype=np.float64)
    coords = np.array([m.box.as_list() for m in members], dtype=np.float64)
    total = weights.sum()
    if total <= 0.0:
        fused = coords.mean(axis=0)  # all-zero confidences: plain mean
    else:
        fused = (coords * weights[:, None]).sum(axis=0) / total
    return BoundingBox(*fused)


def fuse(
    detections: list[Detection],
    iou_threshold: float = 0.5,
    min_votes: int = 3,
) -> list[FusedDetection]:
    """Greedy confidence-ordered clustering with confidence-weighted merging.

    Detections are visited in descending confidence (stable for ties); each
    joins the first existing cluster whose label matches and whose current
    fused box overlaps it with IoU > threshold, else it seeds a new cluster.
    Each fused coordinate is the confidence-weighted mean of the member
    coordinates. Clusters with fewer than `min_votes` members are discarded.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError("iou_threshold must be in [0, 1]")
    if min_votes < 1:
        raise ValueError("min_votes must be >= 1")

    ordered = sorted(detections, key=lambda d: -d.confidence)
    clusters: list[dict] = []
    for det in ordered:
        joined = False
        for cluster in clusters:
            if cluster["label"] != det.label:
                continue
            if iou(det.box, cluster["box"]) > iou_threshold:
                cluster["members"].append(det)
                cluster["box"] = _weighted_box(cluster["members"])
                joined = True
                break
        if not joined:
            clusters.append({"label": det.label, "members": [det], "box": det.box})

    fused = []
    for cluster in clusters:
        members = cluster["members"]
        if len(members) < min_votes:
            continue
        fused.append(
            FusedDetection(
                label=cluster["label"],
                box=_weighted_box(members),
                confidence=max(m.confidence for m in members),
                votes=len(members),
                frame_indices=tuple(sorted({m.frame_index for m in members})),
                members=tuple(members),
            )
        )
    return fused


def dedup(fused: list[FusedDetection], iou_threshold: float = 0.5) -> list[FusedDetection]:
    """Suppress same-label boxes overlapping a kept higher-confidence box.

    Survivors contain no same-label pair with IoU above the threshold, so
    each object is represented once. Output is in descending confidence.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError("iou_threshold must be in [0, 1]")
    ordered = sorted(fused, key=lambda f: -f.confidence)
    kept: list[FusedDetection] = []
    for candidate in ordered:
        clashes = any(
            k.label == candidate.label and iou(k.box, candidate.box) > iou_threshold
            for k in kept
        )
        if not clashes:
            kept.append(candidate)
    return kept


def box_depth(depth_map: np.ndarray, box: BoundingBox) -> float:
    """Median depth inside the integer-clipped box (robust to background)."""
    if depth_map.ndim != 2:
        raise InputError("depth map must be 2-D")
    height, width = depth_map.shape
    x0 = max(0, int(np.floor(box.x_min)))
    y0 = max(0, int(np.floor(box.y_min)))
    x1 = min(width, int(np.ceil(box.x_max)))
    y1 = min(height, int(np.ceil(box.y_max)))
    if x1 <= x0 or y1 <= y0:
        raise InputError(f"box {box.as_list()} does not intersect the depth map")
    return float(np.median(depth_map[y0:y1, x0:x1]))


@dataclass(frozen=True)
class RankedObject:
    label: str
    box: BoundingBox
    depth: float
    confidence: float
    votes: int = 1


def rank_topk(
    fused: list[FusedDetection], depth_map: np.ndarray, k: int = 3
) -> list[RankedObject]:
    """Attach per-box depth, sort closest-first, and keep the top K.

    Depth uses the convention smaller = closer. Ties break toward higher
    confidence, then lexicographic label.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = [
        RankedObject(f.label, f.box, box_depth(depth_map, f.box), f.confidence, f.votes)
        for f in fused
    ]
    ranked.sort(key=lambda r: (r.depth, -r.confidence, r.label))
    return ranked[:k]


def build_synthetic_depth(spec: dict) -> np.ndarray:
    """Construct a depth map from a JSON-able description.

    ``{"width": W, "height": H, "background": B,
    "regions": [{"bbox": [x0, y0, x1, y1], "value": V}, ...]}``
    Regions paint later-over-earlier on the background value.
    """
    try:
        width = int(spec["width"])
        height = int(spec["height"])
        background = float(spec.get("background", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad synthetic depth spec: {exc}") from exc
    if width < 1 or height < 1:
        raise InputError("synthetic depth needs positive dimensions")
    values = np.full((height, width), background, dtype=np.float32)
    for region in spec.get("regions", []):
        x0, y0, x1, y1 = (float(v) for v in region["bbox"])
        xi0, yi0 = max(0, int(np.floor(x0))), max(0, int(np.floor(y0)))
        xi1, yi1 = min(width, int(np.ceil(x1))), min(height, int(np.ceil(y1)))
        if xi1 > xi0 and yi1 > yi0:
            values[yi0:yi1, xi0:xi1] = float(region["value"])
    return values
