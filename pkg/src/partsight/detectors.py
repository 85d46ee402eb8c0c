"""Detector provider contract, a deterministic mock, and inference wrappers.

A provider is anything with ``detect(pixels, image_id=None, view=None)``
returning detections in the coordinates of the pixels it was handed, and it
must be deterministic given (image, provider seed). The two wrappers run a
provider over transformed copies of an image (test-time augmentation) or
overlapping tiles (slice inference) and merge everything back in source
coordinates via confidence-weighted fusion.

``view`` describes how the handed pixels relate to the source frame. Real
providers ignore it; the mock uses it to answer with the boxes a detector
would see in that transformed frame, which is what makes wrapper round-trip
tests exact.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import cv2
import numpy as np

from .errors import ConfigurationError, InputError, ProviderError
from .geometry import BoundingBox, ensure_image


@dataclass(frozen=True)
class Detection:
    label: str
    box: BoundingBox
    confidence: float
    frame_index: int = 0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class AxisAlignedView:
    """Axis-aligned map from source-frame coords to view coords.

    x' = sx * x + ox, y' = sy * y + oy; (width, height) is the view size.
    Covers everything TTA and tiling need (flips, scales, crops).
    """

    sx: float = 1.0
    sy: float = 1.0
    ox: float = 0.0
    oy: float = 0.0
    width: int = 0
    height: int = 0

    def map_box(self, box: BoundingBox) -> BoundingBox:
        xs = sorted((self.sx * box.x_min + self.ox, self.sx * box.x_max + self.ox))
        ys = sorted((self.sy * box.y_min + self.oy, self.sy * box.y_max + self.oy))
        return BoundingBox(xs[0], ys[0], xs[1], ys[1])

    def unmap_box(self, box: BoundingBox) -> BoundingBox:
        xs = sorted(((box.x_min - self.ox) / self.sx, (box.x_max - self.ox) / self.sx))
        ys = sorted(((box.y_min - self.oy) / self.sy, (box.y_max - self.oy) / self.sy))
        return BoundingBox(xs[0], ys[0], xs[1], ys[1])

    def after(self, inner: "AxisAlignedView") -> "AxisAlignedView":
        """View applying `inner` first, then this one (source -> inner -> this)."""
        return AxisAlignedView(
            self.sx * inner.sx,
            self.sy * inner.sy,
            self.sx * inner.ox + self.ox,
            self.sy * inner.oy + self.oy,
            self.width,
            self.height,
        )

    def seed_token(self) -> int:
        raw = f"{self.sx:.6f},{self.sy:.6f},{self.ox:.6f},{self.oy:.6f}".encode()
        return int.from_bytes(hashlib.sha256(raw).digest()[:8], "big")


class DetectorProvider(Protocol):
    def detect(
        self,
        pixels: np.ndarray,
        image_id: str | None = None,
        view: AxisAlignedView | None = None,
    ) -> list[Detection]: ...


def _id_token(image_id: str | None) -> int:
    return int.from_bytes(hashlib.sha256((image_id or "").encode()).digest()[:8], "big")


@dataclass
class MockDetector:
    """Ground-truth-driven fake detector for desk-scale end-to-end tests.

    With zero jitter, dropout, and confusion it returns the annotated boxes
    with confidence 1 — oracle grade. Noise knobs degrade it deterministically
    given the seed. Annotations map an image id to (label, box) pairs in
    source-frame coordinates; when handed a transformed view the mock answers
    with the boxes as that view would see them, keeping only boxes whose area
    is at least `min_visibility` visible.
    """

    annotations: dict[str, list[tuple[str, BoundingBox]]]
    jitter_std: float = 0.0
    dropout: float = 0.0
    confusion: dict[str, dict[str, float]] = field(default_factory=dict)
    base_confidence: float | tuple[float, float] = 1.0
    min_visibility: float = 1.0
    seed: int = 0

    def _rng(self, image_id: str | None, view: AxisAlignedView | None) -> np.random.Generator:
        view_token = view.seed_token() if view is not None else 0
        return np.random.default_rng(
            np.random.SeedSequence([self.seed & 0xFFFFFFFF, _id_token(image_id), view_token])
        )

    def _confidence(self, rng: np.random.Generator) -> float:
        if isinstance(self.base_confidence, tuple):
            lo, hi = self.base_confidence
            return float(rng.uniform(lo, hi))
        return float(self.base_confidence)

    def _label(self, label: str, rng: np.random.Generator) -> str:
        row = self.confusion.get(label)
        if not row:
            return label
        names = sorted(row)
        probs = np.array([row[n] for n in names], dtype=np.float64)
        rest = 1.0 - probs.sum()
        if rest < -1e-9:
            raise ConfigurationError(f"confusion row for {label!r} sums past 1")
        names.append(label)
        probs = np.append(probs, max(rest, 0.0))
        return str(rng.choice(names, p=probs / probs.sum()))

    def detect(
        self,
        pixels: np.ndarray,
        image_id: str | None = None,
        view: AxisAlignedView | None = None,
    ) -> list[Detection]:
        ensure_image(pixels)
        height, width = pixels.shape[:2]
        rng = self._rng(image_id, view)
        results: list[Detection] = []
        for label, box in self.annotations.get(image_id or "", []):
            mapped = view.map_box(box) if view is not None else box
            visible = mapped.clip(width, height)
            if mapped.area <= 0 or visible.area / mapped.area + 1e-9 < self.min_visibility:
                continue
            if self.dropout > 0 and rng.random() < self.dropout:
                continue
            out_label = self._label(label, rng)
            coords = np.array(mapped.as_list(), dtype=np.float64)
            if self.jitter_std > 0:
                coords = coords + rng.normal(0.0, self.jitter_std, size=4)
            x0, x1 = sorted((coords[0], coords[2]))
            y0, y1 = sorted((coords[1], coords[3]))
            jittered = BoundingBox(x0, y0, x1, y1).clip(width, height)
            if jittered.area <= 0:
                continue
            results.append(Detection(out_label, jittered, self._confidence(rng)))
        return results


@dataclass
class ExternalProcessDetector:
    """File-contract adapter: write an image, run a command, read JSON-lines.

    The command is invoked with the image path appended; it must print one
    detection record per line ({label, bbox, confidence}) on stdout.
    """

    command: list[str]

    def detect(
        self,
        pixels: np.ndarray,
        image_id: str | None = None,
        view: AxisAlignedView | None = None,
    ) -> list[Detection]:
        from .geometry import save_image

        ensure_image(pixels)
        height, width = pixels.shape[:2]
        with tempfile.TemporaryDirectory(prefix="partsight-detect-") as tmp:
            path = Path(tmp) / "frame.png"
            save_image(path, pixels)
            try:
                proc = subprocess.run(
                    [*self.command, str(path)],
                    capture_output=True,
                    text=True,
                    timeout=120,
                    check=False,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise ProviderError(f"external detector failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise ProviderError(
                f"external detector exited {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        detections = []
        for lineno, line in enumerate(proc.stdout.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                box = BoundingBox(*(float(v) for v in rec["bbox"])).clip(width, height)
                if box.area <= 0:
                    continue
                detections.append(Detection(str(rec["label"]), box, float(rec["confidence"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"bad detector output line {lineno}: {exc}") from exc
        return detections


@dataclass(frozen=True)
class TTAConfig:
    horizontal_flip: bool = True
    scales: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if any(s <= 0 for s in self.scales):
            raise ConfigurationError("TTA scales must be positive")
        if 1.0 not in self.scales:
            raise ConfigurationError("TTA transform set must contain the identity scale 1.0")

    def transforms(self) -> list[tuple[str, float, bool]]:
        """(name, scale, flipped) triples; identity first."""
        out = [("identity", 1.0, False)]
        if self.horizontal_flip:
            out.append(("hflip", 1.0, True))
        for s in self.scales:
            if s == 1.0:
                continue
            out.append((f"scale{s:g}", s, False))
            if self.horizontal_flip:
                out.append((f"scale{s:g}+hflip", s, True))
        return out


@dataclass(frozen=True)
class SliceConfig:
    tile_size: int = 512
    overlap: float = 0.2

    def __post_init__(self):
        if self.tile_size < 32:
            raise ConfigurationError("tile size must be >= 32")
        if not (0.0 <= self.overlap < 1.0):
            raise ConfigurationError("overlap must be in [0, 1)")


def _tta_view(width: int, height: int, scale: float, flipped: bool) -> AxisAlignedView:
    vw, vh = max(1, int(round(width * scale))), max(1, int(round(height * scale)))
    sx = vw / width
    sy = vh / height
    if flipped:
        return AxisAlignedView(-sx, sy, vw, 0.0, vw, vh)
    return AxisAlignedView(sx, sy, 0.0, 0.0, vw, vh)


def detect_tta(
    provider: DetectorProvider,
    pixels: np.ndarray,
    config: TTAConfig = TTAConfig(),
    iou_threshold: float = 0.5,
    image_id: str | None = None,
    slice_config: "SliceConfig | None" = None,
) -> list[Detection]:
    """Run the provider over transformed copies and fuse inverse-mapped boxes.

    With `slice_config`, each transformed copy is itself detected on
    overlapping tiles (the combined augmentation-plus-tiling mode).
    """
    from .postproc import fuse

    ensure_image(pixels)
    height, width = pixels.shape[:2]
    collected: list[Detection] = []
    for name, scale, flipped in config.transforms():
        view = _tta_view(width, height, scale, flipped)
        shown = pixels
        if scale != 1.0:
            shown = cv2.resize(shown, (view.width, view.height), interpolation=cv2.INTER_LINEAR)
        if flipped:
            shown = np.ascontiguousarray(shown[:, ::-1])
        try:
            if slice_config is not None:
                found = detect_sliced(provider, shown, slice_config, iou_threshold,
                                      image_id=image_id, base_view=view)
            else:
                found = provider.detect(shown, image_id=image_id, view=view)
        except Exception as exc:
            raise ProviderError(f"provider failed on transform {name!r}: {exc}") from exc
        for det in found:
            box = view.unmap_box(det.box).clip(width, height)
            if box.area <= 0:
                continue
            collected.append(Detection(det.label, box, det.confidence, det.frame_index))
    fused = fuse(collected, iou_threshold=iou_threshold, min_votes=1)
    return [Detection(f.label, f.box, f.confidence) for f in fused]


def tile_origins(extent: int, tile: int, stride: int) -> list[int]:
    origins = list(range(0, max(extent - tile, 0) + 1, stride))
    if origins[-1] + tile < extent:
        origins.append(extent - tile)
    return origins


def detect_sliced(
    provider: DetectorProvider,
    pixels: np.ndarray,
    config: SliceConfig = SliceConfig(),
    iou_threshold: float = 0.5,
    image_id: str | None = None,
    base_view: AxisAlignedView | None = None,
) -> list[Detection]:
    """Detect on overlapping tiles, then fuse and de-duplicate in image coords.

    `base_view` describes how `pixels` relates to the original frame when
    tiling runs inside another wrapper; providers then see the composed view
    while returned boxes stay in `pixels` coordinates.
    """
    from .postproc import dedup, fuse

    ensure_image(pixels)
    height, width = pixels.shape[:2]
    tw = min(config.tile_size, width)
    th = min(config.tile_size, height)
    stride_x = max(1, int(round(tw * (1.0 - config.overlap))))
    stride_y = max(1, int(round(th * (1.0 - config.overlap))))

    collected: list[Detection] = []
    index = 0
    for y0 in tile_origins(height, th, stride_y):
        for x0 in tile_origins(width, tw, stride_x):
            tile = np.ascontiguousarray(pixels[y0 : y0 + th, x0 : x0 + tw])
            view = AxisAlignedView(1.0, 1.0, -float(x0), -float(y0), tw, th)
            provider_view = view.after(base_view) if base_view is not None else view
            try:
                found = provider.detect(tile, image_id=image_id, view=provider_view)
            except Exception as exc:
                raise ProviderError(f"provider failed on tile {index}: {exc}") from exc
            for det in found:
                box = view.unmap_box(det.box).clip(width, height)
                if box.area <= 0:
                    continue
                collected.append(Detection(det.label, box, det.confidence, det.frame_index))
            index += 1

    fused = fuse(collected, iou_threshold=iou_threshold, min_votes=1)
    deduped = dedup(fused, iou_threshold=iou_threshold)
    return [Detection(f.label, f.box, f.confidence) for f in deduped]


def annotations_from_labels(
    labels_dir: str | Path,
    images_dir: str | Path,
    class_list: list[str],
) -> dict[str, list[tuple[str, BoundingBox]]]:
    """Build mock-detector annotations from label files next to an image dir."""
    from .formats import read_label_file
    from .synthgen import IMAGE_SUFFIXES

    labels_dir = Path(labels_dir)
    images_dir = Path(images_dir)
    annotations: dict[str, list[tuple[str, BoundingBox]]] = {}
    for image_path in sorted(images_dir.iterdir()):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        label_path = labels_dir / f"{image_path.stem}.txt"
        if not label_path.exists():
            annotations[image_path.stem] = []
            continue
        from PIL import Image

        with Image.open(image_path) as img:
            width, height = img.size
        entries = read_label_file(label_path, width, height)
        pairs = []
        for class_index, box in entries:
            if not (0 <= class_index < len(class_list)):
                raise InputError(f"{label_path}: class index {class_index} out of range")
            pairs.append((class_list[class_index], box))
        annotations[image_path.stem] = pairs
    return annotations
