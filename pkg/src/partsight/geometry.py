"""Axis-aligned box arithmetic, mask rasters, affine transforms, and alpha compositing.

Conventions used everywhere in this package:

- Boxes are corner-form ``[x_min, y_min, x_max, y_max]`` in continuous pixel
  coordinates, origin at the top-left, x right / y down. Conversion to the
  normalized center form happens only at label-file serialization.
- Images are numpy ``uint8`` arrays of shape ``(height, width, channels)``
  with ``channels`` 3 (RGB) or 4 (RGBA), row-major.
- Mask alpha is binarized at 0.5 after any resampling so membership is crisp.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .errors import DegenerateMaskError, InputError, PlacementError

ALPHA_BINARIZE = 128  # uint8 threshold equivalent to alpha >= 0.5


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"invalid box: {self.as_list()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def clip(self, width: float, height: float) -> "BoundingBox":
        return BoundingBox(
            min(max(self.x_min, 0.0), width),
            min(max(self.y_min, 0.0), height),
            min(max(self.x_max, 0.0), width),
            min(max(self.y_max, 0.0), height),
        )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 when the union has no area."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def ensure_image(arr: np.ndarray) -> np.ndarray:
    """Validate the package image convention (uint8, HxWx3 or HxWx4)."""
    if not isinstance(arr, np.ndarray) or arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise InputError(f"expected HxWx3/4 array, got shape {getattr(arr, 'shape', None)}")
    if arr.dtype != np.uint8:
        raise InputError(f"expected uint8 image, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError("empty image")
    return arr


def new_canvas(width: int, height: int, color=(0, 0, 0), channels: int = 3) -> np.ndarray:
    canvas = np.empty((height, width, channels), dtype=np.uint8)
    col = tuple(color)
    if len(col) < channels:
        col = col + (255,) * (channels - len(col))
    canvas[:] = np.array(col[:channels], dtype=np.uint8)
    return canvas


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/JPEG file as RGB or RGBA uint8."""
    try:
        with Image.open(path) as img:
            if img.mode == "RGBA":
                return np.asarray(img.convert("RGBA"))
            return np.asarray(img.convert("RGB"))
    except FileNotFoundError:
        raise
    except Exception as exc:  # PIL raises a zoo of decode errors
        raise InputError(f"cannot read image {path}: {exc}") from exc


def save_image(path: str | Path, arr: np.ndarray, compress_level: int = 1) -> None:
    ensure_image(arr)
    img = Image.fromarray(arr, mode="RGBA" if arr.shape[2] == 4 else "RGB")
    kwargs = {}
    if str(path).lower().endswith(".png"):
        kwargs["compress_level"] = compress_level
    img.save(path, **kwargs)


def tight_alpha_bounds(alpha: np.ndarray) -> tuple[int, int, int, int] | None:
    """(x0, y0, x1, y1) pixel bounds of alpha > 0, exclusive right/bottom."""
    ys, xs = np.nonzero(alpha)
    if xs.size == 0:
        return None
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


@dataclass(frozen=True)
class InstanceMask:
    """An RGBA object cutout with its category label; the unit of composition.

    The cutout is tight: its first/last rows and columns each contain at
    least one alpha > 0 pixel.
    """

    cutout: np.ndarray = field(repr=False)
    category: str
    source_id: str

    def __post_init__(self):
        arr = self.cutout
        if not isinstance(arr, np.ndarray) or arr.ndim != 3 or arr.shape[2] != 4 or arr.dtype != np.uint8:
            raise InputError("mask cutout must be an RGBA uint8 array")
        bounds = tight_alpha_bounds(arr[:, :, 3])
        if bounds is None:
            raise DegenerateMaskError(f"mask {self.source_id!r} has no visible pixels")
        x0, y0, x1, y1 = bounds
        if (x0, y0, x1, y1) != (0, 0, arr.shape[1], arr.shape[0]):
            raise InputError(f"mask {self.source_id!r} is not tight; use InstanceMask.from_cutout")

    @classmethod
    def from_cutout(cls, cutout: np.ndarray, category: str, source_id: str) -> "InstanceMask":
        """Build a mask, cropping the cutout to its tight alpha bounds."""
        if cutout.ndim != 3 or cutout.shape[2] != 4:
            raise InputError("cutout must be RGBA")
        bounds = tight_alpha_bounds(cutout[:, :, 3])
        if bounds is None:
            raise DegenerateMaskError(f"cutout for {source_id!r} is fully transparent")
        x0, y0, x1, y1 = bounds
        return cls(np.ascontiguousarray(cutout[y0:y1, x0:x1]), category, source_id)

    @property
    def width(self) -> int:
        return self.cutout.shape[1]

    @property
    def height(self) -> int:
        return self.cutout.shape[0]


def _binarize_alpha(rgba: np.ndarray) -> np.ndarray:
    out = rgba.copy()
    out[:, :, 3] = np.where(out[:, :, 3] >= ALPHA_BINARIZE, 255, 0).astype(np.uint8)
    return out


def affine_transform(mask: InstanceMask, scale: float, rotation: float) -> InstanceMask:
    """Scale then rotate a mask cutout; bilinear color, alpha re-binarized.

    Rotation pivots about the tight-bounds center and the canvas grows to
    contain the rotated extent, so no visible pixel is clipped.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")

    rgba = mask.cutout
    if scale != 1.0:
        new_w = int(round(mask.width * scale))
        new_h = int(round(mask.height * scale))
        if new_w < 1 or new_h < 1:
            raise DegenerateMaskError(
                f"scale {scale} shrinks mask {mask.source_id!r} below 1x1"
            )
        rgba = cv2.resize(rgba, (new_w, new_h), interpolation=cv2.INTER_LINEAR)

    rotation = rotation % 360.0
    if rotation != 0.0:
        h, w = rgba.shape[:2]
        center = ((w - 1) / 2.0, (h - 1) / 2.0)
        mat = cv2.getRotationMatrix2D(center, rotation, 1.0)
        cos = abs(mat[0, 0])
        sin = abs(mat[0, 1])
        new_w = int(math.ceil(w * cos + h * sin - 1e-9))
        new_h = int(math.ceil(w * sin + h * cos - 1e-9))
        mat[0, 2] += (new_w - 1) / 2.0 - center[0]
        mat[1, 2] += (new_h - 1) / 2.0 - center[1]
        rgba = cv2.warpAffine(
            rgba,
            mat,
            (new_w, new_h),
            flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_CONSTANT,
            borderValue=(0, 0, 0, 0),
        )

    if scale != 1.0 or rotation != 0.0:
        rgba = _binarize_alpha(rgba)
        if not (rgba[:, :, 3] > 0).any():
            raise DegenerateMaskError(f"transform emptied mask {mask.source_id!r}")
        return InstanceMask.from_cutout(rgba, mask.category, mask.source_id)
    return replace(mask)


def paste(canvas: np.ndarray, mask: InstanceMask, position: tuple[int, int]) -> tuple[np.ndarray, BoundingBox]:
    """Source-over composite a mask onto a copy of the canvas.

    ``position`` is the integer top-left offset of the cutout. The returned
    box is the tight alpha bounds of the pasted instance in canvas
    coordinates. Pixels outside that box are untouched.
    """
    ensure_image(canvas)
    x, y = int(round(position[0])), int(round(position[1]))
    h, w = canvas.shape[:2]
    mw, mh = mask.width, mask.height
    if x < 0 or y < 0 or x + mw > w or y + mh > h:
        raise PlacementError(
            f"mask {mw}x{mh} at ({x},{y}) does not fit canvas {w}x{h}"
        )

    out = canvas.copy()
    region = out[y : y + mh, x : x + mw].astype(np.float32)
    src = mask.cutout.astype(np.float32)
    alpha = src[:, :, 3:4] / 255.0

    region[:, :, :3] = src[:, :, :3] * alpha + region[:, :, :3] * (1.0 - alpha)
    if canvas.shape[2] == 4:
        dst_a = region[:, :, 3:4] / 255.0
        region[:, :, 3:4] = (alpha + dst_a * (1.0 - alpha)) * 255.0
    out[y : y + mh, x : x + mw] = np.clip(np.rint(region), 0, 255).astype(np.uint8)

    bounds = tight_alpha_bounds(mask.cutout[:, :, 3])
    bx0, by0, bx1, by1 = bounds
    return out, BoundingBox(x + bx0, y + by0, x + bx1, y + by1)


def letterbox(image: np.ndarray, width: int, height: int, fill=(0, 0, 0)) -> np.ndarray:
    """Resize preserving aspect ratio and pad to exactly (width, height)."""
    ensure_image(image)
    ih, iw = image.shape[:2]
    ratio = min(width / iw, height / ih)
    nw, nh = max(1, int(round(iw * ratio))), max(1, int(round(ih * ratio)))
    resized = cv2.resize(image, (nw, nh), interpolation=cv2.INTER_LINEAR)
    canvas = new_canvas(width, height, fill, channels=image.shape[2])
    ox, oy = (width - nw) // 2, (height - nh) // 2
    canvas[oy : oy + nh, ox : ox + nw] = resized
    return canvas


def load_mask_library(mask_dir: str | Path) -> dict[str, list[InstanceMask]]:
    """Load RGBA PNG cutouts with `{category, source_id}` JSON sidecars.

    Returns masks grouped by category, each list sorted by source_id so the
    library order is stable across filesystems.
    """
    mask_dir = Path(mask_dir)
    if not mask_dir.is_dir():
        raise InputError(f"mask directory {mask_dir} does not exist")
    library: dict[str, list[InstanceMask]] = {}
    for png in sorted(mask_dir.glob("*.png")):
        sidecar = png.with_suffix(".json")
        if not sidecar.exists():
            raise InputError(f"mask {png.name} has no sidecar JSON record")
        try:
            record = json.loads(sidecar.read_text())
            category = record["category"]
            source_id = record.get("source_id", png.stem)
        except (json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"bad sidecar {sidecar.name}: {exc}") from exc
        arr = load_image(png)
        if arr.shape[2] != 4:
            raise InputError(f"mask {png.name} is not RGBA")
        library.setdefault(category, []).append(
            InstanceMask.from_cutout(arr, category, source_id)
        )
    for masks in library.values():
        masks.sort(key=lambda m: m.source_id)
    return library


def save_mask(mask: InstanceMask, mask_dir: str | Path, stem: str) -> Path:
    """Write a cutout PNG plus its sidecar record; returns the PNG path."""
    mask_dir = Path(mask_dir)
    mask_dir.mkdir(parents=True, exist_ok=True)
    png = mask_dir / f"{stem}.png"
    save_image(png, mask.cutout)
    sidecar = {"category": mask.category, "source_id": mask.source_id}
    (mask_dir / f"{stem}.json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return png
