"""Copy-paste dataset factory: constrained layouts, compositing, and splits.

Layouts are sampled under three constraints: instances per image drawn from
[k_min, k_max], at most `per_category_cap` instances of one category, and
pairwise box IoU between pasted instances below `max_pair_iou`. Category
draws are uniform over the categories still below the cap, which keeps the
class balance flat. Per-image seeds are derived from (global seed, image
index) so generation order never changes output bytes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, InputError
from .formats import write_canonical_json, write_label_file
from .geometry import (
    BoundingBox,
    InstanceMask,
    affine_transform,
    iou,
    letterbox,
    load_image,
    paste,
    save_image,
)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class CompositionConfig:
    k_min: int = 3
    k_max: int = 5
    per_category_cap: int = 2
    max_pair_iou: float = 0.5
    scale_range: tuple[float, float] = (0.5, 1.5)
    rotation_range: tuple[float, float] = (0.0, 360.0)
    max_placement_attempts: int = 50
    output_size: tuple[int, int] = (1280, 720)  # (width, height)

    def __post_init__(self):
        if not (1 <= self.k_min <= self.k_max):
            raise ConfigurationError("need 1 <= k_min <= k_max")
        if not (0.0 <= self.max_pair_iou <= 1.0):
            raise ConfigurationError("max_pair_iou must be in [0, 1]")
        if self.per_category_cap < 1:
            raise ConfigurationError("per_category_cap must be >= 1")
        if self.scale_range[0] <= 0 or self.scale_range[0] > self.scale_range[1]:
            raise ConfigurationError("scale range must be positive and ordered")
        if self.max_placement_attempts < 1:
            raise ConfigurationError("max_placement_attempts must be >= 1")
        w, h = self.output_size
        if w < 1 or h < 1:
            raise ConfigurationError("output size must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_range"] = list(self.scale_range)
        d["rotation_range"] = list(self.rotation_range)
        d["output_size"] = list(self.output_size)
        return d


@dataclass(frozen=True)
class LayoutItem:
    """One accepted placement: source mask plus its sampled transform."""

    mask: InstanceMask
    scale: float
    rotation: float
    position: tuple[int, int]
    box: BoundingBox  # tight bounds of the transformed mask at `position`

    @property
    def category(self) -> str:
        return self.mask.category


def _transformed(mask: InstanceMask, scale: float, rotation: float) -> InstanceMask:
    return affine_transform(mask, scale, rotation)


def sample_layout(
    config: CompositionConfig,
    class_list: list[str],
    mask_library: dict[str, list[InstanceMask]],
    rng: np.random.Generator,
) -> list[LayoutItem]:
    """Sample one image's placements under the composition constraints.

    A placement that still violates the IoU bound after
    `max_placement_attempts` draws is dropped, shrinking the instance count;
    the first instance is always placed (its final attempt falls back to an
    unrotated fit-to-canvas scale), so a layout never comes back empty.
    """
    if not class_list:
        raise ConfigurationError("class list is empty")
    for cls in class_list:
        if not mask_library.get(cls):
            raise ConfigurationError(f"class {cls!r} has no masks")

    width, height = config.output_size
    k = int(rng.integers(config.k_min, config.k_max + 1))
    counts: dict[str, int] = {}
    items: list[LayoutItem] = []

    for _ in range(k):
        eligible = [c for c in class_list if counts.get(c, 0) < config.per_category_cap]
        if not eligible:
            break
        category = eligible[int(rng.integers(len(eligible)))]
        masks = mask_library[category]
        mask = masks[int(rng.integers(len(masks)))]

        placed = None
        for attempt in range(config.max_placement_attempts):
            scale = float(rng.uniform(*config.scale_range))
            rotation = float(rng.uniform(*config.rotation_range))
            forced_fit = not items and attempt == config.max_placement_attempts - 1
            if forced_fit:
                rotation = 0.0
                fit = 0.95 * min(width / mask.width, height / mask.height)
                scale = min(scale, fit)
            try:
                transformed = _transformed(mask, scale, rotation)
            except Exception:
                continue
            if transformed.width > width or transformed.height > height:
                continue
            x = int(rng.integers(0, width - transformed.width + 1))
            y = int(rng.integers(0, height - transformed.height + 1))
            box = BoundingBox(x, y, x + transformed.width, y + transformed.height)
            if any(iou(box, other.box) >= config.max_pair_iou for other in items):
                continue
            placed = LayoutItem(mask, scale, rotation, (x, y), box)
            break

        if placed is not None:
            items.append(placed)
            counts[category] = counts.get(category, 0) + 1

    if not items:
        raise ConfigurationError(
            "could not place any instance; masks larger than the output canvas?"
        )
    return items


def compose_image(
    background: np.ndarray, layout: list[LayoutItem]
) -> tuple[np.ndarray, list[tuple[str, BoundingBox]]]:
    """Paste the layout's masks in order; one annotation per instance."""
    canvas = background
    annotations: list[tuple[str, BoundingBox]] = []
    for item in layout:
        transformed = _transformed(item.mask, item.scale, item.rotation)
        canvas, box = paste(canvas, transformed, item.position)
        annotations.append((item.category, box))
    return canvas, annotations


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise InputError(f"{directory} is not a directory")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise InputError(f"no images in {directory}")
    return paths


@dataclass
class DatasetManifest:
    class_list: list[str]
    split: str
    image_count: int
    seed: int
    config: dict
    records: list[dict] = field(default_factory=list)
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "class_list": self.class_list,
            "split": self.split,
            "image_count": self.image_count,
            "seed": self.seed,
            "config": self.config,
            "records": self.records,
            "version": self.version,
        }


def generate_dataset(
    background_dir: str | Path,
    mask_dir: str | Path,
    config: CompositionConfig,
    count: int,
    split: str,
    seed: int,
    out_dir: str | Path,
    class_list: list[str] | None = None,
    mask_library: dict[str, list[InstanceMask]] | None = None,
) -> DatasetManifest:
    """Write `count` composites plus label files and a manifest under out_dir."""
    from .geometry import load_mask_library

    if count < 0:
        raise ConfigurationError("count must be >= 0")
    out_dir = Path(out_dir)
    background_paths = _list_images(Path(background_dir))
    if mask_library is None:
        mask_library = load_mask_library(mask_dir)
    if not mask_library:
        raise ConfigurationError(f"no masks found in {mask_dir}")
    if class_list is None:
        class_list = sorted(mask_library)
    class_index = {c: i for i, c in enumerate(class_list)}

    width, height = config.output_size
    backgrounds = {
        p.name: letterbox(load_image(p), width, height) for p in background_paths
    }
    bg_names = sorted(backgrounds)

    images_dir = out_dir / "images"
    labels_dir = out_dir / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    manifest = DatasetManifest(
        class_list=list(class_list),
        split=split,
        image_count=count,
        seed=int(seed),
        config=config.to_dict(),
    )

    for index in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), index]))
        bg_name = bg_names[int(rng.integers(len(bg_names)))]
        layout = sample_layout(config, class_list, mask_library, rng)
        image, annotations = compose_image(backgrounds[bg_name], layout)

        stem = f"{split}_{index:06d}"
        image_rel = f"images/{stem}.png"
        label_rel = f"labels/{stem}.txt"
        save_image(images_dir / f"{stem}.png", image)
        write_label_file(
            labels_dir / f"{stem}.txt",
            [(class_index[cat], box) for cat, box in annotations],
            width,
            height,
        )
        manifest.records.append(
            {
                "image": image_rel,
                "label": label_rel,
                "background_id": bg_name,
                "mask_source_ids": [item.mask.source_id for item in layout],
                "seed_tokens": [int(seed), index],
                "instances": [
                    {
                        "category": cat,
                        "category_index": class_index[cat],
                        "bbox": [float(v) for v in box.as_list()],
                    }
                    for cat, box in annotations
                ],
            }
        )

    write_canonical_json(out_dir / "manifest.json", manifest.to_dict())
    return manifest
