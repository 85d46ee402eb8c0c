"""White-canvas refinement: turn high-confidence detections into a
background-free pseudo-labeled dataset.

For every source image with at least one qualifying detection, the pixels
inside each qualifying box are copied at their original coordinates onto a
clean canvas of the same size. Pseudo-labels are the detection boxes as
given (clipped to image bounds, never re-tightened).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError
from .formats import write_canonical_json, write_label_file
from .geometry import BoundingBox, load_image, new_canvas, save_image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class RefinementConfig:
    confidence_threshold: float = 0.5
    canvas_color: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self):
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ConfigurationError("confidence threshold must be in [0, 1]")


def _int_cover(box: BoundingBox, width: int, height: int) -> tuple[int, int, int, int]:
    x0 = max(0, int(np.floor(box.x_min)))
    y0 = max(0, int(np.floor(box.y_min)))
    x1 = min(width, int(np.ceil(box.x_max)))
    y1 = min(height, int(np.ceil(box.y_max)))
    return x0, y0, x1, y1


def refine_dataset(
    images_dir: str | Path,
    detections: list[dict],
    config: RefinementConfig,
    out_dir: str | Path,
    class_list: list[str] | None = None,
) -> dict:
    """Emit one white-canvas image per source image with qualifying detections.

    `detections` are records in the shared JSON-lines schema ({image_id,
    label, bbox, confidence}). Qualifying crops are copied in ascending
    confidence so the most confident crop lands on top. Returns a manifest
    also written to out_dir/manifest.json.
    """
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    image_paths = sorted(
        p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    ) if images_dir.is_dir() else []
    if not image_paths:
        raise InputError(f"no images in {images_dir}")

    by_image: dict[str, list[dict]] = {}
    known = {p.stem for p in image_paths}
    unmatched = sorted({rec["image_id"] for rec in detections if rec["image_id"] not in known})
    if unmatched:
        raise InputError(
            f"{len(unmatched)} detection image ids not found in {images_dir}: "
            f"{', '.join(unmatched[:5])}"
        )
    for rec in detections:
        by_image.setdefault(rec["image_id"], []).append(rec)

    if class_list is None:
        class_list = sorted(
            {
                rec["label"]
                for recs in by_image.values()
                for rec in recs
                if rec["confidence"] >= config.confidence_threshold
            }
        )
    class_index = {c: i for i, c in enumerate(class_list)}

    images_out = out_dir / "images"
    labels_out = out_dir / "labels"
    images_out.mkdir(parents=True, exist_ok=True)
    labels_out.mkdir(parents=True, exist_ok=True)

    records = []
    skipped = 0
    pseudo_labels = 0
    for path in image_paths:
        qualifying = [
            rec
            for rec in by_image.get(path.stem, [])
            if rec["confidence"] >= config.confidence_threshold
        ]
        if not qualifying:
            skipped += 1
            continue
        source = load_image(path)
        height, width = source.shape[:2]
        canvas = new_canvas(width, height, config.canvas_color, channels=source.shape[2])

        qualifying.sort(key=lambda r: r["confidence"])  # most confident copied last
        entries = []
        for rec in qualifying:
            box = BoundingBox(*rec["bbox"]).clip(width, height)
            if box.area <= 0:
                continue
            x0, y0, x1, y1 = _int_cover(box, width, height)
            canvas[y0:y1, x0:x1] = source[y0:y1, x0:x1]
            label = rec["label"]
            if label not in class_index:
                raise InputError(f"detection label {label!r} missing from class list")
            entries.append((class_index[label], box, label, rec["confidence"]))

        stem = path.stem
        save_image(images_out / f"{stem}.png", canvas)
        write_label_file(
            labels_out / f"{stem}.txt",
            [(ci, box) for ci, box, _, _ in entries],
            width,
            height,
        )
        pseudo_labels += len(entries)
        records.append(
            {
                "image": f"images/{stem}.png",
                "label": f"labels/{stem}.txt",
                "source": path.name,
                "instances": [
                    {
                        "category": label,
                        "category_index": ci,
                        "bbox": [float(v) for v in box.as_list()],
                        "confidence": float(conf),
                    }
                    for ci, box, label, conf in entries
                ],
            }
        )

    manifest = {
        "class_list": class_list,
        "confidence_threshold": config.confidence_threshold,
        "canvas_color": list(config.canvas_color),
        "source_images": len(image_paths),
        "refined_images": len(records),
        "skipped_images": skipped,
        "pseudo_labels": pseudo_labels,
        "records": records,
    }
    write_canonical_json(out_dir / "manifest.json", manifest)
    return manifest
