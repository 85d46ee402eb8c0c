"""On-disk interchange formats shared across the toolkit.

- Detections: JSON-lines, one record per detection
  ``{"image_id": ..., "label": ..., "bbox": [x_min, y_min, x_max, y_max],
  "confidence": ..., "frame_index": optional}``.
- Depth maps: binary, magic ``DPTH``, little-endian u32 width, u32 height,
  then width*height little-endian float32 values row-major.
- Labels: one text file per image, one ``class_index cx cy w h`` line per
  instance, coordinates normalized to [0, 1] with 6 fixed decimals.
- Canonical JSON: sorted keys, compact separators, trailing newline — the
  byte-stable encoding used for manifests, reports, and transcripts.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InputError
from .geometry import BoundingBox

DEPTH_MAGIC = b"DPTH"


def canonical_json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def write_canonical_json(path: str | Path, obj) -> None:
    Path(path).write_bytes(canonical_json_bytes(obj))


def detection_record(image_id: str, label: str, box: BoundingBox, confidence: float,
                     frame_index: int | None = None) -> dict:
    rec = {
        "image_id": image_id,
        "label": label,
        "bbox": [float(v) for v in box.as_list()],
        "confidence": float(confidence),
    }
    if frame_index is not None:
        rec["frame_index"] = int(frame_index)
    return rec


def write_detections_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def read_detections_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                bbox = rec["bbox"]
                if len(bbox) != 4:
                    raise ValueError("bbox must have 4 values")
                rec["bbox"] = [float(v) for v in bbox]
                rec["confidence"] = float(rec["confidence"])
                rec["label"] = str(rec["label"])
                rec["image_id"] = str(rec["image_id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: bad detection record: {exc}") from exc
            records.append(rec)
    return records


def write_depth_map(path: str | Path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise InputError("depth map must be 2-D")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(values.astype("<f4").tobytes(order="C"))


def read_depth_map(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != DEPTH_MAGIC:
        raise InputError(f"{path}: not a depth map file")
    w, h = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * w * h
    if len(data) != expected:
        raise InputError(f"{path}: expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data[12:], dtype="<f4").reshape(h, w).astype(np.float32)
    if not np.isfinite(values).all():
        raise InputError(f"{path}: depth values must be finite")
    return values


def box_to_label_line(class_index: int, box: BoundingBox, width: int, height: int) -> str:
    cx = (box.x_min + box.x_max) / 2.0 / width
    cy = (box.y_min + box.y_max) / 2.0 / height
    bw = box.width / width
    bh = box.height / height
    return f"{class_index} {cx:.6f} {cy:.6f} {bw:.6f} {bh:.6f}"

def write_label_file(path: str | Path, entries: Iterable[tuple[int, BoundingBox]],
                     width: int, height: int) -> None:
    lines = [box_to_label_line(ci, box, width, height) for ci, box in entries]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_label_file(path: str | Path, width: int, height: int) -> list[tuple[int, BoundingBox]]:
    """Parse a label file back into pixel-space (class_index, box) pairs."""
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise InputError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            ci = int(parts[0])
            cx, cy, bw, bh = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        box = BoundingBox(
            (cx - bw / 2.0) * width,
            (cy - bh / 2.0) * height,
            (cx + bw / 2.0) * width,
            (cy + bh / 2.0) * height,
        )
        entries.append((ci, box))
    return entries


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tree_digest(root: str | Path, pattern: str = "**/*", exclude: tuple[str, ...] = ()) -> str:
    """Order-independent digest over relative paths and file contents."""
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.glob(pattern) if p.is_file() and p.name not in exclude):
        digest.update(path.relative_to(root).as_posix().encode("utf-8"))
        digest.update(b"\0")
        digest.update(bytes.fromhex(file_digest(path)))
    return digest.hexdigest()
