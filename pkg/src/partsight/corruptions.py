"""Parametric photometric corruptions applied at fixed severity.

Every kind preserves image geometry (dimensions, channel layout), so ground
truth boxes carry over to corrupted variants unchanged. Stochastic kinds
(the noise family) are deterministic given (image, spec, seed).
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import cv2
import numpy as np

from .errors import ConfigurationError, InputError, RegistryError
from .geometry import ensure_image, load_image, save_image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

# Kinds where a signed severity encodes direction (darken vs brighten,
# reduce vs boost); all other kinds require severity >= 0.
SIGNED_SEVERITY_KINDS = {"brightness", "contrast"}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: float
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", self.kind)
        if self.severity < 0 and self.kind not in SIGNED_SEVERITY_KINDS:
            raise ConfigurationError(f"{self.kind}: severity must be non-negative")


def _split_alpha(image: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    if image.shape[2] == 4:
        return image[:, :, :3], image[:, :, 3]
    return image, None


def _merge_alpha(rgb: np.ndarray, alpha: np.ndarray | None) -> np.ndarray:
    if alpha is None:
        return rgb
    return np.dstack([rgb, alpha])


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    if arr.dtype != np.uint8:
        np.rint(arr, out=arr)
        np.clip(arr, 0, 255, out=arr)
        arr = arr.astype(np.uint8)
    return arr


def _gaussian_blur(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.severity == 0:
        return rgb
    return cv2.GaussianBlur(rgb, (0, 0), sigmaX=spec.severity)


def _motion_blur_kernel(length: int, angle_deg: float) -> np.ndarray:
    kernel = np.zeros((length, length), dtype=np.float32)
    theta = np.deg2rad(angle_deg)
    cx = (length - 1) / 2.0
    for i in range(length):
        t = i - (length - 1) / 2.0
        x = int(round(cx + t * np.cos(theta)))
        y = int(round(cx + t * np.sin(theta)))
        kernel[y, x] = 1.0
    return kernel / kernel.sum()


def _motion_blur(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    length = int(np.ceil(spec.severity))
    if length <= 1:
        return rgb
    angle = float(spec.params.get("angle", 0.0))
    return cv2.filter2D(rgb, -1, _motion_blur_kernel(length, angle))


def _gaussian_noise(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(rgb.shape, dtype=np.float32)
    noise *= spec.severity * 255.0
    noise += rgb
    return _to_uint8(noise)


def _iso_noise(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    # Sensor-style noise: luminance-proportional component shared by all
    # channels plus weaker independent per-channel (chroma) noise.
    arr = rgb.astype(np.float32)
    weights = np.array([0.299, 0.587, 0.114], dtype=np.float32)
    luma = arr.reshape(-1, 3) @ weights
    luma = luma.reshape(arr.shape[:2])
    std = np.sqrt(luma / np.float32(255.0))
    std *= spec.severity * 255.0
    luma_noise = rng.standard_normal(luma.shape, dtype=np.float32)
    luma_noise *= std
    noise = rng.standard_normal(arr.shape, dtype=np.float32)
    noise *= spec.severity / 2.0 * 255.0
    noise += luma_noise[:, :, None]
    noise += arr
    return _to_uint8(noise)


def _hsv_shift(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    hsv = cv2.cvtColor(rgb.astype(np.float32) / 255.0, cv2.COLOR_RGB2HSV)
    hsv[:, :, 0] = np.mod(hsv[:, :, 0] + spec.severity, 360.0)
    out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return _to_uint8(out * 255.0)


def _color_shift(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    shift = np.asarray(spec.params.get("shift", [25.0, -15.0, 10.0]), dtype=np.float32)
    if shift.shape != (3,):
        raise ConfigurationError("color_shift: params.shift must have 3 components")
    arr = rgb.astype(np.float32)
    arr += np.float32(spec.severity) * shift
    return _to_uint8(arr)


def _brightness(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    arr = rgb.astype(np.float32)
    arr *= np.float32(1.0 + spec.severity)
    return _to_uint8(arr)


def _contrast(rgb: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    mean = np.asarray(cv2.mean(rgb)[:3], dtype=np.float32)
    arr = rgb.astype(np.float32)
    arr -= mean
    arr *= np.float32(1.0 + spec.severity)
    arr += mean
    return _to_uint8(arr)


_REGISTRY: dict[str, Callable[[np.ndarray, CorruptionSpec, np.random.Generator], np.ndarray]] = {
    "motion_blur": _motion_blur,
    "gaussian_blur": _gaussian_blur,
    "gaussian_noise": _gaussian_noise,
    "iso_noise": _iso_noise,
    "hsv_shift": _hsv_shift,
    "color_shift": _color_shift,
    "brightness": _brightness,
    "contrast": _contrast,
}


def registered_kinds() -> list[str]:
    return sorted(_REGISTRY)


def register_kind(name: str, fn: Callable[[np.ndarray, CorruptionSpec, np.random.Generator], np.ndarray]) -> None:
    if name in _REGISTRY:
        raise RegistryError(f"corruption kind {name!r} already registered")
    _REGISTRY[name] = fn


def apply(image: np.ndarray, spec: CorruptionSpec, seed: int = 0) -> np.ndarray:
    """Apply one corruption; output has the source dimensions and layout."""
    ensure_image(image)
    try:
        fn = _REGISTRY[spec.kind]
    except KeyError:
        raise RegistryError(f"unknown corruption kind {spec.kind!r}") from None
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF]))
    rgb, alpha = _split_alpha(image)
    out = fn(rgb, spec, rng)
    return _merge_alpha(out, alpha)


def load_profile(path: str | Path) -> list[CorruptionSpec]:
    """Read a profile file: a JSON list of specs (optionally under "specs")."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read profile {path}: {exc}") from exc
    entries = doc["specs"] if isinstance(doc, dict) else doc
    specs = []
    for entry in entries:
        try:
            specs.append(
                CorruptionSpec(
                    kind=entry["kind"],
                    severity=float(entry["severity"]),
                    name=entry.get("name", ""),
                    params=entry.get("params", {}),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad profile entry {entry!r}: {exc}") from exc
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigurationError("profile spec names must be unique")
    return specs


def default_profile() -> list[CorruptionSpec]:
    with resources.files("partsight.profiles").joinpath("default_corruptions.json").open() as fh:
        doc = json.load(fh)
    return load_profile_entries(doc["specs"])


def load_profile_entries(entries: list[dict]) -> list[CorruptionSpec]:
    return [
        CorruptionSpec(
            kind=e["kind"],
            severity=float(e["severity"]),
            name=e.get("name", ""),
            params=e.get("params", {}),
        )
        for e in entries
    ]


def _stem_seed_token(stem: str) -> int:
    return int.from_bytes(hashlib.sha256(stem.encode("utf-8")).digest()[:8], "big")


def variant_name(stem: str, tag: str, suffix: str) -> str:
    return f"{stem}__{tag}{suffix}"


def corruption_tag(filename: str) -> str:
    """Corruption tag encoded in a variant filename (text after final '__')."""
    stem = Path(filename).stem
    if "__" not in stem:
        return "clean"
    return stem.rsplit("__", 1)[1]


def build_corrupted_set(clean_dir: str | Path, specs: list[CorruptionSpec], seed: int,
                        out_dir: str | Path) -> dict:
    """Emit clean copies plus one variant per (image, spec) into out_dir.

    Output count is (1 + len(specs)) * M for M clean images. Label files
    sharing an image's stem are copied alongside every variant unchanged
    (all kinds are photometric, so boxes carry over).
    """
    clean_dir = Path(clean_dir)
    out_dir = Path(out_dir)
    images = sorted(p for p in clean_dir.iterdir()
                    if p.suffix.lower() in IMAGE_SUFFIXES) if clean_dir.is_dir() else []
    if not images:
        raise InputError(f"no images found in {clean_dir}")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigurationError("corruption spec names must be unique")

    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for path in images:
        stem, suffix = path.stem, path.suffix
        label = path.with_suffix(".txt")
        shutil.copyfile(path, out_dir / variant_name(stem, "clean", suffix))
        if label.exists():
            shutil.copyfile(label, out_dir / variant_name(stem, "clean", ".txt"))
        written += 1
        if not specs:
            continue
        image = load_image(path)
        for spec_index, spec in enumerate(specs):
            derived = np.random.SeedSequence(
                [int(seed) & 0xFFFFFFFF, _stem_seed_token(stem), spec_index]
            ).generate_state(1)[0]
            corrupted = apply(image, spec, seed=int(derived))
            save_image(out_dir / variant_name(stem, spec.name, suffix), corrupted)
            if label.exists():
                shutil.copyfile(label, out_dir / variant_name(stem, spec.name, ".txt"))
            written += 1

    return {
        "clean_images": len(images),
        "specs": names,
        "outputs": written,
        "expected_outputs": (1 + len(specs)) * len(images),
        "out_dir": str(out_dir),
    }
