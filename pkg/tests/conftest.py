import numpy as np
import pytest

from partsight.geometry import InstanceMask


def square_mask(size: int, color=(200, 40, 40), category="part", source_id="m0",
                alpha=255) -> InstanceMask:
    rgba = np.zeros((size, size, 4), dtype=np.uint8)
    rgba[:, :, 0] = color[0]
    rgba[:, :, 1] = color[1]
    rgba[:, :, 2] = color[2]
    rgba[:, :, 3] = alpha
    return InstanceMask(rgba, category, source_id)


def rect_mask(width: int, height: int, color=(60, 180, 75), category="part",
              source_id="m1") -> InstanceMask:
    rgba = np.zeros((height, width, 4), dtype=np.uint8)
    rgba[:, :, :3] = color
    rgba[:, :, 3] = 255
    return InstanceMask(rgba, category, source_id)


def disk_mask(radius: int, color=(0, 120, 200), category="part", source_id="m2") -> InstanceMask:
    size = 2 * radius + 1
    yy, xx = np.mgrid[0:size, 0:size]
    inside = (xx - radius) ** 2 + (yy - radius) ** 2 <= radius**2
    rgba = np.zeros((size, size, 4), dtype=np.uint8)
    rgba[:, :, :3] = color
    rgba[:, :, 3] = np.where(inside, 255, 0)
    return InstanceMask(rgba, category, source_id)


def gradient_image(width: int, height: int, channels: int = 3, seed: int = 0) -> np.ndarray:
    """Smooth deterministic test image (cheap to encode as PNG)."""
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 96, size=3)
    xx = np.linspace(0, 159, width, dtype=np.float32)
    yy = np.linspace(0, 95, height, dtype=np.float32)[:, None]
    img = np.zeros((height, width, channels), dtype=np.float32)
    img[:, :, 0] = base[0] + xx[None, :]
    img[:, :, 1] = base[1] + yy
    img[:, :, 2] = base[2] + (xx[None, :] + yy) / 2.0
    if channels == 4:
        img[:, :, 3] = 255
    return np.clip(img, 0, 255).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
