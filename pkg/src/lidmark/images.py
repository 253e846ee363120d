"""Floating-point image container and 8-bit PNG round trip.

Images are stored channel-first (3, H, W) in float32 with a declared value
range of [-1, 1]. On disk they are plain 8-bit RGB PNGs; quantization happens
only at the disk boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError, DomainBoundsError

SUPPORTED_SIZES = (64, 128, 256)

VALUE_RANGE = (-1.0, 1.0)


@dataclass
class ImageBuffer:
    """A square RGB image, channel-first float32, values in [-1, 1]."""

    data: np.ndarray
    range: tuple[float, float] = field(default=VALUE_RANGE)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise DimensionMismatchError(
                f"expected (3, H, W) image data, got shape {self.data.shape}"
            )
        h, w = self.data.shape[1:]
        if h != w:
            raise DimensionMismatchError(f"expected a square image, got {h}x{w}")

    @property
    def size(self) -> int:
        return self.data.shape[1]

    def validate_size(self) -> "ImageBuffer":
        if self.size not in SUPPORTED_SIZES:
            raise DomainBoundsError(
                f"image side {self.size} not in supported sizes {SUPPORTED_SIZES}"
            )
        return self

    def clipped(self) -> "ImageBuffer":
        lo, hi = self.range
        return ImageBuffer(np.clip(self.data, lo, hi), self.range)


def from_uint8(rgb: np.ndarray) -> ImageBuffer:
    """Convert an (H, W, 3) uint8 array to a [-1, 1] ImageBuffer."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionMismatchError(f"expected (H, W, 3) uint8 data, got {rgb.shape}")
    data = rgb.astype(np.float32) / 255.0 * 2.0 - 1.0
    return ImageBuffer(np.moveaxis(data, 2, 0))


def to_uint8(img: ImageBuffer) -> np.ndarray:
    """Quantize a [-1, 1] ImageBuffer to an (H, W, 3) uint8 array."""
    data = np.moveaxis(img.clipped().data, 0, 2)
    return np.round((data + 1.0) / 2.0 * 255.0).astype(np.uint8)


def load_png(path) -> ImageBuffer:
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"))
    return from_uint8(rgb)


def save_png(img: ImageBuffer, path) -> None:
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")
