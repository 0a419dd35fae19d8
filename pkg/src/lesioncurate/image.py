"""Raster images, gray planes and intensity histograms.

A gray plane is a plain 2-D ``uint8`` array of shape ``(height, width)``.
Histograms are length-256 integer arrays and intensity distributions are
length-256 float arrays summing to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeError,
    EmptyHistogram,
    ImageIOError,
    NotColorImage,
    UnsupportedDepth,
)

CHANNELS = {"R": 0, "G": 1, "B": 2}
N_BINS = 256


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit image with 1 or 3 interleaved channels.

    ``pixels`` is always stored as a read-only ``(height, width, channels)``
    uint8 array.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if px.dtype != np.uint8:
            if np.issubdtype(px.dtype, np.floating) and not np.all(np.isfinite(px)):
                raise ValueError("pixel values must be finite")
            if px.min() < 0 or px.max() > 255:
                raise ValueError("pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.array(px, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    @classmethod
    def from_planes(cls, *planes: np.ndarray) -> "RasterImage":
        return cls(np.stack(planes, axis=-1))


def load_image(path) -> RasterImage:
    """Decode a PNG or JPEG file into a :class:`RasterImage`.

    Grayscale sources give a 1-channel image, color sources a 3-channel one.
    Sources with an alpha channel or more than 8 bits per sample are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise DecodeError(f"{path}: unsupported format {im.format}")
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise UnsupportedDepth(f"{path}: {mode} is not an 8-bit mode")
            if mode in ("RGBA", "LA", "La", "RGBa", "PA") or (
                mode == "P" and "transparency" in im.info
            ):
                raise DecodeError(f"{path}: alpha channels are not supported")
            if mode == "1":
                im = im.convert("L")
            elif mode == "P":
                # palette images may still be gray; keep the decoded colors
                im = im.convert("RGB")
            elif mode in ("CMYK", "YCbCr"):
                im = im.convert("RGB")
            if im.mode not in ("L", "RGB"):
                raise DecodeError(f"{path}: unsupported mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc
    except OSError as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc
    return RasterImage(arr)


def save_png(path, data) -> None:
    """Write a RasterImage, gray plane or boolean mask as PNG."""
    if isinstance(data, RasterImage):
        arr = data.pixels[:, :, 0] if data.channels == 1 else data.pixels
    else:
        arr = np.asarray(data)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8) * 255
        arr = arr.astype(np.uint8)
    try:
        Image.fromarray(np.ascontiguousarray(arr)).save(Path(path), format="PNG")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def to_gray(img: RasterImage) -> np.ndarray:
    """Luma conversion ``round(0.299 R + 0.587 G + 0.114 B)``, half rounded up.

    Integer arithmetic keeps the rounding exact.
    """
    px = img.pixels
    if img.channels == 1:
        return px[:, :, 0].copy()
    rgb = px.astype(np.int32)
    y = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
    return np.clip(y, 0, 255).astype(np.uint8)


def extract_channel(img: RasterImage, channel: str) -> np.ndarray:
    if img.channels != 3:
        raise NotColorImage(f"channel {channel!r} requested from a {img.channels}-channel image")
    try:
        idx = CHANNELS[channel.upper()]
    except KeyError:
        raise ValueError(f"channel must be one of R, G, B; got {channel!r}") from None
    return img.pixels[:, :, idx].copy()


def histogram(plane: np.ndarray) -> np.ndarray:
    plane = np.asarray(plane)
    if plane.size == 0:
        raise EmptyHistogram("cannot histogram an empty plane")
    return np.bincount(plane.astype(np.uint8).ravel(), minlength=N_BINS).astype(np.int64)


def normalize_histogram(hist: np.ndarray) -> np.ndarray:
    hist = np.asarray(hist)
    total = hist.sum()
    if total <= 0:
        raise EmptyHistogram("histogram has no counts")
    return hist.astype(np.float64) / float(total)


def resize_bilinear(plane: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and clamped borders.

    Returns float64; callers decide how to quantize.
    """
    src = np.asarray(plane, dtype=np.float64)
    if out_height < 1 or out_width < 1:
        raise ValueError("output size must be at least 1x1")

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, ty = axis_weights(src.shape[0], out_height)
    x0, x1, tx = axis_weights(src.shape[1], out_width)
    rows = src[y0] * (1.0 - ty)[:, None] + src[y1] * ty[:, None]
    return rows[:, x0] * (1.0 - tx) + rows[:, x1] * tx


def quantize(values: np.ndarray) -> np.ndarray:
    """Round half up and clamp to uint8."""
    return np.clip(np.floor(np.asarray(values) + 0.5), 0, 255).astype(np.uint8)
