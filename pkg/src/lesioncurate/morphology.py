"""Grayscale and binary morphology with edge-replicated borders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .errors import ElementTooLarge, NotColorImage
from .image import RasterImage, quantize, resize_bilinear

SHAPES = ("square", "disk")


@dataclass(frozen=True)
class StructuringElement:
    shape: str = "square"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"radius must be an integer >= 1, got {self.radius!r}")

    @property
    def footprint(self) -> np.ndarray:
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        y, x = np.mgrid[-r : r + 1, -r : r + 1]
        return x * x + y * y <= r * r


def _check_fits(plane: np.ndarray, se: StructuringElement) -> None:
    h, w = plane.shape[:2]
    if 2 * se.radius >= min(h, w):
        raise ElementTooLarge(
            f"{se.shape} element of radius {se.radius} does not fit a {w}x{h} plane"
        )


def erode_gray(plane: np.ndarray, se: StructuringElement) -> np.ndarray:
    plane = np.asarray(plane)
    _check_fits(plane, se)
    return ndi.grey_erosion(plane, footprint=se.footprint, mode="nearest")


def dilate_gray(plane: np.ndarray, se: StructuringElement) -> np.ndarray:
    plane = np.asarray(plane)
    _check_fits(plane, se)
    return ndi.grey_dilation(plane, footprint=se.footprint, mode="nearest")


def close_gray(plane: np.ndarray, se: StructuringElement) -> np.ndarray:
    return erode_gray(dilate_gray(plane, se), se)


def close_mask(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Binary closing.

    Runs through the grayscale kernels so that borders are replicated rather
    than treated as background; this keeps the result a superset of the input
    even for foreground touching the frame.
    """
    mask = np.asarray(mask, dtype=bool)
    closed = close_gray(mask.astype(np.uint8), se)
    return closed.astype(bool)


@dataclass(frozen=True)
class DenoiseParams:
    close_element: StructuringElement = StructuringElement("square", 2)
    erode_element: StructuringElement = StructuringElement("square", 1)
    interp_factor: int = 2

    def __post_init__(self):
        if int(self.interp_factor) != self.interp_factor or self.interp_factor < 1:
            raise ValueError("interp_factor must be an integer >= 1")


def smooth_resample(plane: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear downscale by ``factor`` and back up to the original size."""
    if factor == 1:
        return np.asarray(plane).copy()
    h, w = plane.shape
    small_h = max(1, (2 * h + factor) // (2 * factor))
    small_w = max(1, (2 * w + factor) // (2 * factor))
    small = quantize(resize_bilinear(plane, small_h, small_w))
    return quantize(resize_bilinear(small, h, w))


def denoise(img: RasterImage, params: DenoiseParams = DenoiseParams()) -> RasterImage:
    """Closing, then erosion, then down/up bilinear smoothing, per channel."""
    if img.channels != 3:
        raise NotColorImage("denoise expects a 3-channel image")
    out = []
    for c in range(3):
        plane = img.pixels[:, :, c]
        plane = close_gray(plane, params.close_element)
        plane = erode_gray(plane, params.erode_element)
        out.append(smooth_resample(plane, params.interp_factor))
    return RasterImage.from_planes(*out)
