"""Lesion segmentation: Otsu threshold, mask cleanup and ROI extraction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .errors import DegeneratePlane, EmptyMask, NotColorImage
from .image import RasterImage, extract_channel, histogram
from .morphology import DenoiseParams, StructuringElement, close_mask, denoise

POLARITIES = ("darker", "brighter")

# clockwise Moore neighbourhood starting west, (dy, dx) with y pointing down
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def otsu_threshold(plane: np.ndarray) -> int:
    """Threshold ``t`` maximising between-class variance of ``{<= t}`` vs ``{> t}``.

    The criterion w0*w1*(mu0 - mu1)**2 is compared as an exact rational
    (s0*n1 - s1*n0)**2 / (n0*n1) using Python integers, so ties are real ties
    and the smallest maximiser wins.
    """
    counts = histogram(plane).tolist()
    if sum(1 for c in counts if c) < 2:
        raise DegeneratePlane("Otsu threshold needs at least two distinct intensities")
    total = sum(counts)
    total_sum = sum(i * c for i, c in enumerate(counts))
    n0 = s0 = 0
    best_t, best_num, best_den = -1, 0, 1
    for t in range(255):
        c = counts[t]
        n0 += c
        s0 += t * c
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (s0 * n1 - (total_sum - s0) * n0) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def apply_threshold(plane: np.ndarray, t: int, polarity: str = "darker") -> np.ndarray:
    """Foreground mask: ``<= t`` for dark lesions, ``> t`` for bright ones.

    Both polarities use the same two classes Otsu separates.
    """
    plane = np.asarray(plane)
    if polarity == "darker":
        return plane <= t
    if polarity == "brighter":
        return plane > t
    raise ValueError(f"polarity must be one of {POLARITIES}, got {polarity!r}")


def trace_contour(component: np.ndarray) -> list[tuple[int, int]]:
    """Outer boundary of a single 8-connected component by Moore-neighbour tracing.

    Returns the (row, col) pixels in visiting order, starting from the first
    foreground pixel in raster order. Tracing stops on Jacob's criterion: back
    at the start pixel and about to repeat the first move.
    """
    padded = np.pad(np.asarray(component, dtype=bool), 1)
    ys, xs = np.nonzero(padded)
    if ys.size == 0:
        return []
    order = np.lexsort((xs, ys))
    start = (int(ys[order[0]]), int(xs[order[0]]))
    contour = [start]

    def step(p, back_dir):
        # scan clockwise from the backtrack neighbour
        for k in range(1, 9):
            d = (back_dir + k) % 8
            dy, dx = _MOORE[d]
            q = (p[0] + dy, p[1] + dx)
            if padded[q]:
                prev = _MOORE[(d - 1) % 8]
                b = (p[0] + prev[0] - q[0], p[1] + prev[1] - q[1])
                return q, _MOORE_INDEX[b]
        return None, back_dir

    first, back = step(start, 0)
    if first is None:
        return [(start[0] - 1, start[1] - 1)]
    p = first
    first_move = first
    while True:
        if p == start:
            nxt, nback = step(p, back)
            if nxt == first_move:
                break
            contour.append(p)
            p, back = nxt, nback
            continue
        contour.append(p)
        p, back = step(p, back)
    return [(y - 1, x - 1) for y, x in contour]


def contour_length(component: np.ndarray) -> int:
    """Number of distinct pixels on the traced outer contour."""
    return len(set(trace_contour(component)))


@dataclass(frozen=True, eq=False)
class RegionOfInterest:
    mask: np.ndarray
    bbox: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max inclusive
    perimeter: int
    area: int

    @property
    def bbox_slices(self) -> tuple[slice, slice]:
        x0, y0, x1, y1 = self.bbox
        return slice(y0, y1 + 1), slice(x0, x1 + 1)


_EIGHT = np.ones((3, 3), dtype=bool)


def largest_component_roi(mask: np.ndarray) -> RegionOfInterest:
    """The 8-connected component with the longest outer contour.

    Ties go to the larger area, then to the smaller ``(y_min, x_min)``.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("mask has no foreground pixels")
    labels, n = ndi.label(mask, structure=_EIGHT)
    areas = np.bincount(labels.ravel())[1:]
    boxes = ndi.find_objects(labels)
    best = None
    # contour length never exceeds area, so small components can be skipped
    for lab in sorted(range(1, n + 1), key=lambda i: -areas[i - 1]):
        area = int(areas[lab - 1])
        if best is not None and area < best[0]:
            break
        sy, sx = boxes[lab - 1]
        comp = labels[sy, sx] == lab
        key = (contour_length(comp), area, -sy.start, -sx.start)
        if best is None or key > best[:4]:
            best = key + (lab,)
    lab = best[4]
    sy, sx = boxes[lab - 1]
    return RegionOfInterest(
        mask=labels == lab,
        bbox=(sx.start, sy.start, sx.stop - 1, sy.stop - 1),
        perimeter=best[0],
        area=best[1],
    )


@dataclass(frozen=True)
class SegmentationConfig:
    close_radius: int = 2
    erode_radius: int = 1
    element_shape: str = "square"
    interp_factor: int = 2
    channel: str = "G"
    polarity: str = "darker"
    mask_close_radius: int = 2

    def __post_init__(self):
        if self.channel.upper() not in ("R", "G", "B"):
            raise ValueError(f"channel must be R, G or B, got {self.channel!r}")
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be one of {POLARITIES}, got {self.polarity!r}")
        # validates radii and factor eagerly
        self.denoise_params
        self.mask_element

    @property
    def denoise_params(self) -> DenoiseParams:
        return DenoiseParams(
            close_element=StructuringElement(self.element_shape, self.close_radius),
            erode_element=StructuringElement(self.element_shape, self.erode_radius),
            interp_factor=self.interp_factor,
        )

    @property
    def mask_element(self) -> StructuringElement:
        return StructuringElement(self.element_shape, self.mask_close_radius)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Every intermediate of :func:`segment_lesion_detailed`."""

    denoised: RasterImage
    plane: np.ndarray
    threshold: int
    raw_mask: np.ndarray
    closed_mask: np.ndarray
    roi: RegionOfInterest = field(repr=False)


def segment_lesion_detailed(
    img: RasterImage, cfg: SegmentationConfig = SegmentationConfig()
) -> Segmentation:
    if img.channels != 3:
        raise NotColorImage("lesion segmentation expects a 3-channel image")
    den = denoise(img, cfg.denoise_params)
    plane = extract_channel(den, cfg.channel)
    t = otsu_threshold(plane)
    raw = apply_threshold(plane, t, cfg.polarity)
    closed = close_mask(raw, cfg.mask_element)
    roi = largest_component_roi(closed)
    return Segmentation(den, plane, t, raw, closed, roi)


def segment_lesion(img: RasterImage, cfg: SegmentationConfig = SegmentationConfig()) -> RegionOfInterest:
    return segment_lesion_detailed(img, cfg).roi
