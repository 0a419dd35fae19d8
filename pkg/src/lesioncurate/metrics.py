"""Similarity metrics used to rank generated images against their seed.

Content branch: Bhattacharyya distance between gray-level distributions.
Spatial branch: centroid and bounding-box spread of the segmented lesion.
Baseline: Frechet distance between Gaussian fits of embedding sets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyRoi,
    NonFiniteInput,
    NotPsd,
    TooFewSamples,
    WeightOutOfRange,
)
from .image import RasterImage, histogram, to_gray
from .segmentation import RegionOfInterest

BC_EPS = 1e-12
BC_FORMS = ("standard", "paper")
PSD_TOL = 1e-6


class RankDeficiencyWarning(UserWarning):
    """Fewer samples than embedding dimensions; the covariance is singular."""


def _coefficient_to_distance(bc: float) -> float:
    return max(0.0, -math.log(max(bc, BC_EPS)))


def bhattacharyya(p, q, form: str = "standard") -> float:
    """``-ln(sum sqrt(p_i q_i))``, with the coefficient clamped at 1e-12.

    ``form="paper"`` drops the square root (``-ln(sum p_i q_i)``); it does not
    vanish for identical inputs and is only kept for reproduction runs.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionMismatch(f"distributions differ in length: {p.shape} vs {q.shape}")
    if form == "standard":
        bc = float(np.sum(np.sqrt(p * q)))
    elif form == "paper":
        bc = float(np.sum(p * q))
    else:
        raise ValueError(f"form must be one of {BC_FORMS}, got {form!r}")
    return _coefficient_to_distance(bc)


def bhattacharyya_counts(h1, h2, form: str = "standard") -> float:
    """Same distance computed straight from raw histogram counts.

    Working on integer counts makes identical histograms score exactly 0.
    """
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    n1, n2 = h1.sum(), h2.sum()
    if form == "standard":
        bc = float(np.sum(np.sqrt(h1 * h2))) / math.sqrt(n1 * n2)
    elif form == "paper":
        bc = float(np.sum(h1 * h2)) / (n1 * n2)
    else:
        raise ValueError(f"form must be one of {BC_FORMS}, got {form!r}")
    return _coefficient_to_distance(bc)


def content_distance(original: RasterImage, generated: RasterImage, form: str = "standard") -> float:
    return bhattacharyya_counts(
        histogram(to_gray(original)), histogram(to_gray(generated)), form
    )


@dataclass(frozen=True)
class SpatialStats:
    x_centroid: float
    y_centroid: float
    centroid_scalar: float
    sigma: float
    width: int
    height: int


def spatial_stats(roi: RegionOfInterest, plane: np.ndarray) -> SpatialStats:
    """Centroid of the ROI pixels and intensity spread over its bounding box.

    The spread is the population standard deviation of ``plane`` inside the
    ROI's bounding box.
    """
    plane = np.asarray(plane)
    if roi.mask.shape != plane.shape:
        raise DimensionMismatch(f"roi {roi.mask.shape} vs plane {plane.shape}")
    ys, xs = np.nonzero(roi.mask)
    if ys.size == 0:
        raise EmptyRoi("region of interest has no pixels")
    xc = float(xs.mean())
    yc = float(ys.mean())
    box = plane[roi.bbox_slices].astype(np.float64)
    sigma = float(np.sqrt(np.mean((box - box.mean()) ** 2)))
    return SpatialStats(xc, yc, (xc + yc) / 2.0, sigma, plane.shape[1], plane.shape[0])


def spatial_score(orig: SpatialStats, gen: SpatialStats) -> float:
    if (orig.width, orig.height) != (gen.width, gen.height):
        raise DimensionMismatch(
            f"centroids from {orig.width}x{orig.height} and {gen.width}x{gen.height} "
            "images are not comparable"
        )
    return abs(orig.centroid_scalar - gen.centroid_scalar) + abs(orig.sigma - gen.sigma)


def min_max_normalize(scores: Sequence[float]) -> list[float]:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least one score")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("scores must be finite")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return [0.0] * arr.size
    return [min(1.0, max(0.0, (s - lo) / (hi - lo))) for s in arr.tolist()]


@dataclass(frozen=True)
class Weights:
    w1: float = 0.0
    w2: float = 1.0

    def __post_init__(self):
        for name in ("w1", "w2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise WeightOutOfRange(f"{name}={v!r} outside [0, 1]")


def content_space_score(c_norm: float, s_norm: float, w: Weights) -> float:
    return w.w1 * c_norm + w.w2 * s_norm


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_stats(embeddings) -> GaussianStats:
    """Column means and unbiased covariance, symmetrised."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("embeddings must be finite")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return GaussianStats(mean, (cov + cov.T) / 2.0)


def _psd_eigh(cov: np.ndarray, what: str):
    sym = (cov + cov.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    if vals.size and vals[0] < -PSD_TOL:
        raise NotPsd(f"{what} covariance has eigenvalue {vals[0]:.3g}")
    return np.clip(vals, 0.0, None), vecs


class FrechetReference:
    """Precomputed square root of one side, for scoring many sets against it."""

    def __init__(self, ref: GaussianStats):
        va, qa = _psd_eigh(ref.cov, "reference")
        self.stats = ref
        self._root = (qa * np.sqrt(va)) @ qa.T
        self._trace = float(np.trace(ref.cov))

    def distance(self, other: GaussianStats) -> float:
        ref = self.stats
        if ref.dim != other.dim:
            raise DimensionMismatch(f"embedding dimensions differ: {ref.dim} vs {other.dim}")
        sym = (other.cov + other.cov.T) / 2.0
        lo = np.linalg.eigvalsh(sym)[0] if sym.size else 0.0
        if lo < -PSD_TOL:
            raise NotPsd(f"covariance has eigenvalue {lo:.3g}")
        inner = self._root @ sym @ self._root
        lam = np.linalg.eigvalsh((inner + inner.T) / 2.0)
        tr_sqrt = float(np.sum(np.sqrt(np.clip(lam, 0.0, None))))
        diff = ref.mean - other.mean
        fid = float(diff @ diff) + self._trace + float(np.trace(other.cov)) - 2.0 * tr_sqrt
        return max(fid, 0.0)


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The trace of the matrix square root is taken from the eigenvalues of the
    symmetric ``S_a^(1/2) S_b S_a^(1/2)``, which shares its spectrum with
    ``S_a S_b``.
    """
    return FrechetReference(a).distance(b)


def fid_between_sets(real_embeddings, gen_embeddings) -> float:
    real = np.asarray(real_embeddings, dtype=np.float64)
    gen = np.asarray(gen_embeddings, dtype=np.float64)
    for name, x in (("real", real), ("generated", gen)):
        n = x.shape[0]
        d = x.shape[1] if x.ndim > 1 else 1
        if n <= d:
            warnings.warn(
                f"{name} set has {n} rows for {d} dimensions; covariance is rank deficient",
                RankDeficiencyWarning,
                stacklevel=2,
            )
    return frechet_distance(gaussian_stats(real), gaussian_stats(gen))
