"""Diverse subset selection by maximising the disparity sum.

The objective of a subset is the sum of pairwise distances over its unordered
pairs. Summing over ordered pairs would double every term without changing
which subset wins.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateIndex,
    IndexOutOfRange,
    InstanceTooLarge,
    KTooLarge,
    NonFiniteInput,
)
from .image import RasterImage, resize_bilinear, to_gray

EXACT_MAX_N = 20


@dataclass(frozen=True)
class SubsetSelection:
    indices: tuple[int, ...]
    objective: float


def image_feature(img: RasterImage, side: int = 32) -> np.ndarray:
    """Gray image resized to ``side x side``, flattened and scaled to [0, 1]."""
    if side < 1:
        raise ValueError("side must be >= 1")
    small = resize_bilinear(to_gray(img), side, side)
    return (small / 255.0).ravel()


def pairwise_distances(features: Sequence) -> np.ndarray:
    """Euclidean distance matrix, exactly symmetric with a zero diagonal."""
    dims = {len(np.ravel(f)) for f in features}
    if len(dims) > 1:
        raise DimensionMismatch(f"feature vectors have mixed lengths {sorted(dims)}")
    x = np.asarray([np.ravel(f) for f in features], dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("need at least two feature vectors")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("feature vectors must be finite")
    n = x.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        d[i, i + 1 :] = np.sqrt(np.sum((x[i + 1 :] - x[i]) ** 2, axis=1))
    return d + d.T


def _check_matrix(dist) -> np.ndarray:
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DimensionMismatch(f"distance matrix must be square, got {d.shape}")
    return d


def disparity_sum(subset: Sequence[int], dist) -> float:
    d = _check_matrix(dist)
    idx = [int(i) for i in subset]
    if len(set(idx)) != len(idx):
        raise DuplicateIndex(f"repeated index in {idx}")
    for i in idx:
        if not 0 <= i < d.shape[0]:
            raise IndexOutOfRange(f"index {i} outside 0..{d.shape[0] - 1}")
    total = 0.0
    for a, i in enumerate(idx):
        for j in idx[a + 1 :]:
            total += d[i, j]
    return total


def _check_k(k: int, n: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} available items")


def select_diverse_exact(dist, k: int) -> SubsetSelection:
    """Enumerate every size-``k`` subset; ties go to the lexicographically smallest."""
    d = _check_matrix(dist)
    n = d.shape[0]
    _check_k(k, n)
    if n > EXACT_MAX_N:
        raise InstanceTooLarge(f"exact selection is capped at n={EXACT_MAX_N}, got {n}")
    if k == 1:
        return SubsetSelection((0,), 0.0)
    pairs = list(itertools.combinations(range(k), 2))
    best, best_val = None, -1.0
    combos_iter = itertools.combinations(range(n), k)
    # combinations() is lexicographic and argmax keeps the first maximum;
    # pair terms are accumulated in the same order as disparity_sum
    while True:
        chunk = np.array(list(itertools.islice(combos_iter, 65536)), dtype=np.intp)
        if chunk.size == 0:
            break
        vals = np.zeros(chunk.shape[0])
        for a, b in pairs:
            vals += d[chunk[:, a], chunk[:, b]]
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best, best_val = tuple(int(v) for v in chunk[i]), float(vals[i])
    return SubsetSelection(best, disparity_sum(best, d))


def select_diverse_greedy(dist, k: int) -> SubsetSelection:
    """Seed with the farthest pair, then repeatedly add the farthest-on-sum point."""
    d = _check_matrix(dist)
    n = d.shape[0]
    _check_k(k, n)
    if k == 1 or n == 1:
        return SubsetSelection((0,), 0.0)
    upper = np.triu_indices(n, 1)
    # argmax returns the first maximum in row-major order = lexicographic pair
    p = int(np.argmax(d[upper]))
    chosen = [int(upper[0][p]), int(upper[1][p])]
    gain = d[chosen[0]] + d[chosen[1]]
    available = np.ones(n, dtype=bool)
    available[chosen] = False
    while len(chosen) < k:
        cand = np.where(available, gain, -np.inf)
        j = int(np.argmax(cand))
        chosen.append(j)
        available[j] = False
        gain = gain + d[j]
    # sorted order matches the exact selector's summation, so equal sets score equal
    return SubsetSelection(tuple(chosen), disparity_sum(sorted(chosen), d))
