"""Embedding matrices: CSV exchange format and built-in extractors."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import CsvParseError, ImageIOError
from .image import RasterImage, to_gray

PATCH_SIZE = 16


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    """Parse ``filename,v1,...,vd`` rows (header required)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if not rows or not rows[0] or rows[0][0].strip() != "filename":
        raise CsvParseError(f"{path}: expected header 'filename,v1,...,vd'")
    d = len(rows[0]) - 1
    if d < 1:
        raise CsvParseError(f"{path}: header has no value columns")
    names, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise CsvParseError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
        try:
            vec = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise CsvParseError(f"{path}:{lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in vec):
            raise CsvParseError(f"{path}:{lineno}: non-finite value")
        names.append(row[0])
        values.append(vec)
    if not names:
        raise CsvParseError(f"{path}: no embedding rows")
    if len(set(names)) != len(names):
        raise CsvParseError(f"{path}: duplicate filenames")
    return names, np.asarray(values, dtype=np.float64).reshape(len(names), d)


def write_embeddings(path, names, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename"] + [f"v{i + 1}" for i in range(matrix.shape[1])])
        for name, row in zip(names, matrix):
            w.writerow([name] + [repr(float(v)) for v in row])


def patch_embeddings(img: RasterImage, patch: int = PATCH_SIZE) -> np.ndarray:
    """Tile the gray image into non-overlapping ``patch x patch`` blocks.

    Each full block becomes one row of ``patch**2`` intensities in [0, 1];
    the ragged right and bottom margins are dropped.
    """
    gray = to_gray(img).astype(np.float64) / 255.0
    rows, cols = gray.shape[0] // patch, gray.shape[1] // patch
    blocks = gray[: rows * patch, : cols * patch].reshape(rows, patch, cols, patch)
    return blocks.transpose(0, 2, 1, 3).reshape(rows * cols, patch * patch)
