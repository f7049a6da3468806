"""Shared grid types and lattice utilities.

Rasters are plain 2-D numpy arrays:

* float rasters are ``float32`` (heatmaps, probabilities, gradients);
* instance maps are integer arrays, ``0`` is background;
* tri-state masks are integer arrays with ``IGNORE`` (-1), ``BACKGROUND`` (0)
  or a positive foreground instance id.

Pixel centres sit on integer coordinates ``(row, col)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import ndimage

from .config import DataError

IGNORE = -1
BACKGROUND = 0


@dataclass(frozen=True)
class PointSet:
    """Ordered, duplicate-free pixel coordinates with optional scores."""

    coords: np.ndarray
    scores: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "coords", coords)
        if self.scores is not None:
            scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
            if scores.shape[0] != coords.shape[0]:
                raise DataError(f"{scores.shape[0]} scores for {coords.shape[0]} points")
            object.__setattr__(self, "scores", scores)
        if len(np.unique(coords, axis=0)) != len(coords):
            raise DataError("duplicate point coordinates")

    def __len__(self):
        return self.coords.shape[0]

    @property
    def rows(self) -> np.ndarray:
        return self.coords[:, 0]

    @property
    def cols(self) -> np.ndarray:
        return self.coords[:, 1]

    def check_bounds(self, height: int, width: int) -> None:
        if len(self) == 0:
            return
        bad = (self.rows < 0) | (self.rows >= height) | (self.cols < 0) | (self.cols >= width)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"point {i} at {tuple(self.coords[i])} outside {height}x{width} raster")

    def merge(self, other: "PointSet") -> "PointSet":
        """Concatenate, keeping the first occurrence of repeated coordinates."""
        coords = np.concatenate([self.coords, other.coords])
        _, first = np.unique(coords, axis=0, return_index=True)
        keep = np.sort(first)
        return PointSet(coords[keep])


def as_points(points) -> PointSet:
    if isinstance(points, PointSet):
        return points
    return PointSet(np.asarray(points, dtype=np.int64).reshape(-1, 2))


def lattice_structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndimage.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def nearest_point_sq_distance(points, height: int, width: int) -> np.ndarray:
    """Exact integer squared distance from every pixel to its nearest point."""
    pts = as_points(points)
    if len(pts) == 0:
        raise DataError("no annotations")
    pts.check_bounds(height, width)
    seeds = np.ones((height, width), dtype=bool)
    seeds[pts.rows, pts.cols] = False
    dist = ndimage.distance_transform_edt(seeds)
    # EDT returns sqrt of an integer sum; squaring and rounding recovers it exactly
    return np.rint(dist * dist).astype(np.int64)


def distance_to_nearest_point(points, height: int, width: int) -> np.ndarray:
    """Euclidean distance map to the closest annotated point.

    >>> distance_to_nearest_point([(0, 0)], 4, 5)[3, 4]
    5.0
    """
    return np.sqrt(nearest_point_sq_distance(points, height, width)).astype(np.float32)


def connected_components(mask: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Label connected regions of ``mask > 0.5``.

    Ids are assigned 1, 2, ... in row-major order of each component's first
    pixel, so the labeling is a pure function of the pixel partition.
    """
    mask = np.asarray(mask)
    binary = mask > 0.5 if mask.dtype != bool else mask
    labels, n = ndimage.label(binary, structure=lattice_structure(connectivity))
    if n == 0:
        return labels.astype(np.int32)
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    fg = ids > 0
    order = np.argsort(first[fg], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[ids[fg][order]] = np.arange(1, n + 1, dtype=np.int32)
    return remap[labels]


@dataclass(frozen=True)
class ComponentStats:
    area: int
    centroid: Tuple[float, float]
    mean_score: float


def component_stats(inst: np.ndarray, score: np.ndarray) -> Dict[int, ComponentStats]:
    """Area, centroid and mean score of every nonzero id in ``inst``."""
    inst = np.asarray(inst)
    score = np.asarray(score, dtype=np.float64)
    if inst.shape != score.shape:
        raise DataError(f"shape mismatch: instances {inst.shape} vs score {score.shape}")
    flat = inst.ravel().astype(np.int64)
    if flat.size == 0 or flat.max() <= 0:
        return {}
    rr, cc = np.indices(inst.shape)
    n = int(flat.max()) + 1
    area = np.bincount(flat, minlength=n)
    sum_r = np.bincount(flat, weights=rr.ravel(), minlength=n)
    sum_c = np.bincount(flat, weights=cc.ravel(), minlength=n)
    sum_s = np.bincount(flat, weights=score.ravel(), minlength=n)
    out = {}
    for i in np.flatnonzero(area):
        if i == 0:
            continue
        a = int(area[i])
        out[int(i)] = ComponentStats(a, (sum_r[i] / a, sum_c[i] / a), sum_s[i] / a)
    return out


def relabel_sequential(inst: np.ndarray) -> np.ndarray:
    """Map the nonzero ids of ``inst`` onto 1..n preserving their order."""
    inst = np.asarray(inst)
    ids = np.unique(inst)
    ids = ids[ids > 0]
    out = np.zeros(inst.shape, dtype=np.int32)
    if ids.size:
        out[inst > 0] = np.searchsorted(ids, inst[inst > 0]) + 1
    return out


def check_same_shape(*arrays: np.ndarray, names: Optional[Tuple[str, ...]] = None) -> None:
    shapes = [np.shape(a) for a in arrays]
    if len(set(shapes)) > 1:
        label = ", ".join(f"{n}={s}" for n, s in zip(names or [f"arg{i}" for i in range(len(shapes))], shapes))
        raise DataError(f"shape mismatch: {label}")
