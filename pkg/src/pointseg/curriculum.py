"""Difficulty-ordered admission of detector blobs as new point labels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .config import DataError
from .raster import PointSet, as_points, component_stats, connected_components


@dataclass(frozen=True)
class Candidate:
    centroid: Tuple[float, float]
    area: float
    mean_score: float
    mean_knn_dist: float


def normalize_unit(values: Sequence[float]) -> np.ndarray:
    """Min-max scale onto [0, 1]; a constant sequence maps to zeros."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DataError("cannot normalize an empty sequence")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def mean_knn_distance(centroids: np.ndarray, existing, k: int) -> np.ndarray:
    """Mean distance from each centroid to its ``k`` nearest existing points.

    Uses every existing point when fewer than ``k`` exist, and 0 when none do.
    """
    centroids = np.asarray(centroids, dtype=np.float64).reshape(-1, 2)
    pts = as_points(existing)
    if len(pts) == 0 or len(centroids) == 0:
        return np.zeros(len(centroids))
    kk = min(k, len(pts))
    d, _ = cKDTree(pts.coords.astype(np.float64)).query(centroids, k=kk)
    d = np.asarray(d).reshape(len(centroids), kk)
    return d.mean(axis=1)


def candidates_from_heatmap(pred: np.ndarray, existing, peak_threshold: float = 0.65,
                            k_neighbors: int = 4, connectivity: int = 8) -> List[Candidate]:
    """Turn a detector probability map into scored candidates for one round."""
    prob = np.clip(np.asarray(pred, dtype=np.float64), 0.0, 1.0)
    comps = connected_components(prob > peak_threshold, connectivity)
    stats = component_stats(comps, prob)
    ids = sorted(stats)
    cents = np.array([stats[i].centroid for i in ids], dtype=np.float64).reshape(-1, 2)
    knn = mean_knn_distance(cents, existing, k_neighbors)
    return [Candidate(tuple(cents[j]), float(stats[i].area), float(stats[i].mean_score), float(knn[j]))
            for j, i in enumerate(ids)]


def training_difficulty(cands: Sequence[Candidate]) -> np.ndarray:
    """``N(knn distance) * N(area) * (1 - N(score))`` per candidate.

    Normalization runs over the given candidate set, so the score is only
    meaningful relative to the other candidates of the same round.
    """
    if len(cands) == 0:
        return np.zeros(0)
    dist = normalize_unit([c.mean_knn_dist for c in cands])
    area = normalize_unit([c.area for c in cands])
    score = normalize_unit([c.mean_score for c in cands])
    return dist * area * (1.0 - score)


def admission_count(n_det: int, n_gt: int) -> int:
    """``floor(n_det * exp(-n_gt / n_det))``, 0 when nothing was detected."""
    if n_det < 0 or n_gt < 0:
        raise DataError(f"counts must be non-negative, got n_det={n_det}, n_gt={n_gt}")
    if n_det == 0:
        return 0
    return int(math.floor(n_det * math.exp(-n_gt / n_det)))


def _rounded(c: Tuple[float, float]) -> Tuple[int, int]:
    return int(math.floor(c[0] + 0.5)), int(math.floor(c[1] + 0.5))


def select_pseudo_labels(cands: Sequence[Candidate], existing, existing_radius: float,
                         n_det: int, n_gt: int) -> PointSet:
    """Admit the easiest non-overlapping candidates.

    Difficulty is computed over the whole candidate set; candidates whose
    centroid lies within ``existing_radius`` of an existing label are then
    dropped, the rest sorted by (difficulty, row, col) and the first
    ``admission_count(n_det, n_gt)`` returned as rounded points scored by
    their mean detector score.
    """
    if len(cands) == 0:
        return PointSet(np.zeros((0, 2), dtype=np.int64), np.zeros(0))
    td = training_difficulty(cands)
    cents = np.array([c.centroid for c in cands], dtype=np.float64)
    rounded = np.array([_rounded(c.centroid) for c in cands], dtype=np.float64)
    pts = as_points(existing)
    free = np.ones(len(cands), dtype=bool)
    if len(pts):
        tree = cKDTree(pts.coords.astype(np.float64))
        # the emitted pixel must clear the radius too, not only the raw centroid
        free = (tree.query(cents, k=1)[0] > existing_radius) & (tree.query(rounded, k=1)[0] > existing_radius)
    order = sorted(np.flatnonzero(free), key=lambda i: (td[i], cents[i, 0], cents[i, 1]))
    budget = admission_count(n_det, n_gt)
    picked = {}
    for i in order:
        if len(picked) >= budget:
            break
        picked.setdefault(_rounded(cands[i].centroid), cands[i].mean_score)
    coords = np.array(list(picked), dtype=np.int64).reshape(-1, 2)
    return PointSet(coords, np.array(list(picked.values())))
