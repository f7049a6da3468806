"""Gaussian point targets, the weighted detection loss, and peak decoding."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .config import ConfigError, DataError
from .raster import PointSet, component_stats, connected_components, nearest_point_sq_distance

IGNORE_TARGET = -1.0


def gaussian_heatmap(points, height: int, width: int, sigma: float, r1: float, r2: float) -> np.ndarray:
    """Encode point annotations as a regression target.

    Pixels closer than ``r1`` to their nearest point get
    ``exp(-D**2 / (2 sigma**2))``, pixels with ``r1 <= D <= r2`` get 0 and
    everything farther is marked -1 (ignored by :func:`detection_loss`).
    Band membership is decided on exact integer squared distances.
    """
    if not 0 < r1 < r2:
        raise ConfigError(f"need 0 < r1 < r2, got r1={r1}, r2={r2}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    d2 = nearest_point_sq_distance(points, height, width)
    out = np.full((height, width), IGNORE_TARGET, dtype=np.float64)
    out[d2 <= r2 * r2] = 0.0
    inner = d2 < r1 * r1
    out[inner] = np.exp(-d2[inner] / (2.0 * sigma * sigma))
    return out.astype(np.float32)


class LossResult(NamedTuple):
    loss: float
    grad: np.ndarray


def detection_loss(pred: np.ndarray, target: np.ndarray, w_fg: float = 1.0, w_bg: float = 0.1) -> LossResult:
    """Weighted MSE over supervised pixels and its gradient w.r.t. ``pred``.

    ``loss = sum(w * (target - pred)**2) / N`` where ``N`` counts pixels whose
    target is not -1, ``w = w_fg`` on positive targets and ``w_bg`` on zeros.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if not np.isfinite(pred).all():
        raise DataError("pred contains non-finite values")
    supervised = target != IGNORE_TARGET
    n = int(supervised.sum())
    if n == 0:
        raise DataError("no supervised pixels")
    w = np.where(target > 0, w_fg, w_bg) * supervised
    diff = np.where(supervised, pred - target, 0.0)
    loss = float(np.sum(w * diff * diff) / n)
    grad = (2.0 / n) * w * diff
    return LossResult(loss, grad.astype(np.float32))


class Peaks(NamedTuple):
    points: PointSet
    components: np.ndarray


def extract_peaks(pred: np.ndarray, peak_threshold: float = 0.65, connectivity: int = 8) -> Peaks:
    """Decode a predicted heatmap into one scored point per blob.

    The map is clamped to [0, 1] and binarized with ``> peak_threshold``;
    each connected blob yields its centroid (rounded half-up) scored by the
    blob's mean value.
    """
    prob = np.clip(np.asarray(pred, dtype=np.float64), 0.0, 1.0)
    comps = connected_components(prob > peak_threshold, connectivity)
    stats = component_stats(comps, prob)
    coords = {}
    for cid in sorted(stats):
        s = stats[cid]
        rc = (int(np.floor(s.centroid[0] + 0.5)), int(np.floor(s.centroid[1] + 0.5)))
        # nested blobs can round to the same pixel; the first blob keeps it
        coords.setdefault(rc, s.mean_score)
    pts = PointSet(np.asarray(list(coords), dtype=np.int64).reshape(-1, 2), np.asarray(list(coords.values())))
    return Peaks(pts, comps)
