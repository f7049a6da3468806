"""Coarse tri-state labels from full point sets, and the masked CE loss."""

from __future__ import annotations

from typing import List, NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .config import DataError
from .heatmap import LossResult
from .raster import BACKGROUND, IGNORE, as_points, check_same_shape, nearest_point_sq_distance

_TIE_K = 8


def nearest_point_index(points, height: int, width: int) -> np.ndarray:
    """Index of the closest point for every pixel (rasterized Voronoi cells).

    Equidistant points resolve to the lowest index.
    """
    pts = as_points(points)
    if len(pts) == 0:
        raise DataError("no annotations")
    pts.check_bounds(height, width)
    rr, cc = np.indices((height, width))
    pix = np.stack([rr.ravel(), cc.ravel()], axis=1)
    k = min(_TIE_K, len(pts))
    dist, idx = cKDTree(pts.coords.astype(np.float64)).query(pix, k=k)
    dist = dist.reshape(len(pix), k)
    idx = idx.reshape(len(pix), k)
    d2 = np.rint(dist * dist).astype(np.int64)
    tied = d2 == d2[:, :1]
    cell = np.where(tied, idx, np.iinfo(np.int64).max).min(axis=1)
    # ties may extend past the k returned neighbours; settle those exactly
    if k < len(pts):
        unsure = np.flatnonzero(tied[:, -1])
        if unsure.size:
            diff = pix[unsure, None, :] - pts.coords[None, :, :]
            full = (diff * diff).sum(axis=2)
            cell[unsure] = np.argmin(full, axis=1)
    return cell.reshape(height, width)


def voronoi_labels(points, height: int, width: int, fg_radius: float = 2.0) -> np.ndarray:
    """Tri-state Voronoi mask.

    Pixels adjacent (4-neighbourhood) to a different cell are background,
    pixels within ``fg_radius`` of their own point are foreground with id
    ``point index + 1``; everything else is ignored.
    """
    cell = nearest_point_index(points, height, width)
    edge = np.zeros(cell.shape, dtype=bool)
    dv = cell[1:, :] != cell[:-1, :]
    dh = cell[:, 1:] != cell[:, :-1]
    edge[1:, :] |= dv
    edge[:-1, :] |= dv
    edge[:, 1:] |= dh
    edge[:, :-1] |= dh
    out = np.full(cell.shape, IGNORE, dtype=np.int32)
    out[edge] = BACKGROUND
    d2 = nearest_point_sq_distance(points, height, width)
    disk = d2 <= fg_radius * fg_radius
    out[disk] = cell[disk] + 1
    return out


class KMeansResult(NamedTuple):
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: List[float]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        closest = np.minimum(closest, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(features: np.ndarray, k: int, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeding.

    Stops at ``max_iters`` or when assignments stop changing. An emptied
    cluster keeps its previous centroid. ``history`` holds the inertia after
    each assignment step and never increases.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if k < 1 or k > len(x):
        raise DataError(f"cannot form {k} clusters from {len(x)} samples")
    rng = np.random.default_rng(seed)
    cent = _plus_plus(x, k, rng)
    assign = None
    history = []
    for _ in range(max(1, max_iters)):
        d = _sq_dists(x, cent)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(len(x)), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            members = x[assign == j]
            if len(members):
                cent[j] = members.mean(axis=0)
    d = _sq_dists(x, cent)
    assign = d.argmin(axis=1)
    inertia = float(d[np.arange(len(x)), assign].sum())
    if inertia < history[-1]:
        history.append(inertia)
    return KMeansResult(assign, cent, inertia, history)


def cluster_features(image: np.ndarray, points, dist_clip: float = 20.0) -> np.ndarray:
    """Per-pixel ``(clipped distance / dist_clip, R/255, G/255, B/255)`` rows."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] < 3:
        raise DataError(f"expected an HxWx3 RGB image, got shape {np.shape(image)}")
    h, w = img.shape[:2]
    dist = np.sqrt(nearest_point_sq_distance(points, h, w))
    feat = np.concatenate([(np.minimum(dist, dist_clip) / dist_clip)[:, :, None], img[:, :, :3] / 255.0], axis=2)
    return feat.reshape(h * w, 4)


def cluster_labels(image: np.ndarray, points, dist_clip: float = 20.0, seed: int = 0,
                   max_iters: int = 100, color_tol: float = 1e-6) -> np.ndarray:
    """Tri-state mask from 3-way k-means over distance and colour features.

    The cluster containing most annotated pixels is foreground (ids follow
    the nearest point), the cluster with the largest mean distance feature is
    background and the third is ignored. Annotated pixels are always
    foreground. Raises :class:`DataError` when foreground and background
    resolve to one cluster or their centroids share the same colour, i.e. the
    image carries no colour evidence separating them.
    """
    pts = as_points(points)
    img = np.asarray(image)
    h, w = img.shape[:2]
    feat = cluster_features(img, pts, dist_clip)
    res = kmeans(feat, 3, max_iters=max_iters, seed=seed)
    assign = res.assignments.reshape(h, w)
    votes = np.bincount(assign[pts.rows, pts.cols], minlength=3)
    fg = int(np.argmax(votes))
    mean_dist = np.array([feat[res.assignments == j, 0].mean() if np.any(res.assignments == j) else -np.inf
                          for j in range(3)])
    bg = int(np.argmax(mean_dist))
    if fg == bg or np.abs(res.centroids[fg, 1:] - res.centroids[bg, 1:]).max() < color_tol:
        raise DataError("degenerate clustering")
    cell = nearest_point_index(pts, h, w) + 1
    out = np.full((h, w), IGNORE, dtype=np.int32)
    out[assign == bg] = BACKGROUND
    is_fg = assign == fg
    is_fg[pts.rows, pts.cols] = True
    out[is_fg] = cell[is_fg]
    return out


def _bce(pred, mask, eps_log):
    p = np.asarray(pred, dtype=np.float64)
    m = np.asarray(mask)
    check_same_shape(p, m, names=("pred", "mask"))
    valid = m != IGNORE
    n = int(valid.sum())
    if n == 0:
        raise DataError("no supervised pixels")
    y = (m > 0).astype(np.float64)
    pc = np.clip(p, eps_log, 1.0 - eps_log)
    ll = y * np.log(pc) + (1.0 - y) * np.log1p(-pc)
    loss = float(-ll[valid].sum() / n)
    inside = (p > eps_log) & (p < 1.0 - eps_log)
    grad = np.where(valid & inside, -(y / pc - (1.0 - y) / (1.0 - pc)) / n, 0.0)
    return loss, grad


def masked_cross_entropy(pred: np.ndarray, mask: np.ndarray, eps_log: float = 1e-7) -> LossResult:
    """Binary cross-entropy over non-ignored pixels of a tri-state mask.

    Foreground ids count as ``y = 1``, background as ``y = 0``; ``pred`` is
    clamped to ``[eps_log, 1 - eps_log]`` and the gradient is the exact
    derivative of the clamped loss (zero where the clamp is active).
    """
    loss, grad = _bce(pred, mask, eps_log)
    return LossResult(loss, grad.astype(np.float32))


def coarse_loss(pred: np.ndarray, voronoi: np.ndarray, cluster: Optional[np.ndarray] = None,
                eps_log: float = 1e-7) -> LossResult:
    """Equal-weight sum of the Voronoi and cluster cross-entropy terms."""
    loss, grad = _bce(pred, voronoi, eps_log)
    if cluster is not None:
        lc, gc = _bce(pred, cluster, eps_log)
        loss, grad = loss + lc, grad + gc
    return LossResult(loss, grad.astype(np.float32))
