"""Pixel-affinity supervision for boundary maps.

A coarse probability map is split into confident foreground instances,
confident background and an uncertain band. Every pair of confident pixels
closer than ``gamma`` becomes a supervision pair: affinity 1 when both lie in
the same instance (or both in background), 0 otherwise. A boundary map
predicts the affinity of a pair as ``1 - max(boundary)`` along the digital
line joining the two pixels, and :func:`boundary_loss` scores those
predictions with a cross-entropy normalized separately over the four pair
subsets.

Pairs are stored column-wise in :class:`AffinityPairs` and grouped by their
offset vector. All pairs sharing an offset share one path template, so path
maxima reduce to a gather over ``a + template``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import DataError
from .raster import connected_components

FG_POS, FG_NEG, BG_POS, CROSS_NEG = 0, 1, 2, 3
SUBSET_NAMES = ("fg_pos", "fg_neg", "bg_pos", "cross_neg")
_POSITIVE = np.array([True, False, True, False])
UNCERTAIN = -1


@dataclass(frozen=True)
class CoarseInstancePrediction:
    prob: np.ndarray
    instances: np.ndarray
    uncertain: np.ndarray

    @property
    def classes(self) -> np.ndarray:
        """Per-pixel class: instance id, 0 for background, -1 if uncertain."""
        c = self.instances.astype(np.int64)
        c[self.uncertain] = UNCERTAIN
        return c


def coarse_instances(prob: np.ndarray, T_f: float = 0.6, T_b: float = 0.05,
                     connectivity: int = 8) -> CoarseInstancePrediction:
    """Split a coarse probability map with the two confidence thresholds.

    ``prob > T_f`` is foreground (instances from connected components),
    ``prob < T_b`` background, anything in between uncertain.
    """
    prob = np.asarray(prob, dtype=np.float64)
    inst = connected_components(prob > T_f, connectivity)
    uncertain = (prob >= T_b) & (prob <= T_f)
    return CoarseInstancePrediction(prob, inst, uncertain)


def affinity_label(ci: int, cj: int) -> Tuple[int, int]:
    """(label, subset) of one pair from the classes of its endpoints.

    Classes follow :attr:`CoarseInstancePrediction.classes`. Uncertain
    endpoints give ``(-1, -1)``.
    """
    if ci < 0 or cj < 0:
        return -1, -1
    if ci > 0 and cj > 0:
        return (1, FG_POS) if ci == cj else (0, FG_NEG)
    if ci == 0 and cj == 0:
        return 1, BG_POS
    return 0, CROSS_NEG


def half_disk_offsets(gamma: int, stride: int = 1) -> np.ndarray:
    """Lattice offsets ``(dr, dc)`` with ``0 < |o| <= gamma`` in the upper half-plane.

    Exactly one of ``o`` and ``-o`` is kept (``dr > 0``, or ``dr == 0`` and
    ``dc > 0``), so each unordered pixel pair is produced once. ``stride``
    keeps only offsets whose components are multiples of it.
    """
    g = int(gamma)
    out = []
    for dr in range(0, g + 1):
        for dc in range(-g, g + 1):
            if dr == 0 and dc <= 0:
                continue
            if dr * dr + dc * dc > gamma * gamma:
                continue
            if dr % stride or dc % stride:
                continue
            out.append((dr, dc))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _canonical(a, b):
    a = (int(a[0]), int(a[1]))
    b = (int(b[0]), int(b[1]))
    return (a, b, False) if a <= b else (b, a, True)


def _trace(start, end) -> np.ndarray:
    dr, dc = end[0] - start[0], end[1] - start[1]
    n = max(abs(dr), abs(dc))
    if n == 0:
        return np.array([start], dtype=np.int64)
    t = np.arange(n + 1, dtype=np.int64)
    # round-half-up of t*|d|/n along each axis (exact integer midpoint rule)
    rows = start[0] + np.sign(dr) * ((2 * t * abs(dr) + n) // (2 * n))
    cols = start[1] + np.sign(dc) * ((2 * t * abs(dc) + n) // (2 * n))
    return np.stack([rows, cols], axis=1)


def path_pixels(a, b) -> np.ndarray:
    """8-connected digital line from ``a`` to ``b``, both ends included.

    The line is always traced from the row-major-first endpoint, so
    ``path_pixels(b, a)`` is ``path_pixels(a, b)`` reversed.
    """
    s, e, swapped = _canonical(a, b)
    p = _trace(s, e)
    return p[::-1] if swapped else p


@lru_cache(maxsize=None)
def _template(dr: int, dc: int) -> np.ndarray:
    # path from the origin to a canonical (row-major later) offset, pixels in row-major order
    p = _trace((0, 0), (dr, dc))
    order = np.lexsort((p[:, 1], p[:, 0]))
    return p[order]


class AffinityPair(NamedTuple):
    a: Tuple[int, int]
    b: Tuple[int, int]
    label: int
    subset: int


@dataclass
class AffinityPairs:
    """Column store of supervised pixel pairs on an ``shape`` raster.

    ``a`` is the flat index of the row-major-first endpoint and
    ``offsets[offset_id]`` the displacement to the other endpoint.
    """

    shape: Tuple[int, int]
    a: np.ndarray
    offset_id: np.ndarray
    offsets: np.ndarray
    label: np.ndarray
    subset: np.ndarray

    def __len__(self):
        return int(self.a.shape[0])

    def __getitem__(self, i: int) -> AffinityPair:
        w = self.shape[1]
        a = int(self.a[i])
        dr, dc = self.offsets[self.offset_id[i]]
        ar, ac = divmod(a, w)
        return AffinityPair((ar, ac), (ar + int(dr), ac + int(dc)), int(self.label[i]), int(self.subset[i]))

    @property
    def a_rc(self) -> np.ndarray:
        return np.stack(np.divmod(self.a, self.shape[1]), axis=1)

    @property
    def b_rc(self) -> np.ndarray:
        return self.a_rc + self.offsets[self.offset_id]

    def counts(self) -> np.ndarray:
        return np.bincount(self.subset[self.subset >= 0], minlength=4)[:4]

    def groups(self) -> List[Tuple[int, np.ndarray]]:
        """``(offset index, pair indices)`` per distinct offset, in offset order."""
        if len(self) == 0:
            return []
        order = np.argsort(self.offset_id, kind="stable")
        ids = self.offset_id[order]
        cuts = np.flatnonzero(np.diff(ids)) + 1
        return [(int(self.offset_id[chunk[0]]), chunk) for chunk in np.split(order, cuts)]

    def select(self, index) -> "AffinityPairs":
        return AffinityPairs(self.shape, self.a[index], self.offset_id[index], self.offsets,
                             self.label[index], self.subset[index])

    @classmethod
    def from_coords(cls, shape, a, b, label, subset) -> "AffinityPairs":
        """Build from explicit endpoint lists; endpoints may come in either order."""
        h, w = shape
        a = np.asarray(a, dtype=np.int64).reshape(-1, 2)
        b = np.asarray(b, dtype=np.int64).reshape(-1, 2)
        for name, p in (("a", a), ("b", b)):
            if len(p) and ((p < 0).any() or (p[:, 0] >= h).any() or (p[:, 1] >= w).any()):
                raise DataError(f"pair endpoint {name} outside {h}x{w} raster")
        fa = a[:, 0] * w + a[:, 1]
        fb = b[:, 0] * w + b[:, 1]
        swap = fb < fa
        first = np.where(swap[:, None], b, a)
        second = np.where(swap[:, None], a, b)
        d = second - first
        # encode (dr >= 0, |dc| < w) as one integer so unique() runs on a flat array
        keys, inverse = np.unique(d[:, 0] * (2 * w + 1) + d[:, 1] + w, return_inverse=True)
        offsets = np.stack([keys // (2 * w + 1), keys % (2 * w + 1) - w], axis=1)
        return cls((h, w), first[:, 0] * w + first[:, 1], inverse.reshape(-1).astype(np.int32),
                   offsets.reshape(-1, 2), np.asarray(label, dtype=np.int8).reshape(-1),
                   np.asarray(subset, dtype=np.int8).reshape(-1))

    @classmethod
    def concat(cls, parts: Sequence["AffinityPairs"]) -> "AffinityPairs":
        shape = parts[0].shape
        a = np.concatenate([p.a_rc for p in parts])
        b = np.concatenate([p.b_rc for p in parts])
        return cls.from_coords(shape, a, b, np.concatenate([p.label for p in parts]),
                               np.concatenate([p.subset for p in parts]))


def build_affinity_pairs(classes, gamma: int = 8, offsets: Optional[np.ndarray] = None,
                         stride: int = 1) -> AffinityPairs:
    """All confident pixel pairs within ``gamma`` with their labels and subsets.

    ``classes`` is a :class:`CoarseInstancePrediction` or a class raster
    (instance id, 0 background, -1 uncertain). Pairs touching an uncertain
    pixel carry label -1 and are dropped. Output is ordered by offset, then by
    the row-major position of the first endpoint.
    """
    if isinstance(classes, CoarseInstancePrediction):
        classes = classes.classes
    c = np.asarray(classes, dtype=np.int64)
    h, w = c.shape
    if offsets is None:
        offsets = half_disk_offsets(gamma, stride)
    offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, 2)
    if len(offsets):
        canon = (offsets[:, 0] > 0) | ((offsets[:, 0] == 0) & (offsets[:, 1] > 0))
        if not canon.all():
            raise DataError("offsets must lie in the upper half-plane (dr > 0, or dr == 0 and dc > 0)")
        if len(np.unique(offsets, axis=0)) != len(offsets):
            raise DataError("duplicate offsets")
    a_parts, o_parts, l_parts, s_parts = [], [], [], []
    for k, (dr, dc) in enumerate(offsets):
        r1 = h - dr
        c0, c1 = max(0, -dc), min(w, w - dc)
        if r1 <= 0 or c1 <= c0:
            continue
        ca = c[0:r1, c0:c1]
        cb = c[dr:dr + r1, c0 + dc:c1 + dc]
        ok = (ca >= 0) & (cb >= 0)
        ii, jj = np.nonzero(ok)
        va, vb = ca[ii, jj], cb[ii, jj]
        fa, fb = va > 0, vb > 0
        subset = np.where(fa & fb, np.where(va == vb, FG_POS, FG_NEG),
                          np.where(~fa & ~fb, BG_POS, CROSS_NEG)).astype(np.int8)
        a_parts.append(ii.astype(np.int64) * w + (jj + c0))
        o_parts.append(np.full(ii.shape, k, dtype=np.int32))
        l_parts.append(_POSITIVE[subset].astype(np.int8))
        s_parts.append(subset)
    if not a_parts:
        empty = np.zeros(0, dtype=np.int8)
        return AffinityPairs((h, w), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int32), offsets, empty, empty)
    return AffinityPairs((h, w), np.concatenate(a_parts), np.concatenate(o_parts), offsets,
                         np.concatenate(l_parts), np.concatenate(s_parts))


def _group_path_max(flat_boundary: np.ndarray, width: int, a: np.ndarray, offset) -> Tuple[np.ndarray, np.ndarray]:
    t = _template(int(offset[0]), int(offset[1]))
    tflat = t[:, 0] * width + t[:, 1]
    idx = a[:, None] + tflat[None, :]
    vals = flat_boundary[idx]
    arg = vals.argmax(axis=1)
    rows = np.arange(len(a))
    return vals[rows, arg], idx[rows, arg]


def path_max(boundary: np.ndarray, pairs: AffinityPairs) -> Tuple[np.ndarray, np.ndarray]:
    """Maximum boundary value on every pair's path and the flat pixel holding it.

    Among equal maxima the lowest row-major pixel wins.
    """
    b = np.asarray(boundary, dtype=np.float64)
    if b.shape != tuple(pairs.shape):
        raise DataError(f"shape mismatch: boundary {b.shape} vs pairs {tuple(pairs.shape)}")
    flat = b.ravel()
    mx = np.empty(len(pairs))
    arg = np.empty(len(pairs), dtype=np.int64)
    for k, sel in pairs.groups():
        mx[sel], arg[sel] = _group_path_max(flat, b.shape[1], pairs.a[sel], pairs.offsets[k])
    return mx, arg


def pair_affinities(boundary: np.ndarray, pairs: AffinityPairs) -> np.ndarray:
    """Predicted affinity ``1 - max(boundary on path)`` for every pair."""
    return 1.0 - path_max(boundary, pairs)[0]


def affinity_from_boundary(boundary: np.ndarray, pair) -> float:
    """Predicted affinity of a single pair (anything with ``.a`` and ``.b``)."""
    b = np.asarray(boundary, dtype=np.float64)
    p = path_pixels(pair.a, pair.b)
    return float(1.0 - b[p[:, 0], p[:, 1]].max())


class BoundaryLossResult(NamedTuple):
    loss: float
    grad: np.ndarray
    terms: Dict[str, float]
    counts: Dict[str, int]


def _group_terms(flat, width, a, offset, subset, inv_count, eps_log, size):
    m, arg = _group_path_max(flat, width, a, offset)
    aff = np.clip(1.0 - m, eps_log, 1.0 - eps_log)
    live = (1.0 - m > eps_log) & (1.0 - m < 1.0 - eps_log)
    pos = _POSITIVE[subset]
    term = np.where(pos, -np.log(aff), -np.log1p(-aff))
    # d term / d max:  +1/aff for positive pairs, -1/(1 - aff) for negative ones
    dmax = np.where(pos, 1.0 / aff, -1.0 / (1.0 - aff)) * live * inv_count[subset]
    sums = np.bincount(subset, weights=term, minlength=4)
    grad = np.bincount(arg, weights=dmax, minlength=size)
    return sums, grad


def boundary_loss(boundary: np.ndarray, pairs: AffinityPairs, eps_log: float = 1e-7,
                  jobs: int = 1) -> BoundaryLossResult:
    """Subset-normalized affinity cross-entropy and its gradient.

    ``loss = sum_s mean_{pairs in s} t(pair)`` with ``t = -log(a)`` for the
    two positive subsets and ``-log(1 - a)`` for the two negative ones,
    ``a = clip(1 - pathmax, eps_log, 1 - eps_log)``. Empty subsets add 0.

    The gradient routes each pair's derivative to the pixel attaining its
    path maximum. With ``jobs > 1`` offset groups are evaluated on a thread
    pool; partial results are reduced in group order, so the output is
    bit-identical to ``jobs=1``.
    """
    b = np.asarray(boundary, dtype=np.float64)
    if b.shape != tuple(pairs.shape):
        raise DataError(f"shape mismatch: boundary {b.shape} vs pairs {tuple(pairs.shape)}")
    if not np.isfinite(b).all() or b.min(initial=0.0) < 0.0 or b.max(initial=0.0) > 1.0:
        raise DataError("boundary values must lie in [0, 1]")
    keep = pairs.label >= 0
    if not keep.all():
        pairs = pairs.select(keep)
    counts = pairs.counts()
    if counts.sum() == 0:
        raise DataError("no supervision pairs")
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    flat = b.ravel()
    size = flat.size
    width = b.shape[1]
    subset = pairs.subset.astype(np.int64)

    def work(group):
        k, sel = group
        return _group_terms(flat, width, pairs.a[sel], pairs.offsets[k], subset[sel], inv, eps_log, size)

    groups = pairs.groups()
    if jobs > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, groups))
    else:
        results = [work(g) for g in groups]
    sums = np.zeros(4)
    grad = np.zeros(size)
    for s, g in results:
        sums += s
        grad += g
    per_subset = sums * inv
    loss = float(per_subset.sum())
    terms = {name: float(per_subset[i]) for i, name in enumerate(SUBSET_NAMES)}
    return BoundaryLossResult(loss, grad.reshape(b.shape).astype(np.float32), terms,
                              {name: int(counts[i]) for i, name in enumerate(SUBSET_NAMES)})


def total_fine_loss(l_vor: float, l_clu: float, l_boundary: float, beta: float = 0.1) -> float:
    """Fine-stage objective: both coarse CE terms plus the weighted boundary term."""
    return float(l_vor + l_clu + beta * l_boundary)


def tie_pixels(boundary: np.ndarray, pairs: AffinityPairs, tol: float) -> np.ndarray:
    """Pixels whose value is within ``tol`` of a competing maximum on some path.

    Finite differences of step up to ``tol / 2`` may switch the path maximum
    at these pixels, so they are excluded from gradient checks.
    """
    b = np.asarray(boundary, dtype=np.float64)
    flat = b.ravel()
    mask = np.zeros(flat.size, dtype=bool)
    w = b.shape[1]
    for k, sel in pairs.groups():
        dr, dc = pairs.offsets[k]
        t = _template(int(dr), int(dc))
        idx = pairs.a[sel][:, None] + (t[:, 0] * w + t[:, 1])[None, :]
        vals = flat[idx]
        near = vals >= vals.max(axis=1, keepdims=True) - tol
        contested = near.sum(axis=1) > 1
        mask[idx[contested][near[contested]]] = True
    return mask.reshape(b.shape)
