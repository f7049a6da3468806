"""Detection and instance-segmentation metrics.

Every instance metric goes through one contingency table of pixel overlaps,
so ids need not be contiguous and relabeling either input changes nothing.
Empty-vs-empty comparisons score 1.
"""

from __future__ import annotations

from typing import Dict, NamedTuple

import numpy as np

from .raster import as_points, check_same_shape, relabel_sequential


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def match_points(pred, gt, match_radius: float):
    """One-to-one greedy matching, globally closest pairs first.

    Returns ``(pred index, gt index)`` arrays. Equal distances resolve by
    lower prediction index, then lower ground-truth index.
    """
    p = as_points(pred).coords.astype(np.float64)
    g = as_points(gt).coords.astype(np.float64)
    if len(p) == 0 or len(g) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    d = np.sqrt(((p[:, None, :] - g[None, :, :]) ** 2).sum(axis=2))
    ii, jj = np.nonzero(d <= match_radius)
    order = np.lexsort((jj, ii, d[ii, jj]))
    used_p, used_g = set(), set()
    mp, mg = [], []
    for k in order:
        i, j = int(ii[k]), int(jj[k])
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        mp.append(i)
        mg.append(j)
    return np.array(mp, dtype=np.int64), np.array(mg, dtype=np.int64)


def detection_prf(pred, gt, match_radius: float = 6.0) -> PRF:
    if match_radius <= 0:
        raise ValueError(f"match_radius must be positive, got {match_radius}")
    n_pred, n_gt = len(as_points(pred)), len(as_points(gt))
    tp = len(match_points(pred, gt, match_radius)[0])
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    return PRF(precision, recall, _f1(precision, recall))


def pixel_accuracy_f1(pred_binary: np.ndarray, gt_binary: np.ndarray) -> Dict[str, float]:
    p = np.asarray(pred_binary) > 0
    g = np.asarray(gt_binary) > 0
    check_same_shape(p, g, names=("pred", "gt"))
    tp = int(np.sum(p & g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    acc = float(np.mean(p == g))
    f1 = 1.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)
    return {"accuracy": acc, "f1": float(f1)}


class Overlap(NamedTuple):
    inter: np.ndarray  # (n_gt, n_pred) pixel intersections
    gt_area: np.ndarray
    pred_area: np.ndarray

    @property
    def union(self) -> np.ndarray:
        return self.gt_area[:, None] + self.pred_area[None, :] - self.inter

    @property
    def iou(self) -> np.ndarray:
        u = self.union
        return np.divide(self.inter, u, out=np.zeros(u.shape), where=u > 0)


def overlap_table(pred: np.ndarray, gt: np.ndarray) -> Overlap:
    """Pairwise intersections between gt and pred instances (background dropped)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt, names=("pred", "gt"))
    p = relabel_sequential(pred).ravel().astype(np.int64)
    g = relabel_sequential(gt).ravel().astype(np.int64)
    n_p, n_g = int(p.max(initial=0)), int(g.max(initial=0))
    joint = np.bincount(g * (n_p + 1) + p, minlength=(n_g + 1) * (n_p + 1)).reshape(n_g + 1, n_p + 1)
    return Overlap(joint[1:, 1:].astype(np.float64),
                   joint[1:, :].sum(axis=1).astype(np.float64),
                   joint[:, 1:].sum(axis=0).astype(np.float64))


def aji(pred: np.ndarray, gt: np.ndarray) -> float:
    """Aggregated Jaccard index.

    Each gt instance takes the prediction of highest IoU (lowest id on
    ties); prediction instances never chosen add their area to the union.
    """
    ov = overlap_table(pred, gt)
    n_g, n_p = ov.inter.shape
    if n_g == 0 and n_p == 0:
        return 1.0
    inter_sum = 0.0
    union_sum = 0.0
    used = np.zeros(n_p, dtype=bool)
    iou = ov.iou
    for i in range(n_g):
        if n_p and iou[i].max() > 0:
            j = int(np.argmax(iou[i]))
            inter_sum += ov.inter[i, j]
            union_sum += ov.union[i, j]
            used[j] = True
        else:
            union_sum += ov.gt_area[i]
    union_sum += ov.pred_area[~used].sum()
    return float(inter_sum / union_sum) if union_sum > 0 else 0.0


class PanopticQuality(NamedTuple):
    dq: float
    sq: float
    pq: float


def pq_matches(pred: np.ndarray, gt: np.ndarray):
    """``(gt index, pred index, iou)`` of every pair with IoU strictly above 0.5."""
    iou = overlap_table(pred, gt).iou
    gi, pj = np.nonzero(iou > 0.5)
    return gi, pj, iou[gi, pj]


def panoptic_quality(pred: np.ndarray, gt: np.ndarray) -> PanopticQuality:
    ov = overlap_table(pred, gt)
    n_g, n_p = ov.inter.shape
    if n_g == 0 and n_p == 0:
        return PanopticQuality(1.0, 1.0, 1.0)
    iou = ov.iou
    matched = iou[iou > 0.5]
    tp = matched.size
    fp, fn = n_p - tp, n_g - tp
    dq = tp / (tp + 0.5 * fp + 0.5 * fn)
    sq = float(matched.mean()) if tp else 0.0
    return PanopticQuality(float(dq), sq, float(dq * sq))


def _dice_side(inter: np.ndarray, area_a: np.ndarray, area_b: np.ndarray) -> float:
    # objects on side a, each against its largest-overlap partner on side b;
    # equal overlaps resolve to the smaller partner (higher Dice), independent of ids
    if len(area_a) == 0 or len(area_b) == 0:
        return 0.0
    best = inter.max(axis=1)
    pair_dice = 2 * inter / (area_a[:, None] + area_b[None, :])
    dice = np.where((inter == best[:, None]) & (best[:, None] > 0), pair_dice, 0.0).max(axis=1)
    return float(np.sum(area_a / area_a.sum() * dice))


def object_dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """Area-weighted object Dice averaged over the gt side and the pred side."""
    ov = overlap_table(pred, gt)
    n_g, n_p = ov.inter.shape
    if n_g == 0 and n_p == 0:
        return 1.0
    gt_side = _dice_side(ov.inter, ov.gt_area, ov.pred_area)
    pred_side = _dice_side(ov.inter.T, ov.pred_area, ov.gt_area)
    return 0.5 * (gt_side + pred_side)


def segmentation_metrics(pred: np.ndarray, gt: np.ndarray) -> Dict[str, float]:
    """All seven segmentation scores for one image pair."""
    out = pixel_accuracy_f1(np.asarray(pred) > 0, np.asarray(gt) > 0)
    out["dice"] = object_dice(pred, gt)
    out["aji"] = aji(pred, gt)
    out.update(panoptic_quality(pred, gt)._asdict())
    return out
