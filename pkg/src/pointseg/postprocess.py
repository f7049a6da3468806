"""Turn segmentation and boundary probabilities into an instance map."""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import ndimage

from .config import PipelineConfig
from .raster import lattice_structure, check_same_shape, connected_components


def fill_holes(mask: np.ndarray, max_area: int, connectivity: int = 8) -> np.ndarray:
    """Fill background regions smaller than ``max_area`` that do not touch the border.

    Background regions are traced with the complementary connectivity of
    the foreground (8-connected foreground -> 4-connected holes).
    """
    mask = np.asarray(mask, dtype=bool)
    holes, n = ndimage.label(~mask, structure=lattice_structure(12 - connectivity))
    if n == 0:
        return mask.copy()
    area = np.bincount(holes.ravel(), minlength=n + 1)
    border = np.unique(np.concatenate([holes[0], holes[-1], holes[:, 0], holes[:, -1]]))
    small = area < max_area
    small[0] = False
    small[border] = False
    return mask | small[holes]


def remove_small(mask: np.ndarray, min_area: int, connectivity: int = 8) -> np.ndarray:
    """Drop connected components with fewer than ``min_area`` pixels."""
    mask = np.asarray(mask, dtype=bool)
    lab, n = ndimage.label(mask, structure=lattice_structure(connectivity))
    if n == 0:
        return mask.copy()
    area = np.bincount(lab.ravel(), minlength=n + 1)
    keep = area >= min_area
    keep[0] = False
    return keep[lab]


def dilate_disk1(inst: np.ndarray) -> np.ndarray:
    """Grow every instance by the radius-1 lattice disk (the 4-neighbour cross).

    Only background pixels are claimed; a pixel reached by several
    instances goes to the lowest id.
    """
    inst = np.asarray(inst)
    big = np.iinfo(np.int64).max
    cand = np.full(inst.shape, big, dtype=np.int64)
    src = np.where(inst > 0, inst.astype(np.int64), big)
    cand[1:, :] = np.minimum(cand[1:, :], src[:-1, :])
    cand[:-1, :] = np.minimum(cand[:-1, :], src[1:, :])
    cand[:, 1:] = np.minimum(cand[:, 1:], src[:, :-1])
    cand[:, :-1] = np.minimum(cand[:, :-1], src[:, 1:])
    out = inst.copy()
    claim = (inst == 0) & (cand != big)
    out[claim] = cand[claim]
    return out


def instance_postprocess(seg: np.ndarray, boundary: np.ndarray, cfg: Optional[PipelineConfig] = None) -> np.ndarray:
    """Boundary subtraction, thresholding, morphology, labeling and dilation."""
    cfg = cfg or PipelineConfig()
    seg = np.asarray(seg, dtype=np.float64)
    boundary = np.asarray(boundary, dtype=np.float64)
    check_same_shape(seg, boundary, names=("seg", "boundary"))
    d = np.clip(seg - boundary, 0.0, 1.0)
    mask = d > cfg.bin_threshold
    mask = fill_holes(mask, cfg.hole_fill_area, cfg.connectivity)
    mask = remove_small(mask, cfg.min_object_area, cfg.connectivity)
    inst = connected_components(mask, cfg.connectivity)
    return dilate_disk1(inst).astype(np.int32)
