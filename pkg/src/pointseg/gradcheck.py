"""Central finite-difference checks of the analytic loss gradients."""

from __future__ import annotations

from typing import Callable, Dict, Optional

import numpy as np
from scipy import ndimage

from .affinity import boundary_loss, build_affinity_pairs, coarse_instances, tie_pixels
from .coarse import masked_cross_entropy
from .heatmap import detection_loss, gaussian_heatmap
from .raster import IGNORE


def finite_difference(loss_fn: Callable[[np.ndarray], float], x: np.ndarray, pixels: np.ndarray,
                      step: float = 1e-3) -> np.ndarray:
    """Central differences of ``loss_fn`` at the flat indices ``pixels``."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.empty(len(pixels))
    for n, i in enumerate(pixels):
        v = flat[i]
        flat[i] = v + step
        up = loss_fn(x)
        flat[i] = v - step
        down = loss_fn(x)
        flat[i] = v
        out[n] = (up - down) / (2 * step)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """``|a - n| / max(|a|, |n|)``; entries where both are below ``floor`` count as 0."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(n))
    return np.where(scale > floor, np.abs(a - n) / np.maximum(scale, floor), 0.0)


def check_gradient(loss_fn: Callable[[np.ndarray], float], grad: np.ndarray, x: np.ndarray,
                   mask: np.ndarray, step: float = 1e-3, max_pixels: Optional[int] = None,
                   seed: int = 0) -> Dict[str, float]:
    """Compare ``grad`` against central differences on the pixels of ``mask``."""
    pixels = np.flatnonzero(np.asarray(mask).ravel())
    if max_pixels is not None and len(pixels) > max_pixels:
        pixels = np.sort(np.random.default_rng(seed).choice(pixels, max_pixels, replace=False))
    numeric = finite_difference(loss_fn, x, pixels, step)
    analytic = np.asarray(grad, dtype=np.float64).ravel()[pixels]
    err = relative_error(analytic, numeric)
    worst = int(np.argmax(err)) if len(err) else 0
    return {
        "checked_pixels": int(len(pixels)),
        "max_rel_error": float(err.max()) if len(err) else 0.0,
        "mean_rel_error": float(err.mean()) if len(err) else 0.0,
        "worst_pixel": int(pixels[worst]) if len(err) else -1,
        "step": step,
    }


def random_disks(shape, n: int, radius_range, rng: np.random.Generator) -> np.ndarray:
    """Instance map of up to ``n`` random non-touching disks (ids 1..k)."""
    h, w = shape
    rr, cc = np.indices(shape)
    inst = np.zeros(shape, dtype=np.int32)
    placed = []
    for _ in range(50 * n):
        if len(placed) == n:
            break
        r = int(rng.integers(radius_range[0], radius_range[1] + 1))
        cy, cx = rng.integers(r, h - r), rng.integers(r, w - r)
        if any((cy - py) ** 2 + (cx - px) ** 2 <= (r + pr + 2) ** 2 for py, px, pr in placed):
            continue
        placed.append((cy, cx, r))
        inst[(rr - cy) ** 2 + (cc - cx) ** 2 <= r * r] = len(placed)
    return inst


def _coarse_prob(shape, rng):
    # confident disks, an uncertain ring around each, confident background elsewhere
    inst = random_disks(shape, max(2, shape[0] * shape[1] // 250), (2, 4), rng)
    ring = ndimage.binary_dilation(inst > 0, iterations=1) & (inst == 0)
    prob = np.where(inst > 0, 0.9, 0.01)
    prob[ring] = 0.3
    return prob


def gradcheck_kernel(kernel: str, size: int = 32, seed: int = 0, step: float = 1e-3,
                     max_pixels: Optional[int] = None, eps_log: float = 1e-7, gamma: int = 8,
                     tie_tol: float = 2e-3) -> Dict[str, float]:
    """Finite-difference report for one loss kernel on a random ``size x size`` fixture."""
    rng = np.random.default_rng(seed)
    shape = (size, size)
    if kernel == "det-loss":
        pts = np.unique(rng.integers(0, size, (max(1, size // 8), 2)), axis=0)
        target = gaussian_heatmap(pts, size, size, sigma=2.0, r1=4.0, r2=8.0)
        pred = rng.uniform(0.0, 1.0, shape)
        res = detection_loss(pred, target)
        report = check_gradient(lambda x: detection_loss(x, target).loss, res.grad, pred, target != -1,
                                step, max_pixels, seed)
    elif kernel == "ce-loss":
        mask = rng.choice([IGNORE, 0, 1, 2], size=shape).astype(np.int32)
        pred = rng.uniform(0.1, 0.9, shape)
        res = masked_cross_entropy(pred, mask, eps_log)
        report = check_gradient(lambda x: masked_cross_entropy(x, mask, eps_log).loss, res.grad, pred,
                                mask != IGNORE, step, max_pixels, seed)
    elif kernel == "boundary-loss":
        pairs = build_affinity_pairs(coarse_instances(_coarse_prob(shape, rng)), gamma)
        boundary = rng.uniform(0.1, 0.9, shape)
        res = boundary_loss(boundary, pairs, eps_log)
        ties = tie_pixels(boundary, pairs, tie_tol)
        report = check_gradient(lambda x: boundary_loss(x, pairs, eps_log).loss, res.grad, boundary, ~ties,
                                step, max_pixels, seed)
        report["excluded_tie_pixels"] = int(ties.sum())
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    report.update(kernel=kernel, size=size, seed=seed, loss=float(res.loss))
    return report
