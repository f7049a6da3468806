"""Independent oracles shared by the test-suite.

Nothing here calls into ``pointseg``; these are slow, obviously-correct
reimplementations used to freeze expected values.
"""

from fractions import Fraction
import math

import numpy as np
import pytest


def brute_sq_distance(points, height, width):
    d2 = np.full((height, width), np.iinfo(np.int64).max, dtype=np.int64)
    rr, cc = np.indices((height, width))
    for r, c in points:
        d2 = np.minimum(d2, (rr - r) ** 2 + (cc - c) ** 2)
    return d2


def brute_nearest_index(points, height, width):
    cell = np.zeros((height, width), dtype=np.int64)
    for r in range(height):
        for c in range(width):
            best, arg = None, None
            for k, (pr, pc) in enumerate(points):
                d = (r - pr) ** 2 + (c - pc) ** 2
                if best is None or d < best:
                    best, arg = d, k
            cell[r, c] = arg
    return cell


def oracle_line(a, b):
    """Digital line by exact rational rounding.

    Trace from the row-major-first endpoint; along the major axis step one
    pixel at a time, on the other axis take the lattice value nearest to the
    exact line, rounding halves away from the start.
    """
    a, b = tuple(map(int, a)), tuple(map(int, b))
    s, e = (a, b) if a <= b else (b, a)
    dr, dc = e[0] - s[0], e[1] - s[1]
    n = max(abs(dr), abs(dc))
    if n == 0:
        pts = [s]
    else:
        pts = []
        for t in range(n + 1):
            fr = Fraction(t * abs(dr), n)
            fc = Fraction(t * abs(dc), n)
            rr = math.floor(fr + Fraction(1, 2))
            cc = math.floor(fc + Fraction(1, 2))
            pts.append((s[0] + (1 if dr > 0 else -1) * rr, s[1] + (1 if dc > 0 else -1) * cc))
    return pts if a <= b else pts[::-1]


def flood_fill_components(mask, connectivity):
    """Label components by explicit BFS; ids in row-major first-pixel order."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    lab = np.zeros((h, w), dtype=np.int64)
    if connectivity == 4:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    nxt = 1
    for r in range(h):
        for c in range(w):
            if mask[r, c] and lab[r, c] == 0:
                stack = [(r, c)]
                lab[r, c] = nxt
                while stack:
                    y, x = stack.pop()
                    for dr, dc in nbrs:
                        yy, xx = y + dr, x + dc
                        if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and lab[yy, xx] == 0:
                            lab[yy, xx] = nxt
                            stack.append((yy, xx))
                nxt += 1
    return lab


def central_diff(fn, x, i, h):
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    v = flat[i]
    flat[i] = v + h
    up = fn(x)
    flat[i] = v - h
    down = fn(x)
    return (up - down) / (2 * h)


def disk_image(shape, centers_radii):
    rr, cc = np.indices(shape)
    inst = np.zeros(shape, dtype=np.int32)
    for k, (r, c, rad) in enumerate(centers_radii, start=1):
        inst[(rr - r) ** 2 + (cc - c) ** 2 <= rad * rad] = k
    return inst


def brute_pairs(classes, gamma):
    """Every unordered confident pixel pair within ``gamma``, as a dict keyed by (a, b)."""
    classes = np.asarray(classes)
    h, w = classes.shape
    pix = [(r, c) for r in range(h) for c in range(w)]
    out = {}
    for i, a in enumerate(pix):
        for b in pix[i + 1:]:
            if (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 > gamma * gamma:
                continue
            ca, cb = int(classes[a]), int(classes[b])
            if ca < 0 or cb < 0:
                continue
            if ca > 0 and cb > 0:
                out[(a, b)] = (1, 0) if ca == cb else (0, 1)
            elif ca == 0 and cb == 0:
                out[(a, b)] = (1, 2)
            else:
                out[(a, b)] = (0, 3)
    return out


def brute_boundary_loss(boundary, pairs, eps):
    """Four subset means of the affinity cross-entropy, one pair at a time.

    ``pairs`` maps (a, b) to (label, subset) with subsets 0..3 =
    fg-pos, fg-neg, bg-pos, cross-neg.
    """
    sums = [0.0] * 4
    counts = [0] * 4
    for (a, b), (label, subset) in pairs.items():
        m = max(float(boundary[p]) for p in oracle_line(a, b))
        aff = min(max(1.0 - m, eps), 1.0 - eps)
        sums[subset] += -math.log(aff) if label == 1 else -math.log(1.0 - aff)
        counts[subset] += 1
    return sum(s / n for s, n in zip(sums, counts) if n)


def five_by_five():
    """Two square instances, a background gutter and one uncertain pixel."""
    classes = np.array([
        [1, 1, 0, 2, 2],
        [1, 1, 0, 2, 2],
        [0, 0, 0, 0, 0],
        [0, -1, 0, 0, 0],
        [0, 0, 0, 0, 0],
    ])
    boundary = np.random.default_rng(7).uniform(0.1, 0.9, (5, 5))
    return classes, boundary


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
