import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_boundary_loss, brute_pairs, central_diff, five_by_five, oracle_line
from pointseg import (
    AffinityPair,
    AffinityPairs,
    DataError,
    affinity_from_boundary,
    affinity_label,
    boundary_loss,
    build_affinity_pairs,
    coarse_instances,
    half_disk_offsets,
    pair_affinities,
    path_pixels,
    total_fine_loss,
)
from pointseg.affinity import BG_POS, CROSS_NEG, FG_NEG, FG_POS, tie_pixels


def test_labels():
    assert affinity_label(7, 7) == (1, FG_POS)
    assert affinity_label(3, 5) == (0, FG_NEG)
    assert affinity_label(0, 0) == (1, BG_POS)
    assert affinity_label(0, 4) == (0, CROSS_NEG)
    assert affinity_label(-1, 4)[0] == -1


def test_coarse_thresholds():
    prob = np.array([[0.7, 0.6, 0.3, 0.05, 0.01, 0.9]])
    ci = coarse_instances(prob, 0.6, 0.05)
    assert ci.classes.tolist() == [[1, -1, -1, -1, 0, 2]]


def test_half_disk_is_one_per_unordered_offset():
    off = half_disk_offsets(8)
    full = {(dr, dc) for dr in range(-8, 9) for dc in range(-8, 9) if 0 < dr * dr + dc * dc <= 64}
    assert len(off) * 2 == len(full)
    keep = {tuple(o) for o in off.tolist()}
    assert all(((dr, dc) in keep) != ((-dr, -dc) in keep) for dr, dc in full)


def test_half_disk_stride():
    off = half_disk_offsets(8, stride=2)
    assert (off % 2 == 0).all() and len(off) > 0


@pytest.mark.parametrize("a, b, expected", [
    ((3, 4), (3, 4), [(3, 4)]),
    ((0, 0), (0, 3), [(0, 0), (0, 1), (0, 2), (0, 3)]),
    ((0, 0), (2, 2), [(0, 0), (1, 1), (2, 2)]),
])
def test_path_examples(a, b, expected):
    assert [tuple(p) for p in path_pixels(a, b).tolist()] == expected


coords = st.tuples(st.integers(0, 40), st.integers(0, 40))


@settings(max_examples=300, deadline=None)
@given(coords, coords)
def test_path_matches_oracle_and_is_connected(a, b):
    p = [tuple(x) for x in path_pixels(a, b).tolist()]
    assert p == oracle_line(a, b)
    assert p[0] == a and p[-1] == b
    assert len(p) == max(abs(a[0] - b[0]), abs(a[1] - b[1])) + 1
    assert all(max(abs(x[0] - y[0]), abs(x[1] - y[1])) == 1 for x, y in zip(p, p[1:]))
    assert p[::-1] == [tuple(x) for x in path_pixels(b, a).tolist()]


def test_pairs_match_brute_force():
    classes, _ = five_by_five()
    pairs = build_affinity_pairs(classes, gamma=3)
    got = {}
    for i in range(len(pairs)):
        pr = pairs[i]
        key = (pr.a, pr.b)
        assert key not in got  # each unordered pair once
        got[key] = (pr.label, pr.subset)
    assert got == brute_pairs(classes, 3)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pairs_match_brute_force_random(seed):
    rng = np.random.default_rng(seed)
    classes = rng.choice([-1, 0, 0, 1, 2, 3], size=(7, 9))
    pairs = build_affinity_pairs(classes, gamma=3)
    got = {(p.a, p.b): (p.label, p.subset) for p in (pairs[i] for i in range(len(pairs)))}
    assert len(got) == len(pairs)
    assert got == brute_pairs(classes, 3)


def test_pairs_reject_lower_half_offsets():
    with pytest.raises(DataError):
        build_affinity_pairs(np.zeros((4, 4), int), offsets=[(0, -1)])


def test_affinity_examples():
    b = np.zeros((5, 5))
    pair = AffinityPair((0, 0), (4, 4), 1, FG_POS)
    assert affinity_from_boundary(b, pair) == 1.0
    b[2, 2] = 0.7
    assert affinity_from_boundary(b, pair) == pytest.approx(0.3)
    b[0, 4] = 1.0  # off the path
    assert affinity_from_boundary(b, pair) == pytest.approx(0.3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_affinity_monotone_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    b = rng.random((12, 12))
    a, c = tuple(rng.integers(0, 12, 2)), tuple(rng.integers(0, 12, 2))
    fwd = affinity_from_boundary(b, AffinityPair(a, c, 1, 0))
    assert fwd == affinity_from_boundary(b, AffinityPair(c, a, 1, 0))
    raised = b.copy()
    raised[tuple(rng.integers(0, 12, 2))] += rng.random()
    assert affinity_from_boundary(np.clip(raised, 0, 1), AffinityPair(a, c, 1, 0)) <= fwd


def test_vectorised_matches_single_pair():
    rng = np.random.default_rng(3)
    classes = rng.choice([0, 1, 2], size=(20, 20))
    b = rng.random((20, 20)).astype(np.float32)
    pairs = build_affinity_pairs(classes, gamma=5)
    aff = pair_affinities(b, pairs)
    for i in rng.choice(len(pairs), 400, replace=False):
        assert aff[i] == affinity_from_boundary(b, pairs[i])


def test_loss_trivial_terms():
    b = np.zeros((1, 3))
    fg = AffinityPairs.from_coords((1, 3), [(0, 0)], [(0, 2)], [1], [FG_POS])
    assert boundary_loss(b, fg).loss == pytest.approx(-math.log(1 - 1e-7))
    b[0, 1] = 1.0
    cross = AffinityPairs.from_coords((1, 3), [(0, 0)], [(0, 2)], [0], [CROSS_NEG])
    assert boundary_loss(b, cross).loss == pytest.approx(-math.log(1 - 1e-7))


def test_loss_matches_brute_force_on_toy():
    classes, b = five_by_five()
    pairs = build_affinity_pairs(classes, gamma=8)
    res = boundary_loss(b, pairs)
    assert res.loss == pytest.approx(brute_boundary_loss(b, brute_pairs(classes, 8), 1e-7), abs=1e-6)
    assert all(res.counts[k] > 0 for k in res.counts)


def test_loss_no_pairs():
    with pytest.raises(DataError, match="no supervision pairs"):
        boundary_loss(np.zeros((3, 3)), build_affinity_pairs(-np.ones((3, 3), int)))


def test_loss_rejects_out_of_range():
    classes, b = five_by_five()
    with pytest.raises(DataError):
        boundary_loss(b + 1.0, build_affinity_pairs(classes, 2))


def test_duplicating_a_subset_keeps_loss():
    classes, b = five_by_five()
    pairs = build_affinity_pairs(classes, gamma=4)
    dup = pairs.select(np.flatnonzero(pairs.subset == FG_POS))
    both = AffinityPairs.concat([pairs, dup])
    assert abs(boundary_loss(b, both).loss - boundary_loss(b, pairs).loss) < 1e-9


def test_pair_order_does_not_matter():
    classes, b = five_by_five()
    pairs = build_affinity_pairs(classes, gamma=4)
    perm = np.random.default_rng(0).permutation(len(pairs))
    shuffled = pairs.select(perm)
    assert boundary_loss(b, shuffled).loss == pytest.approx(boundary_loss(b, pairs).loss, abs=1e-12)
    assert np.array_equal(pair_affinities(b, shuffled), pair_affinities(b, pairs)[perm])


def test_ideal_boundary_reaches_floor():
    inst = np.zeros((16, 16), int)
    inst[2:7, 2:7] = 1
    inst[9:14, 8:14] = 2
    boundary = np.zeros((16, 16))
    for k in (1, 2):
        m = inst == k
        interior = m.copy()
        interior[1:-1, 1:-1] = m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
        boundary[m & ~interior] = 1.0
    pairs = build_affinity_pairs(inst, gamma=4)
    aff = pair_affinities(boundary, pairs)
    cross = pairs.subset == CROSS_NEG
    assert (aff[cross] == 0).all()
    paths = [path_pixels(*pairs[i][:2]) for i in range(len(pairs))]
    free = np.array([not boundary[q[:, 0], q[:, 1]].any() for q in paths])
    pos = (pairs.subset == FG_POS) | (pairs.subset == BG_POS)
    assert (aff[pos & free] == 1).all()


def _fd_check(b, pairs, mask):
    res = boundary_loss(b, pairs)
    for i in np.flatnonzero(mask.ravel()):
        fd = central_diff(lambda x: boundary_loss(x, pairs).loss, b, i, 1e-3)
        g = float(res.grad.ravel()[i])
        scale = max(abs(fd), abs(g))
        if scale > 1e-10:
            assert abs(fd - g) / scale < 1e-3, (i, fd, g)


def test_gradient_finite_differences_toy():
    classes, b = five_by_five()
    pairs = build_affinity_pairs(classes, gamma=8)
    _fd_check(b, pairs, ~tie_pixels(b, pairs, 2e-3))


def test_gradient_finite_differences_random():
    rng = np.random.default_rng(21)
    classes = np.zeros((16, 16), int)
    classes[2:7, 3:8] = 1
    classes[9:14, 6:12] = 2
    classes[rng.random((16, 16)) < 0.1] = -1
    b = rng.uniform(0.1, 0.9, (16, 16))
    pairs = build_affinity_pairs(classes, gamma=4)
    ties = tie_pixels(b, pairs, 2e-3)
    assert ties.sum() < ties.size
    _fd_check(b, pairs, ~ties)


def test_threads_are_bit_identical():
    rng = np.random.default_rng(5)
    classes = rng.choice([-1, 0, 1, 2, 3], size=(40, 40))
    b = rng.random((40, 40))
    pairs = build_affinity_pairs(classes, gamma=8)
    one = boundary_loss(b, pairs, jobs=1)
    many = boundary_loss(b, pairs, jobs=4)
    assert one.loss == many.loss
    assert np.array_equal(one.grad, many.grad)


def test_total_fine_loss():
    assert total_fine_loss(1.0, 2.0, 3.0, 0.1) == pytest.approx(3.3)
    assert total_fine_loss(1.0, 2.0, 3.0, 0.0) == 3.0
