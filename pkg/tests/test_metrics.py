import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointseg import aji, detection_prf, object_dice, panoptic_quality, pixel_accuracy_f1, segmentation_metrics
from pointseg.metrics import overlap_table, pq_matches


def _sets(inst):
    inst = np.asarray(inst)
    return {int(k): set(zip(*np.nonzero(inst == k))) for k in np.unique(inst) if k != 0}


def brute_aji(pred, gt):
    P, G = _sets(pred), _sets(gt)
    if not P and not G:
        return 1.0
    num = den = 0.0
    used = set()
    for g in sorted(G):
        best, bj = 0.0, None
        for j in sorted(P):
            iou = len(G[g] & P[j]) / len(G[g] | P[j])
            if iou > best:
                best, bj = iou, j
        if bj is None:
            den += len(G[g])
        else:
            num += len(G[g] & P[bj])
            den += len(G[g] | P[bj])
            used.add(bj)
    den += sum(len(P[j]) for j in P if j not in used)
    return num / den


def brute_pq(pred, gt):
    P, G = _sets(pred), _sets(gt)
    if not P and not G:
        return 1.0, 1.0, 1.0
    ious = [len(G[g] & P[j]) / len(G[g] | P[j]) for g in G for j in P]
    m = [x for x in ious if x > 0.5]
    tp = len(m)
    dq = tp / (tp + 0.5 * (len(P) - tp) + 0.5 * (len(G) - tp))
    sq = sum(m) / tp if tp else 0.0
    return dq, sq, dq * sq


def _random_instances(rng, shape=(20, 20), n=5):
    inst = np.zeros(shape, dtype=np.int32)
    for k in range(1, n + 1):
        r, c = rng.integers(0, shape[0] - 4), rng.integers(0, shape[1] - 4)
        h, w = rng.integers(2, 6, 2)
        inst[r:r + h, c:c + w] = k
    return inst


def test_detection_identity_and_empty():
    pts = [(3, 3), (10, 12)]
    assert detection_prf(pts, pts) == (1.0, 1.0, 1.0)
    assert detection_prf(np.zeros((0, 2)), pts) == (0.0, 0.0, 0.0)


def test_detection_one_to_one():
    res = detection_prf([(5, 5), (5, 7)], [(5, 6)], match_radius=3)
    assert res.precision == 0.5 and res.recall == 1.0


def test_detection_radius_is_inclusive():
    assert detection_prf([(0, 0)], [(0, 6)], 6).recall == 1.0
    assert detection_prf([(0, 0)], [(0, 7)], 6).recall == 0.0


def test_pixel_metrics():
    a = np.array([1, 1, 1, 0, 0])
    b = np.array([1, 1, 0, 1, 0])
    out = pixel_accuracy_f1(a, b)
    assert out["f1"] == pytest.approx(4 / 6)
    assert out["accuracy"] == pytest.approx(3 / 5)
    assert pixel_accuracy_f1(a, 1 - a)["accuracy"] == 0.0
    assert pixel_accuracy_f1(np.zeros(4), np.zeros(4)) == {"accuracy": 1.0, "f1": 1.0}


def test_aji_partial():
    gt = np.array([[1, 1]])
    pred = np.array([[1, 0]])
    assert aji(pred, gt) == pytest.approx(0.5)


def test_aji_extra_prediction():
    gt = np.zeros((4, 6), int)
    gt[0:2, 0:2] = 1
    pred = gt.copy()
    pred[2:4, 4:6] = 2
    assert aji(pred, gt) == pytest.approx(0.5)


def test_pq_fixture():
    gt = np.zeros((4, 10), int)
    gt[0, 0:5] = 1
    gt[3, 0:3] = 2
    pred = np.zeros_like(gt)
    pred[0, 0:4] = 1  # IoU 4/5
    dq, sq, pq = panoptic_quality(pred, gt)
    assert (dq, sq, pq) == pytest.approx((2 / 3, 0.8, 0.8 * 2 / 3), abs=1e-4)


def test_pq_half_iou_is_unmatched():
    gt = np.array([[1, 1]])
    pred = np.array([[1, 0]])
    assert panoptic_quality(pred, gt).dq == 0.0


def test_dice_fixture():
    gt = np.zeros((2, 2), int) + 1
    pred = np.array([[1, 1], [0, 0]])
    assert object_dice(pred, gt) == pytest.approx(2 * 2 / 6)
    assert object_dice(np.zeros((2, 2)), gt) == 0.0


def test_identity_is_one():
    inst = _random_instances(np.random.default_rng(0))
    m = segmentation_metrics(inst, inst)
    assert all(v == 1.0 for v in m.values())
    empty = np.zeros((5, 5), int)
    assert all(v == 1.0 for v in segmentation_metrics(empty, empty).values())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt, pred = _random_instances(rng), _random_instances(rng, n=int(rng.integers(0, 7)))
    assert aji(pred, gt) == pytest.approx(brute_aji(pred, gt), abs=1e-12)
    assert tuple(panoptic_quality(pred, gt)) == pytest.approx(brute_pq(pred, gt), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabel_invariance_and_range(seed):
    rng = np.random.default_rng(seed)
    gt, pred = _random_instances(rng), _random_instances(rng)
    perm = np.concatenate([[0], rng.permutation(np.arange(1, 50)) + 100])
    base = segmentation_metrics(pred, gt)
    moved = segmentation_metrics(perm[pred], perm[gt])
    for k in ("accuracy", "f1", "dice", "dq", "sq", "pq"):
        assert moved[k] == pytest.approx(base[k], abs=1e-12)
    # AJI breaks IoU ties by lower prediction id, so only order-preserving relabels are neutral
    spread = np.concatenate([[0], np.sort(rng.choice(np.arange(1, 10_000), 49, replace=False))])
    assert aji(spread[pred], spread[gt]) == pytest.approx(base["aji"], abs=1e-12)
    assert all(0.0 <= v <= 1.0 for v in base.values())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pq_matches_unique_and_aji_bounded(seed):
    rng = np.random.default_rng(seed)
    gt, pred = _random_instances(rng), _random_instances(rng)
    gi, pj, _ = pq_matches(pred, gt)
    assert len(set(gi)) == len(gi) and len(set(pj)) == len(pj)
    ov = overlap_table(pred, gt)
    if len(gi):
        assert aji(pred, gt) <= ov.inter[gi, pj].sum() / ov.union[gi, pj].sum() + 1e-12
