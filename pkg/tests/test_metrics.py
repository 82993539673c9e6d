import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wemf.metrics import (ConfusionCounts, accuracy, aggregate, binary_metrics, confusion, dice, evaluate_case,
                          hd95, iou, nsd, precision, recall, specificity, surface_distances, surface_mask)

from oracles import percentile_linear, score_binary


def _random_pair(seed, shape=(12, 12, 12)):
    rng = np.random.default_rng(seed)
    # blobby masks: threshold smoothed noise so surfaces are nontrivial
    from scipy import ndimage
    a = ndimage.gaussian_filter(rng.standard_normal(shape), 1.5) > rng.uniform(0.0, 0.2)
    b = ndimage.gaussian_filter(rng.standard_normal(shape), 1.5) > rng.uniform(0.0, 0.2)
    return a, b


def test_confusion_examples():
    ref = np.zeros((4, 4), int)
    ref[1:3, 1:3] = 1
    assert confusion(ref, ref) == ConfusionCounts(4, 0, 0, 12)
    assert confusion(np.zeros_like(ref), ref) == ConfusionCounts(0, 0, 4, 12)
    pred = np.zeros((4, 4), int)
    pred[0:2, 0:4] = 1
    # overlap (1,1),(1,2); pred extra 6; missed (2,1),(2,2)
    assert confusion(pred, ref) == ConfusionCounts(2, 6, 2, 6)
    with pytest.raises(ValueError):
        confusion(pred, ref[:3])


def test_confusion_per_class():
    ref = np.array([0, 1, 2, 2, 1])
    pred = np.array([1, 1, 2, 0, 2])
    assert confusion(pred, ref, 1) == ConfusionCounts(1, 1, 1, 2)
    assert confusion(pred, ref, 2) == ConfusionCounts(1, 1, 1, 2)
    assert confusion(pred, ref) == ConfusionCounts(3, 1, 1, 0)


def test_dice_iou_examples():
    full = ConfusionCounts(5, 0, 0, 5)
    assert dice(full) == 1.0 and iou(full) == 1.0
    disjoint = ConfusionCounts(0, 3, 3, 4)
    assert dice(disjoint) == 0.0 and iou(disjoint) == 0.0
    c = ConfusionCounts(2, 2, 0, 10)  # |pred| 4, |ref| 2, overlap 2
    assert dice(c) == pytest.approx(2 / 3) and iou(c) == pytest.approx(0.5)
    empty = ConfusionCounts(0, 0, 0, 9)
    assert dice(empty) == iou(empty) == recall(empty) == precision(empty) == specificity(empty) == 1.0


def test_rates():
    c = ConfusionCounts(6, 2, 3, 9)
    assert accuracy(c) == 15 / 20
    assert recall(c) == 6 / 9 and precision(c) == 6 / 8 and specificity(c) == 9 / 11
    assert recall(ConfusionCounts(0, 2, 0, 5)) == 0.0
    assert precision(ConfusionCounts(0, 0, 2, 5)) == 0.0


def test_surface_mask_face_connectivity():
    m = np.zeros((5, 5, 5), bool)
    m[1:4, 1:4, 1:4] = True
    s = surface_mask(m)
    assert s.sum() == 26 and not s[2, 2, 2]
    # foreground touching the array border counts as surface
    assert surface_mask(np.ones((3, 3), bool)).sum() == 8


def test_identical_masks_zero_distance():
    a, _ = _random_pair(0)
    stats = surface_distances(a, a, (1, 1, 1))
    assert np.all(stats.pooled == 0)
    assert hd95(stats) == 0.0 and nsd(stats) == 1.0


def test_single_voxels_along_z():
    a = np.zeros((4, 4, 6), bool)
    b = np.zeros_like(a)
    a[1, 1, 1] = True
    b[1, 1, 4] = True
    stats = surface_distances(a, b, (1.0, 1.0, 2.0))
    assert np.all(stats.pooled == 6.0)
    assert hd95(stats) == 6.0


def test_nsd_boundary_inclusive():
    a = np.zeros((4, 4), bool)
    b = np.zeros_like(a)
    a[1, 1] = True
    b[1, 2] = True
    stats = surface_distances(a, b, (1.0, 1.0))
    assert nsd(stats, 1.0) == 1.0
    assert nsd(stats, 0.999) == 0.0
    with pytest.raises(ValueError):
        nsd(stats, 0.0)


def test_hd95_percentile_convention():
    a = np.zeros((1, 40), bool)
    b = np.zeros((1, 40), bool)
    # surfaces: 19 coincident points plus one point 10 mm away, seen from both sides
    a[0, :19] = True
    b[0, :19] = True
    a[0, 29] = True
    stats = surface_distances(a, b, (1.0, 1.0))
    expected = percentile_linear(list(stats.pooled), 95)
    assert hd95(stats) == pytest.approx(expected, abs=1e-12)
    pooled = sorted([0.0] * 19 + [10.0])
    assert percentile_linear(pooled, 95) == pytest.approx(0.5)


def test_empty_policies():
    ref = np.zeros((6, 6, 6), int)
    ref[2:4, 2:4, 2:4] = 1
    stats = surface_distances(np.zeros((6, 6, 6), bool), ref > 0, (1, 1, 1))
    assert not stats.defined and hd95(stats) is None and nsd(stats) == 0.0
    both = surface_distances(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)), (1, 1, 1))
    assert both.both_empty and hd95(both) == 0.0 and nsd(both) == 1.0
    with pytest.raises(ValueError):
        surface_distances(ref, ref, (1, 1))
    with pytest.raises(ValueError):
        surface_distances(ref, ref, (1, 0, 1))


@pytest.mark.parametrize("seed", range(10))
def test_fast_path_matches_brute_force(seed):
    a, b = _random_pair(seed)
    sp = (0.7, 1.1, 2.5)
    fast = surface_distances(a, b, sp, "edt")
    slow = surface_distances(a, b, sp, "brute")
    assert np.abs(fast.pred_to_ref - slow.pred_to_ref).max() < 1e-9
    assert np.abs(fast.ref_to_pred - slow.ref_to_pred).max() < 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_binary_metrics_match_independent_scorer(seed):
    a, b = _random_pair(100 + seed)
    sp, tau = (1.0, 0.8, 2.0), 1.5
    m = binary_metrics(a, b, sp, tau)
    ref = score_binary(a, b, sp, tau)
    for key in ("dsc", "iou", "hd95", "nsd"):
        assert abs(getattr(m, key) - ref[key]) < 1e-9, key


@pytest.mark.parametrize("seed", range(6))
def test_symmetry_and_relations(seed):
    a, b = _random_pair(200 + seed)
    sp = (1.0, 1.0, 2.0)
    m1, m2 = binary_metrics(a, b, sp), binary_metrics(b, a, sp)
    for key in ("dsc", "iou", "hd95", "nsd"):
        assert getattr(m1, key) == pytest.approx(getattr(m2, key), abs=1e-12)
    assert abs(m1.dsc - 2 * m1.iou / (1 + m1.iou)) < 1e-12
    s1 = surface_distances(a, b, sp)
    s2 = surface_distances(a, b, tuple(2 * s for s in sp))
    assert hd95(s2) == 2 * hd95(s1)
    assert nsd(s2, 2.0) == nsd(s1, 1.0)


def test_growing_overlap_never_lowers_dice():
    ref = np.zeros((10, 10), bool)
    ref[2:8, 2:8] = True
    pred = np.zeros_like(ref)
    last = -1.0
    for i, j in zip(*np.nonzero(ref)):
        pred[i, j] = True
        d = dice(confusion(pred, ref))
        assert d >= last
        last = d
    assert last == 1.0


def test_evaluate_case_perfect_and_empty():
    ref = np.zeros((8, 8, 8), np.uint8)
    ref[1:4, 1:4, 1:4] = 1
    ref[5:7, 5:7, 5:7] = 2
    row = evaluate_case(ref, ref, (1, 1, 1))
    for g in ("tumor", "cyst", "overall"):
        m = row[g]
        assert (m.dsc, m.iou, m.nsd, m.hd95) == (1.0, 1.0, 1.0, 0.0)
        assert m.recall == m.precision == m.specificity == m.accuracy == 1.0
    bad = evaluate_case(np.zeros_like(ref), ref, (1, 1, 1))
    assert bad["overall"].dsc == 0.0 and bad["overall"].hd95 is None


def test_evaluate_case_matches_scorer_16cube():
    rng = np.random.default_rng(5)
    from scipy import ndimage
    ref = np.zeros((16, 16, 16), np.uint8)
    pred = np.zeros_like(ref)
    ref[ndimage.gaussian_filter(rng.standard_normal(ref.shape), 2) > 0.15] = 1
    ref[ndimage.gaussian_filter(rng.standard_normal(ref.shape), 2) > 0.2] = 2
    pred[ndimage.gaussian_filter(rng.standard_normal(ref.shape), 2) > 0.1] = 1
    pred[ndimage.gaussian_filter(rng.standard_normal(ref.shape), 2) > 0.2] = 2
    sp = (0.9, 0.9, 1.7)
    row = evaluate_case(pred, ref, sp, 1.0)
    for g, (pm, rm) in {"tumor": (pred == 1, ref == 1), "cyst": (pred == 2, ref == 2),
                        "overall": (pred > 0, ref > 0)}.items():
        oracle = score_binary(pm, rm, sp, 1.0)
        for key in ("dsc", "iou", "hd95", "nsd"):
            assert abs(getattr(row[g], key) - oracle[key]) < 1e-9


def test_aggregate_excludes_absent_classes_and_undefined_hd95():
    a = np.zeros((6, 6, 6), np.uint8)
    a[1:3, 1:3, 1:3] = 1
    b = a.copy()
    b[4:6, 4:6, 4:6] = 2
    rows = {"c1": evaluate_case(a, a, (1, 1, 1)),           # no cyst anywhere
            "c2": evaluate_case(np.where(b == 2, 0, b), b, (1, 1, 1))}  # cyst missed
    rep = aggregate(rows, params=32, flops=1e9)
    assert rep.n_cases == {"tumor": 2, "cyst": 1, "overall": 2}
    assert rep.hd95_undefined["cyst"] == 1 and rep.mean["cyst"]["hd95"] is None
    assert rep.mean["cyst"]["dsc"] == 0.0 and rep.mean["tumor"]["dsc"] == 1.0
    doc = json.loads(rep.to_json())
    assert doc["params"] == 32 and set(doc["cases"]) == {"c1", "c2"}
    table = rep.table("wemf")
    assert "T-DSC" in table and "n/a" in table


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), density=st.floats(0.05, 0.6))
def test_dsc_iou_relation_property(seed, density):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(6, 7)) < density
    b = rng.uniform(size=(6, 7)) < density
    c = confusion(a, b)
    assert abs(dice(c) - 2 * iou(c) / (1 + iou(c))) < 1e-12
    assert c.total == 42
