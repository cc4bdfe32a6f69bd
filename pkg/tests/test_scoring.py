import math
from dataclasses import replace

import numpy as np
import pytest

from instrack.core import BoundingBox, Detection, InputError, TrackerParams
from instrack.geometry import iou_matrix
from instrack.scoring import (
    HistogramSource,
    InstanceScorer,
    LogisticPruner,
    PassthroughPruner,
    SampleSet,
    create_instance_scorer,
    extract_histogram_features,
    harvest_boxes,
    harvest_samples,
    prune_detections,
    score,
    train_pruner,
    update_scorer,
)
from instrack.simulator import ScenarioSpec, generate

PARAMS = TrackerParams()


@pytest.fixture(scope="module")
def world():
    spec = ScenarioSpec(num_targets=3, frames=30, arena=(640, 480),
                        starts=((100, 100), (320, 240), (520, 380)),
                        velocities=((1, 0), (0, 1), (-1, 0)))
    return generate(spec, 11)


@pytest.fixture(scope="module")
def pruner(world):
    labeled = {f: [b for _, b in world.gt[f]] for f in range(1, 21)}
    return train_pruner(labeled, world.source, PARAMS, np.random.default_rng(0))


def gray_image(h=40, w=60, value=128):
    return np.full((h, w, 3), value, dtype=np.uint8)


def test_histogram_uniform_gray():
    f = extract_histogram_features(gray_image(), BoundingBox(30, 20, 10, 10))
    assert f.shape == (512,)
    assert f[4 * 64 + 4 * 8 + 4] == 1.0
    assert f.sum() == 1.0


def test_histogram_normalised(rng):
    img = rng.integers(0, 256, (50, 70, 3), dtype=np.uint8)
    for _ in range(10):
        f = extract_histogram_features(img, BoundingBox(rng.uniform(5, 65), rng.uniform(5, 45), 13.3, 9.1))
        assert abs(f.sum() - 1.0) < 1e-9


def test_histogram_disjoint_same_colour_patches():
    img = np.zeros((40, 80, 3), dtype=np.uint8)
    patch = np.random.default_rng(3).integers(0, 256, (10, 10, 3), dtype=np.uint8)
    img[5:15, 5:15] = patch
    img[20:30, 60:70] = patch
    a = extract_histogram_features(img, BoundingBox(10, 10, 10, 10))
    b = extract_histogram_features(img, BoundingBox(65, 25, 10, 10))
    np.testing.assert_array_equal(a, b)


def test_histogram_box_outside_frame():
    with pytest.raises(InputError):
        extract_histogram_features(gray_image(), BoundingBox(500, 500, 10, 10))


def test_histogram_source_batch_matches_direct(rng):
    img = rng.integers(0, 256, (30, 30, 3), dtype=np.uint8)
    src = HistogramSource(lambda frame: img)
    boxes = np.array([[10, 10, 8, 8], [20, 15, 5, 9.5]])
    feats = src.features(1, boxes)
    for b, f in zip(boxes, feats):
        np.testing.assert_array_equal(f, extract_histogram_features(img, BoundingBox.from_array(b)))
    assert src.dimensions(1) == (30, 30)


def test_score_zero_model_is_half(rng):
    s = InstanceScorer(np.zeros(7))
    assert score(s, rng.normal(size=7)) == 0.5


def test_score_matches_hand_recomputation(rng):
    w, x, b = rng.normal(size=5), rng.normal(size=5), 0.37
    expected = 1.0 / (1.0 + math.exp(-(sum(wi * xi for wi, xi in zip(w, x)) + b)))
    assert score(InstanceScorer(w, b), x) == pytest.approx(expected, rel=1e-14)


def test_score_monotone_in_projection(rng):
    s = InstanceScorer(rng.normal(size=4), 0.1)
    x = rng.normal(size=4)
    assert score(s, x + 0.5 * s.weights) > score(s, x)


def test_score_dimension_mismatch():
    with pytest.raises(InputError):
        score(InstanceScorer(np.zeros(3)), np.zeros(4))


def test_score_range_extreme_inputs():
    s = InstanceScorer(np.ones(2))
    for x in (-1e6, -40.0, 0.0, 40.0, 1e6):
        assert 0.0 < score(s, np.array([x, x])) < 1.0


def test_prune_empty():
    assert prune_detections([], PassthroughPruner(), None, 0.5) == []


def test_prune_threshold_zero_keeps_all_in_order(world):
    dets = world.detections[1]
    out = prune_detections(dets, PassthroughPruner(), world.source, 0.0)
    assert [o.box for o in out] == [d.box for d in dets]


def test_prune_rejects_mixed_frames():
    dets = [Detection(1, BoundingBox(1, 1, 1, 1)), Detection(2, BoundingBox(1, 1, 1, 1))]
    with pytest.raises(InputError):
        prune_detections(dets, PassthroughPruner(), None, 0.5)


def test_trained_pruner_drops_background(world, pruner):
    frame = 25
    gt_boxes = [b for _, b in world.gt[frame]]
    background = Detection(frame, BoundingBox(600, 60, 40, 80))
    assert iou_matrix([background.box], gt_boxes).max() == 0.0
    dets = [Detection(frame, b) for b in gt_boxes] + [background]
    scores = pruner.prune_scores(dets, world.source.features(frame, np.array([d.box.as_array() for d in dets])))
    assert scores[-1] < 0.5
    out = prune_detections(dets, pruner, world.source, 0.5)
    assert [o.box for o in out] == gt_boxes
    assert len(out) <= len(dets)


def test_pruner_held_out_accuracy(world, pruner):
    rng = np.random.default_rng(77)
    feats, labels = [], []
    for frame in range(21, 31):
        gt = [b for _, b in world.gt[frame]]
        for b in gt:
            p, n = harvest_boxes(b, 640, 480, PARAMS, rng, n_pos=5, n_neg=5)
            n = n[iou_matrix(n, np.array([g.as_array() for g in gt])).max(axis=1) < PARAMS.theta_neg]
            feats += [world.source.features(frame, p), world.source.features(frame, n)]
            labels += [np.ones(len(p)), np.zeros(len(n))]
    X, y = np.vstack(feats), np.concatenate(labels)
    acc = np.mean((pruner.score_features(X) >= 0.5) == (y == 1))
    assert acc >= 0.95


def test_train_pruner_deterministic_and_zero_rounds(world):
    labeled = {f: [b for _, b in world.gt[f]] for f in range(1, 6)}
    a = train_pruner(labeled, world.source, PARAMS, np.random.default_rng(5))
    b = train_pruner(labeled, world.source, PARAMS, np.random.default_rng(5))
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.bias == b.bias
    plain = train_pruner(labeled, world.source, replace(PARAMS, pruner_rounds=0), np.random.default_rng(5))
    assert isinstance(plain, LogisticPruner)
    with pytest.raises(InputError):
        train_pruner({1: []}, world.source, PARAMS, np.random.default_rng(0))


def test_harvest_counts_and_overlaps(world):
    rng = np.random.default_rng(9)
    target = world.gt[5][1][1]
    smp = harvest_samples(target, 5, world.source, PARAMS, rng)
    assert smp.positives.shape == (500, world.source.dim)
    assert smp.negatives.shape == (256, world.source.dim)
    ov_pos = iou_matrix(smp.pos_boxes, [target])[:, 0]
    ov_neg = iou_matrix(smp.neg_boxes, [target])[:, 0]
    assert np.all(ov_pos > PARAMS.theta_pos)
    assert np.all(ov_neg < PARAMS.theta_neg)


def test_harvest_between_thresholds_excluded():
    # a box at IoU 0.4 qualifies for neither pool
    t = BoundingBox(100, 100, 20, 20)
    pos, neg = harvest_boxes(t, 400, 400, PARAMS, np.random.default_rng(1))
    both = np.vstack([pos, neg])
    ov = iou_matrix(both, [t])[:, 0]
    assert not np.any((ov >= PARAMS.theta_neg) & (ov <= PARAMS.theta_pos))


def test_harvest_unreachable_quota():
    p = replace(PARAMS, theta_pos=1.0, n_pos=5, n_neg=5)
    with pytest.raises(InputError, match="positive"):
        harvest_boxes(BoundingBox(50, 50, 10, 10), 100, 100, p, np.random.default_rng(0))


def test_instance_scorer_discriminative(world, pruner):
    rng = np.random.default_rng(3)
    frame = 1
    smp = [harvest_samples(b, frame, world.source, PARAMS, rng) for _, b in world.gt[frame]]
    scorer = create_instance_scorer(smp[0], [s.positives for s in smp[1:]], pruner, PARAMS, rng)
    # fresh samples from a later frame
    later = [harvest_samples(b, 10, world.source, PARAMS, rng) for _, b in world.gt[10]]
    own = score(scorer, later[0].positives).mean()
    other = np.mean([score(scorer, s.positives).mean() for s in later[1:]])
    assert own - other >= 0.3
    assert np.all((score(scorer, later[1].negatives) > 0) & (score(scorer, later[1].negatives) < 1))
    assert scorer.hard_pool.shape[0] == PARAMS.n_neg


def test_instance_scorer_zero_passes_equals_init(world, pruner):
    rng = np.random.default_rng(3)
    p = replace(PARAMS, instance_passes=0, n_pos=20, n_neg=20)
    smp = harvest_samples(world.gt[1][0][1], 1, world.source, p, rng)
    s = create_instance_scorer(smp, [], pruner, p, rng)
    np.testing.assert_array_equal(s.weights, pruner.weights)
    assert s.bias == pruner.bias


def test_instance_scorer_needs_positives(pruner):
    with pytest.raises(InputError):
        create_instance_scorer(SampleSet(np.zeros((0, 3)), np.zeros((2, 3))), [], pruner, PARAMS,
                               np.random.default_rng(0))


def test_update_fills_pool_in_score_order():
    w = np.array([1.0, 0.0])
    s = InstanceScorer(w, 0.0, capacity=3)
    negs = np.array([[-5.0, 0], [-1.0, 0], [-3.0, 0], [-2.0, 0], [-4.0, 0]])
    p = replace(PARAMS, update_passes=0)
    new = update_scorer(s, SampleSet(np.array([[2.0, 0.0]]), negs), p, np.random.default_rng(0))
    np.testing.assert_array_equal(new.hard_pool[:, 0], [-1.0, -2.0, -3.0])
    assert s.hard_pool.shape[0] == 0  # original untouched


def test_update_lowers_hard_negative_scores(world, pruner):
    rng = np.random.default_rng(8)
    p = replace(PARAMS, instance_passes=1)
    smp = harvest_samples(world.gt[1][0][1], 1, world.source, p, rng)
    s = create_instance_scorer(smp, [], pruner, p, rng)
    fresh = harvest_samples(world.gt[2][0][1], 2, world.source, p, rng)
    before = s.copy()
    new = update_scorer(s, fresh, p, rng)
    pool = new.hard_pool
    assert score(new, pool).mean() <= score(before, pool).mean()


def test_update_positives_only_uses_pool():
    s = InstanceScorer(np.array([1.0, 0.0]), 0.0, hard_pool=np.array([[0.5, 1.0]]), capacity=4)
    new = update_scorer(s, SampleSet(np.array([[2.0, 0.0]]), np.zeros((0, 2))), PARAMS, np.random.default_rng(0))
    np.testing.assert_array_equal(new.hard_pool, s.hard_pool)
    assert score(new, s.hard_pool[0]) < score(s, s.hard_pool[0])
