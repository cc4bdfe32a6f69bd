from dataclasses import replace

import numpy as np
import pytest

from instrack.core import InputError, TrackerParams
from instrack.geometry import iou_matrix
from instrack.scoring import create_instance_scorer, harvest_samples, score
from instrack.simulator import ScenarioSpec, generate

BASE = ScenarioSpec(num_targets=3, frames=40, arena=(500, 400), box_size=(30, 60), speed=3.0)


def test_noise_free_detections_equal_gt():
    w = generate(BASE, 1)
    for f in range(1, BASE.frames + 1):
        assert [d.box for d in w.detections[f]] == [b for _, b in w.gt[f]]


def test_all_missed():
    w = generate(replace(BASE, miss_rate=1.0), 1)
    assert all(len(v) == 0 for v in w.detections.values())


def test_same_seed_same_world():
    spec = replace(BASE, miss_rate=0.2, fp_rate=0.5, det_noise=2.0, motion_jitter=0.5)
    a, b = generate(spec, 42), generate(spec, 42)
    assert a.gt == b.gt and a.detections == b.detections
    np.testing.assert_array_equal(a.source.signatures, b.source.signatures)
    boxes = np.array([[100, 100, 30, 60], [250, 200, 20, 20]], dtype=float)
    np.testing.assert_array_equal(a.source.features(5, boxes), b.source.features(5, boxes))
    assert generate(spec, 43).gt != a.gt


def test_degenerate_spec():
    with pytest.raises(InputError):
        ScenarioSpec(arena=(50, 50), box_size=(60, 20))
    with pytest.raises(InputError):
        ScenarioSpec(miss_rate=1.5)


def test_gt_stays_in_bounds():
    w = generate(replace(BASE, frames=300, speed=9.0, motion_jitter=2.0), 5)
    aw, ah = BASE.arena
    for entries in w.gt.values():
        for _, b in entries:
            assert b.w > 0 and b.h > 0
            assert -aw <= b.cx <= 2 * aw and -ah <= b.cy <= 2 * ah
            assert 0 <= b.left and b.left + b.w <= aw + 1e-9


def test_false_positive_rate():
    rate = 1.5
    w = generate(replace(BASE, frames=2000, fp_rate=rate), 9)
    counts = np.array([len(v) - 3 for v in w.detections.values()])
    sigma = np.sqrt(rate / len(counts))
    assert abs(counts.mean() - rate) < 3 * sigma


def test_occlusion_suppresses_detections_and_appearance():
    spec = replace(BASE, occlusions=((2, 10, 5),))
    w = generate(spec, 3)
    for f in range(10, 15):
        assert len(w.detections[f]) == 2
        target = w.gt[f][1][1].as_array()[None, :]
        np.testing.assert_allclose(w.source.features(f, target)[0, 0], 0.0, atol=1.0)
        assert abs(w.source.features(f, target)[0, 0]) < 0.5
    assert len(w.detections[15]) == 3


def test_oracle_signature_and_background():
    w = generate(replace(BASE, feature_noise=0.0), 2)
    gt = w.gt[1]
    f = w.source.features(1, np.array([b.as_array() for _, b in gt]))
    np.testing.assert_array_equal(f, w.source.signatures)
    far = np.array([[5.0, 5.0, 4.0, 4.0]])
    if iou_matrix(far, np.array([b.as_array() for _, b in gt])).max() <= 0.3:
        np.testing.assert_array_equal(w.source.features(1, far), 0.0)
    sig = w.source.signatures
    d = np.linalg.norm(sig[0] - sig[1])
    assert d == pytest.approx(BASE.appearance_separation)


def test_separated_appearance_is_learnable():
    """A scorer trained on target A ranks A above B in at least 99% of frames."""
    spec = replace(BASE, frames=100, appearance_separation=1.0, feature_noise=0.1)
    w = generate(spec, 4)
    params = TrackerParams(n_pos=100, n_neg=64)
    rng = np.random.default_rng(0)
    from instrack.scoring import LogisticPruner
    init = LogisticPruner(np.zeros(spec.dim))
    a = harvest_samples(w.gt[1][0][1], 1, w.source, params, rng)
    b = harvest_samples(w.gt[1][1][1], 1, w.source, params, rng)
    scorer = create_instance_scorer(a, [b.positives], init, params, rng)
    wins = 0
    for f in range(1, spec.frames + 1):
        boxes = np.array([w.gt[f][0][1].as_array(), w.gt[f][1][1].as_array()])
        s = score(scorer, w.source.features(f, boxes))
        wins += s[0] > s[1]
    assert wins >= 0.99 * spec.frames
