import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instrack.core import BoundingBox, InputError
from instrack.geometry import (
    CandidateSet,
    aggregate_prediction,
    iou,
    iou_matrix,
    sample_candidate_array,
    sample_candidates,
)

coord = st.floats(-100, 100, allow_nan=False)
size = st.floats(0.5, 50, allow_nan=False)
boxes = st.builds(BoundingBox, coord, coord, size, size)


def test_iou_identical():
    b = BoundingBox(5, 5, 4, 4)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(100, 100, 2, 2)) == 0.0


def test_iou_half_shift():
    # [0,2]x[0,2] vs [1,3]x[0,2]: intersection 2, union 6
    assert iou(BoundingBox(1, 1, 2, 2), BoundingBox(2, 1, 2, 2)) == pytest.approx(1 / 3, abs=1e-15)


def test_iou_touching_edges_is_zero():
    assert iou(BoundingBox(1, 1, 2, 2), BoundingBox(3, 1, 2, 2)) == 0.0


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50)
@given(st.lists(boxes, min_size=1, max_size=6), st.lists(boxes, min_size=1, max_size=6))
def test_iou_matrix_matches_scalar(xs, ys):
    m = iou_matrix(xs, ys)
    for i, a in enumerate(xs):
        for j, b in enumerate(ys):
            assert m[i, j] == pytest.approx(iou(a, b), abs=1e-12)


def test_iou_matrix_empty():
    assert iou_matrix([], [BoundingBox(0, 0, 1, 1)]).shape == (0, 1)


def test_sample_zero():
    assert sample_candidates(BoundingBox(1, 1, 1, 1), 0, (1, 1, 0.1), np.random.default_rng(0)) == []


def test_sample_zero_variance_copies():
    prev = BoundingBox(10, 20, 30, 40)
    out = sample_candidates(prev, 5, (0, 0, 0), np.random.default_rng(0))
    assert out == [prev] * 5


def test_sample_deterministic_and_first_is_prev():
    prev = BoundingBox(10, 20, 30, 40)
    a = sample_candidates(prev, 50, (25, 25, 0.01), np.random.default_rng(4))
    b = sample_candidates(prev, 50, (25, 25, 0.01), np.random.default_rng(4))
    assert a == b
    assert a[0] == prev


def test_sample_uses_covariance_diagonal():
    prev = np.array([0.0, 0.0, 10.0, 20.0])
    c = sample_candidate_array(prev, 40001, (25.0, 4.0, 0.01), np.random.default_rng(1))[1:]
    assert c[:, 0].std() == pytest.approx(5.0, rel=0.03)
    assert c[:, 1].std() == pytest.approx(2.0, rel=0.03)
    assert (c[:, 2] / 10.0).std() == pytest.approx(0.1, rel=0.03)
    np.testing.assert_allclose(c[:, 2] / 10.0, c[:, 3] / 20.0)


def test_sample_scale_clamped():
    prev = np.array([0.0, 0.0, 10.0, 10.0])
    c = sample_candidate_array(prev, 2000, (0, 0, 4.0), np.random.default_rng(2))
    assert c[:, 2].min() >= 1.0 - 1e-12


def test_sample_rejects_negative_q():
    with pytest.raises(InputError):
        sample_candidates(BoundingBox(1, 1, 1, 1), -1, (0, 0, 0), np.random.default_rng(0))


def test_aggregate_single():
    b = BoundingBox(3, 4, 5, 6)
    assert aggregate_prediction(CandidateSet.from_boxes([b], [0.2]), 0.75) == b


def test_aggregate_equal_scores_means_all():
    bs = [BoundingBox(0, 0, 2, 2), BoundingBox(2, 4, 4, 6)]
    out = aggregate_prediction(CandidateSet.from_boxes(bs, [0.5, 0.5]), 1.0)
    assert out == BoundingBox(1, 2, 3, 4)


def test_aggregate_threshold_example():
    bs = [BoundingBox(0, 0, 10, 10), BoundingBox(100, 100, 1, 1), BoundingBox(4, 8, 20, 30)]
    # threshold 0.75 * 0.9 = 0.675 keeps candidates 1 and 3
    out = aggregate_prediction(CandidateSet.from_boxes(bs, [0.9, 0.5, 0.8]), 0.75)
    assert out == BoundingBox(2, 4, 15, 20)


def test_aggregate_empty_rejected():
    with pytest.raises(InputError):
        aggregate_prediction(CandidateSet(np.zeros((0, 4)), np.zeros(0)), 0.5)


@settings(max_examples=60)
@given(st.integers(1, 20), st.floats(0, 1), st.integers(0, 2**31))
def test_aggregate_within_hull(n, alpha, seed):
    r = np.random.default_rng(seed)
    c = np.column_stack([r.uniform(-50, 50, (n, 2)), r.uniform(1, 30, (n, 2))])
    s = r.random(n)
    out = aggregate_prediction(CandidateSet(c, s), alpha).as_array()
    kept = c[s >= alpha * s.max()]
    assert np.all(out >= kept.min(axis=0) - 1e-9) and np.all(out <= kept.max(axis=0) + 1e-9)


def test_aggregate_alpha_zero_is_mean(rng):
    c = np.column_stack([rng.uniform(-5, 5, (9, 2)), rng.uniform(1, 3, (9, 2))])
    out = aggregate_prediction(CandidateSet(c, rng.random(9)), 0.0)
    np.testing.assert_allclose(out.as_array(), c.mean(axis=0))
