"""IoU, candidate sampling around a previous location, and score-weighted aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import BoundingBox, InputError, boxes_to_array

MIN_SCALE = 0.1


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    ix = min(a.cx + 0.5 * a.w, b.cx + 0.5 * b.w) - max(a.cx - 0.5 * a.w, b.cx - 0.5 * b.w)
    iy = min(a.cy + 0.5 * a.h, b.cy + 0.5 * b.h) - max(a.cy - 0.5 * a.h, b.cy - 0.5 * b.h)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return min(inter / (a.area + b.area - inter), 1.0)


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between two box collections (lists of boxes or ``(n, 4)`` arrays)."""
    a = a if isinstance(a, np.ndarray) else boxes_to_array(a)
    b = b if isinstance(b, np.ndarray) else boxes_to_array(b)
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    return kernels.iou_matrix(a, b)


def sample_candidate_array(prev: np.ndarray, q: int, sigma, rng: np.random.Generator) -> np.ndarray:
    """Array form of :func:`sample_candidates`; returns ``(q, 4)``."""
    if q < 0:
        raise InputError("q must be nonnegative")
    var = np.asarray(sigma, dtype=np.float64)
    if var.shape != (3,) or np.any(var < 0):
        raise InputError("sigma must hold three nonnegative variances")
    out = np.empty((q, 4))
    if q == 0:
        return out
    out[:] = prev
    if q > 1:
        delta = rng.standard_normal((q - 1, 3)) * np.sqrt(var)
        scale = np.maximum(1.0 + delta[:, 2], MIN_SCALE)
        out[1:, 0] += delta[:, 0]
        out[1:, 1] += delta[:, 1]
        out[1:, 2] *= scale
        out[1:, 3] *= scale
    return out


def sample_candidates(prev: BoundingBox, q: int, sigma, rng: np.random.Generator) -> list[BoundingBox]:
    """Draw ``q`` candidate boxes around ``prev``.

    ``sigma`` is the diagonal of the covariance of ``(dx, dy, scale)``, whose
    mean is ``(0, 0, 1)``.  The first candidate is ``prev`` itself; scales are
    clamped below at 0.1.
    """
    arr = sample_candidate_array(prev.as_array(), q, sigma, rng)
    return [BoundingBox.from_array(r) for r in arr]


@dataclass(frozen=True)
class CandidateSet:
    candidates: np.ndarray  # (q, 4)
    scores: np.ndarray  # (q,)

    def __post_init__(self):
        c = np.asarray(self.candidates, dtype=np.float64).reshape(-1, 4)
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if c.shape[0] != s.shape[0]:
            raise InputError("candidates and scores differ in length")
        if np.any((s < 0.0) | (s > 1.0)):
            raise InputError("candidate scores must lie in [0, 1]")
        object.__setattr__(self, "candidates", c)
        object.__setattr__(self, "scores", s)

    @classmethod
    def from_boxes(cls, boxes, scores) -> CandidateSet:
        return cls(boxes_to_array(list(boxes)), np.asarray(scores, dtype=np.float64))


def aggregate_mask(scores: np.ndarray, alpha: float) -> np.ndarray:
    return scores >= alpha * scores.max()


def aggregate_prediction(cands: CandidateSet, alpha: float) -> BoundingBox:
    """Mean of all candidates scoring at least ``alpha`` times the best score."""
    if cands.scores.size == 0:
        raise InputError("cannot aggregate an empty candidate set")
    keep = aggregate_mask(cands.scores, alpha)
    return BoundingBox.from_array(cands.candidates[keep].mean(axis=0))
