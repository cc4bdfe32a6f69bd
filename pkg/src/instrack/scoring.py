"""Feature sources, the detection pruner, and per-target online instance scorers."""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import BoundingBox, Detection, InputError, Observation, TrackerParams, boxes_to_array
from .geometry import iou_matrix


# --------------------------------------------------------------------------
# Feature sources
# --------------------------------------------------------------------------
class FrameSource(abc.ABC):
    """Provides region features for boxes in a frame.

    Implementations must be deterministic for a fixed ``(frame, box)`` and
    return vectors of one fixed dimension :attr:`dim`.
    """

    dim: int

    @abc.abstractmethod
    def dimensions(self, frame: int) -> tuple[int, int]:
        """``(width, height)`` of the frame in pixels."""

    @abc.abstractmethod
    def features(self, frame: int, boxes: np.ndarray) -> np.ndarray:
        """Features for an ``(n, 4)`` array of center boxes, shape ``(n, dim)``."""

    def feature(self, frame: int, box: BoundingBox) -> np.ndarray:
        return self.features(frame, box.as_array()[None, :])[0]


def pixel_window(box, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer pixel window ``[x0, x1) x [y0, y1)`` whose pixel centers lie in ``box``."""
    cx, cy, w, h = (float(v) for v in box)
    x0 = max(0, math.ceil(cx - 0.5 * w - 0.5))
    x1 = min(width, math.ceil(cx + 0.5 * w - 0.5))
    y0 = max(0, math.ceil(cy - 0.5 * h - 0.5))
    y1 = min(height, math.ceil(cy + 0.5 * h - 0.5))
    return x0, y0, x1, y1


def extract_histogram_features(frame: np.ndarray, box: BoundingBox) -> np.ndarray:
    """L1-normalised 8x8x8 joint RGB histogram of the pixels inside ``box``."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise InputError("frame must be an (height, width, 3) uint8 array")
    arr = box.as_array() if isinstance(box, BoundingBox) else box
    x0, y0, x1, y1 = pixel_window(arr, frame.shape[1], frame.shape[0])
    if x1 <= x0 or y1 <= y0:
        raise InputError(f"box {tuple(arr)} does not cover any pixel of the frame")
    return kernels.rgb_histogram(frame, x0, y0, x1, y1)


class HistogramSource(FrameSource):
    """RGB-histogram features over decoded frames supplied by ``loader(frame)``."""

    dim = 512

    def __init__(self, loader):
        self._loader = loader

    @property
    def frames(self) -> list[int]:
        """Frame numbers known to the loader, if it can enumerate them."""
        return list(getattr(self._loader, "frames", []))

    def image(self, frame: int) -> np.ndarray:
        return self._loader(frame)

    def dimensions(self, frame):
        img = self.image(frame)
        return img.shape[1], img.shape[0]

    def features(self, frame, boxes):
        img = self.image(frame)
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        out = np.empty((boxes.shape[0], self.dim))
        for k, b in enumerate(boxes):
            out[k] = extract_histogram_features(img, b)
        return out


class EmbeddedSource(FrameSource):
    """Wraps a source and projects its features through a trained linear embedding."""

    def __init__(self, source: FrameSource, weights: np.ndarray):
        self.source = source
        self.weights = np.asarray(weights, dtype=np.float64)
        self.dim = self.weights.shape[0]

    def dimensions(self, frame):
        return self.source.dimensions(frame)

    def features(self, frame, boxes):
        return self.source.features(frame, boxes) @ self.weights.T


# --------------------------------------------------------------------------
# Linear logistic scorers
# --------------------------------------------------------------------------
_LO = np.finfo(np.float64).tiny
_HI = np.nextafter(1.0, 0.0)


def _logistic(z):
    # clipped so finite inputs always map strictly inside (0, 1)
    return np.clip(np.exp(-np.logaddexp(0.0, -z)), _LO, _HI)


@dataclass
class InstanceScorer:
    """Logistic model for one target, with its pool of mined hard negatives."""

    weights: np.ndarray
    bias: float = 0.0
    hard_pool: np.ndarray = None
    capacity: int = 256
    positives: np.ndarray = None  # latest positive features, shared with new targets

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.hard_pool is None:
            self.hard_pool = np.zeros((0, self.weights.shape[0]))
        if self.positives is None:
            self.positives = np.zeros((0, self.weights.shape[0]))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def __call__(self, feats) -> np.ndarray | float:
        return score(self, feats)

    def copy(self) -> InstanceScorer:
        return InstanceScorer(
            self.weights.copy(), self.bias, self.hard_pool.copy(), self.capacity, self.positives.copy()
        )


def score(scorer, feat):
    """``logistic(weights . feat + bias)``; accepts one vector or an ``(n, d)`` stack."""
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape[-1] != scorer.weights.shape[0]:
        raise InputError(f"dimension mismatch: feature {feat.shape[-1]} vs scorer {scorer.weights.shape[0]}")
    out = _logistic(feat @ scorer.weights + scorer.bias)
    return float(out) if out.ndim == 0 else out


class PruningScorer(abc.ABC):
    """Rejects false detections (the f0 role)."""

    needs_features = True

    @abc.abstractmethod
    def prune_scores(self, dets: list[Detection], feats: np.ndarray | None) -> np.ndarray:
        """Scores in [0, 1], one per detection."""

    @abc.abstractmethod
    def initial_scorer(self, dim: int, capacity: int) -> InstanceScorer:
        """Starting point for a freshly created instance scorer."""


@dataclass
class LogisticPruner(PruningScorer):
    weights: np.ndarray
    bias: float = 0.0

    def prune_scores(self, dets, feats):
        if len(dets) == 0:
            return np.zeros(0)
        return score(self, feats)

    def score_features(self, feats):
        return score(self, feats)

    def initial_scorer(self, dim, capacity):
        if dim != self.weights.shape[0]:
            raise InputError(f"dimension mismatch: source {dim} vs pruner {self.weights.shape[0]}")
        return InstanceScorer(self.weights.copy(), float(self.bias), capacity=capacity)


@dataclass
class PassthroughPruner(PruningScorer):
    """Maps raw detector confidence through ``logistic((conf - center) / scale)``."""

    center: float = 0.0
    scale: float = 1.0
    needs_features = False

    def prune_scores(self, dets, feats=None):
        conf = np.array([d.confidence for d in dets], dtype=np.float64)
        return _logistic((conf - self.center) / self.scale)

    def initial_scorer(self, dim, capacity):
        return InstanceScorer(np.zeros(dim), 0.0, capacity=capacity)


def prune_detections(dets, pruner: PruningScorer, source: FrameSource, accept_threshold: float) -> list[Observation]:
    """Keep detections whose pruning score reaches ``accept_threshold``, in input order."""
    dets = list(dets)
    if not dets:
        return []
    frames = {d.frame for d in dets}
    if len(frames) != 1:
        raise InputError("prune_detections expects detections from a single frame")
    feats = None
    if pruner.needs_features:
        feats = source.features(dets[0].frame, boxes_to_array([d.box for d in dets]))
    scores = pruner.prune_scores(dets, feats)
    return [Observation(d.box, float(s)) for d, s in zip(dets, scores) if s >= accept_threshold]


# --------------------------------------------------------------------------
# Sample harvesting
# --------------------------------------------------------------------------
@dataclass
class SampleSet:
    positives: np.ndarray  # (n_pos, d)
    negatives: np.ndarray  # (n_neg, d)
    pos_boxes: np.ndarray = field(default=None, repr=False)
    neg_boxes: np.ndarray = field(default=None, repr=False)


_ATTEMPT_FACTOR = 100


def _rejection_sample(propose, accept, quota: int, what: str) -> np.ndarray:
    """Draw proposals in chunks until ``quota`` accepted; at most 100*quota proposals."""
    if quota == 0:
        return np.zeros((0, 4))
    budget = _ATTEMPT_FACTOR * quota
    chunk = max(quota, 64)
    kept = []
    n_kept = 0
    drawn = 0
    while n_kept < quota and drawn < budget:
        k = min(chunk, budget - drawn)
        boxes = propose(k)
        drawn += k
        ok = boxes[accept(boxes)]
        kept.append(ok)
        n_kept += ok.shape[0]
    if n_kept < quota:
        raise InputError(f"could not harvest {quota} {what} samples within {budget} attempts")
    return np.vstack(kept)[:quota]


def _jitter_boxes(center_box: np.ndarray, k: int, spread: float, log_scale: float, rng) -> np.ndarray:
    cx, cy, w, h = center_box
    out = np.empty((k, 4))
    out[:, 0] = cx + rng.normal(0.0, spread * w, k)
    out[:, 1] = cy + rng.normal(0.0, spread * h, k)
    s = np.exp(rng.normal(0.0, log_scale, k))
    out[:, 2] = w * s
    out[:, 3] = h * s
    return out


def _uniform_boxes(ref_w, ref_h, k, width, height, rng) -> np.ndarray:
    out = np.empty((k, 4))
    out[:, 0] = rng.uniform(0.0, width, k)
    out[:, 1] = rng.uniform(0.0, height, k)
    s = np.exp(rng.normal(0.0, 0.2, k))
    out[:, 2] = ref_w * s
    out[:, 3] = ref_h * s
    return out


def _inside(boxes, width, height):
    return (boxes[:, 0] >= 0) & (boxes[:, 0] < width) & (boxes[:, 1] >= 0) & (boxes[:, 1] < height)


def harvest_boxes(target_box: BoundingBox, width: int, height: int, params: TrackerParams, rng,
                  n_pos: int | None = None, n_neg: int | None = None):
    """Positive boxes (IoU > theta_pos) and negative boxes (IoU < theta_neg) around a target."""
    n_pos = params.n_pos if n_pos is None else n_pos
    n_neg = params.n_neg if n_neg is None else n_neg
    t = target_box.as_array()
    if not (t[0] + 0.5 * t[2] > 0 and t[0] - 0.5 * t[2] < width
            and t[1] + 0.5 * t[3] > 0 and t[1] - 0.5 * t[3] < height):
        raise InputError("target box lies outside the frame")

    def overlap(boxes):
        return iou_matrix(boxes, t[None, :])[:, 0]

    def propose_pos(k):
        return _jitter_boxes(t, k, 0.1, 0.08, rng)

    def propose_neg(k):
        near = k // 2
        return np.vstack([
            _jitter_boxes(t, near, 1.0, 0.2, rng),
            _uniform_boxes(t[2], t[3], k - near, width, height, rng),
        ])

    pos = _rejection_sample(
        propose_pos, lambda b: (overlap(b) > params.theta_pos) & _inside(b, width, height), n_pos, "positive"
    )
    neg = _rejection_sample(
        propose_neg, lambda b: (overlap(b) < params.theta_neg) & _inside(b, width, height), n_neg, "negative"
    )
    return pos, neg


def harvest_samples(target_box: BoundingBox, frame: int, source: FrameSource, params: TrackerParams, rng) -> SampleSet:
    """Exactly ``n_pos`` positive and ``n_neg`` negative samples around ``target_box``."""
    width, height = source.dimensions(frame)
    pos, neg = harvest_boxes(target_box, width, height, params, rng)
    feats = source.features(frame, np.vstack([pos, neg]))
    return SampleSet(feats[: len(pos)], feats[len(pos):], pos, neg)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------
def _fit(weights, bias, pos, neg, lr, passes, params: TrackerParams, rng):
    """Class-balanced mini-batch SGD on log loss; returns new (weights, bias)."""
    X = np.ascontiguousarray(np.vstack([pos, neg]), dtype=np.float64)
    n = X.shape[0]
    if passes == 0 or n == 0:
        return np.array(weights, dtype=np.float64), float(bias)
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    sw = np.empty(n)
    sw[: len(pos)] = n / (2.0 * max(len(pos), 1)) if len(neg) else 1.0
    sw[len(pos):] = n / (2.0 * max(len(neg), 1)) if len(pos) else 1.0
    perms = np.stack([rng.permutation(n) for _ in range(passes)]).astype(np.int64)
    w, b = kernels.logistic_sgd(
        np.array(weights, dtype=np.float64), float(bias), X, y, sw, perms, float(lr), int(params.batch_size), float(params.l2)
    )
    return np.asarray(w), float(b)


def _top_k(feats: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    if feats.shape[0] <= k:
        order = np.argsort(-scores, kind="stable")
    else:
        order = np.argsort(-scores, kind="stable")[:k]
    return feats[order]


def create_instance_scorer(samples: SampleSet, other_target_positives, init: PruningScorer,
                           params: TrackerParams, rng) -> InstanceScorer:
    """Train a new target's scorer, starting from the pruner.

    Negatives are the harvested background samples plus the positives of every
    other target.  The hardest negatives seed the scorer's mining pool.
    """
    pos = np.asarray(samples.positives, dtype=np.float64)
    if pos.shape[0] == 0:
        raise InputError("instance scorer needs positive samples")
    scorer = init.initial_scorer(pos.shape[1], params.n_neg)
    others = [np.asarray(getattr(o, "positives", o), dtype=np.float64) for o in other_target_positives]
    neg = np.vstack([np.asarray(samples.negatives, dtype=np.float64).reshape(-1, pos.shape[1])] + others)
    if neg.shape[1] != scorer.dim:
        raise InputError("dimension mismatch between samples and pruner")
    w, b = _fit(scorer.weights, scorer.bias, pos, neg, params.instance_lr, params.instance_passes, params, rng)
    scorer.weights, scorer.bias = w, b
    if params.instance_passes > 0 and neg.shape[0]:
        scorer.hard_pool = _top_k(neg, score(scorer, neg), scorer.capacity)
    scorer.positives = pos
    return scorer


def update_scorer(scorer: InstanceScorer, samples: SampleSet, params: TrackerParams, rng) -> InstanceScorer:
    """Hard-negative mining step followed by SGD on positives vs. the mined pool."""
    pos = np.asarray(samples.positives, dtype=np.float64).reshape(-1, scorer.dim)
    neg = np.asarray(samples.negatives, dtype=np.float64).reshape(-1, scorer.dim)
    if pos.shape[0] == 0 and neg.shape[0] == 0:
        raise InputError("update needs samples")
    new = scorer.copy()
    candidates = np.vstack([new.hard_pool, _top_k(neg, score(new, neg), new.capacity)]) if neg.size else new.hard_pool
    if candidates.shape[0]:
        new.hard_pool = _top_k(candidates, score(new, candidates), new.capacity)
    new.weights, new.bias = _fit(new.weights, new.bias, pos, new.hard_pool, params.instance_lr,
                                 params.update_passes, params, rng)
    if pos.shape[0]:
        new.positives = pos
    return new


def _sample_pruner_set(labeled, source, params, rng, pos_per_box, neg_per_frame):
    pos_boxes, neg_boxes = [], []
    frames_pos, frames_neg = [], []
    sizes = np.array([[b.w, b.h] for boxes in labeled.values() for b in boxes])
    for frame in sorted(labeled):
        boxes = labeled[frame]
        width, height = source.dimensions(frame)
        gt = boxes_to_array(boxes)
        for b in boxes:
            p, _ = harvest_boxes(b, width, height, params, rng, n_pos=pos_per_box, n_neg=0)
            pos_boxes.append(np.vstack([b.as_array()[None, :], p]))
            frames_pos.append(frame)
        ref = sizes[rng.integers(len(sizes), size=neg_per_frame)]
        cand = np.empty((0, 4))
        for _ in range(_ATTEMPT_FACTOR):
            prop = _uniform_boxes(1.0, 1.0, 4 * neg_per_frame, width, height, rng)
            prop[:, 2:] *= np.resize(ref, (4 * neg_per_frame, 2))
            if len(gt):
                prop = prop[iou_matrix(prop, gt).max(axis=1) < params.theta_neg]
            cand = np.vstack([cand, prop])
            if cand.shape[0] >= neg_per_frame:
                break
        neg_boxes.append(cand[:neg_per_frame])
        frames_neg.append(frame)
    pos = np.vstack([source.features(f, b) for f, b in zip(frames_pos, pos_boxes)])
    neg = np.vstack([source.features(f, b) for f, b in zip(frames_neg, neg_boxes) if len(b)])
    return pos, neg


def train_pruner(labeled, source: FrameSource, params: TrackerParams, rng,
                 pos_per_box: int = 4, neg_per_frame: int = 8) -> LogisticPruner:
    """Offline training of the detection pruner from ground-truth boxes.

    ``labeled`` maps frame -> list of person boxes.  Round 0 fits positives vs.
    random background; each further round scores a fresh, four times larger
    background pool, appends its false positives and refits.
    """
    labeled = {f: list(b) for f, b in labeled.items()}
    if not any(labeled.values()):
        raise InputError("pruner training needs at least one ground-truth box")
    pos, neg = _sample_pruner_set(labeled, source, params, rng, pos_per_box, neg_per_frame)
    w, b = _fit(np.zeros(source.dim), 0.0, pos, neg, params.pruner_lr, params.pruner_passes, params, rng)
    pruner = LogisticPruner(w, b)
    for _ in range(params.pruner_rounds):
        _, pool = _sample_pruner_set(labeled, source, params, rng, 0, 4 * neg_per_frame)
        hard = pool[pruner.score_features(pool) >= 0.5]
        neg = np.vstack([neg, hard])
        w, b = _fit(np.zeros(source.dim), 0.0, pos, neg, params.pruner_lr, params.pruner_passes, params, rng)
        pruner = LogisticPruner(w, b)
    return pruner
