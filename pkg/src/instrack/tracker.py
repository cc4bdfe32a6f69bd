"""Online tracking loop: predict, prune, associate, transition, learn."""
from __future__ import annotations

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .association import (
    LOST_BLOCK,
    NEW_BLOCK,
    TRACKED_BLOCK,
    AssociationLog,
    BlockTerms,
    block_terms,
    build_joint_matrix,
    calibrate_lambdas,
    decode_states,
    solve_joint,
)
from .core import (
    BoundingBox,
    Detection,
    InputError,
    InvariantError,
    Prediction,
    TargetState,
    TrackerParams,
    boxes_to_array,
)
from .geometry import aggregate_mask, iou_matrix, sample_candidate_array
from .scoring import (
    FrameSource,
    InstanceScorer,
    PruningScorer,
    create_instance_scorer,
    harvest_samples,
    prune_detections,
    score,
    update_scorer,
)

log = logging.getLogger(__name__)


@dataclass
class Track:
    id: int
    state: TargetState
    box: BoundingBox
    scorer: InstanceScorer
    lost_streak: int = 0
    trajectory: dict[int, BoundingBox] = field(default_factory=dict)


@dataclass(frozen=True)
class TrackRecord:
    track_id: int
    box: BoundingBox
    state: TargetState


@dataclass(frozen=True)
class TrackerOutput:
    frame: int
    records: tuple[TrackRecord, ...]

    def tracked(self) -> list[TrackRecord]:
        return [r for r in self.records if r.state is TargetState.TRACKED]


def transition(state: TargetState, matched: bool, lost_streak: int, patience: int) -> tuple[TargetState, int]:
    """One step of the lifecycle graph; returns the new state and lost streak.

    New -> Tracked; Tracked/Lost -> Tracked when matched; Tracked -> Lost and
    Lost -> Lost when unmatched, until the streak reaches ``patience``, at
    which point the target is Discarded.
    """
    if state is TargetState.NEW:
        return TargetState.TRACKED, 0
    if state not in (TargetState.TRACKED, TargetState.LOST):
        raise InvariantError(f"no transition leaves state {state.value}")
    if matched:
        return TargetState.TRACKED, 0
    streak = lost_streak + 1
    if streak >= patience:
        return TargetState.DISCARDED, patience
    return TargetState.LOST, streak


@dataclass(frozen=True)
class FrameAssociation:
    """Inputs of one frame's joint inference, kept for offline lambda calibration."""

    frame: int
    track_ids: tuple[int, ...]
    pred_boxes: np.ndarray
    obs_boxes: np.ndarray
    terms: BlockTerms


class TrackerEngine:
    """Owns all tracks of one sequence; call :meth:`step` once per frame, in order."""

    def __init__(self, params: TrackerParams, pruner: PruningScorer, source: FrameSource,
                 seed: int = 0, record_associations: bool = False):
        self.params = params
        self.pruner = pruner
        self.source = source
        self.rng = np.random.default_rng(seed)
        self.tracks: dict[int, Track] = {}
        self.next_id = 1
        self.last_frame: int | None = None
        self.timings: dict[str, float] = defaultdict(float)
        self.transitions: list[tuple[int, TargetState, TargetState]] = []
        self.associations: list[FrameAssociation] | None = [] if record_associations else None

    # -- stages ------------------------------------------------------------
    def _predict(self, frame: int, track: Track) -> Prediction:
        p = self.params
        cands = sample_candidate_array(track.box.as_array(), p.candidate_count, p.sigma_s, self.rng)
        s = score(track.scorer, self.source.features(frame, cands))
        box = BoundingBox.from_array(cands[aggregate_mask(s, p.alpha)].mean(axis=0))
        self_score = float(score(track.scorer, self.source.feature(frame, box)))
        return Prediction(track.id, box, self_score)

    def _spawn(self, frame: int, boxes: list[BoundingBox]) -> list[Track]:
        if not boxes:
            return []
        samples = [harvest_samples(b, frame, self.source, self.params, self.rng) for b in boxes]
        existing = [t.scorer.positives for t in self.tracks.values() if t.scorer.positives.size]
        born = []
        for k, (box, smp) in enumerate(zip(boxes, samples)):
            others = existing + [s.positives for q, s in enumerate(samples) if q != k]
            scorer = create_instance_scorer(smp, others, self.pruner, self.params, self.rng)
            track = Track(self.next_id, TargetState.NEW, box, scorer)
            self.next_id += 1
            self._set_state(track, *transition(track.state, True, 0, self.params.lost_patience))
            track.trajectory[frame] = box
            born.append(track)
        return born

    def _set_state(self, track: Track, state: TargetState, streak: int):
        self.transitions.append((track.id, track.state, state))
        track.state = state
        track.lost_streak = streak

    # -- main entry ----------------------------------------------------------
    def step(self, frame: int, dets: list[Detection]) -> TrackerOutput:
        if self.last_frame is not None and frame <= self.last_frame:
            raise InputError(f"frame {frame} does not follow frame {self.last_frame}")
        self.last_frame = frame
        p = self.params
        dets = [d for d in dets if d.frame == frame] if dets else []

        t0 = time.perf_counter()
        obs = prune_detections(dets, self.pruner, self.source, p.accept_threshold)
        t1 = time.perf_counter()
        live = sorted(self.tracks.values(), key=lambda t: t.id)
        preds = [self._predict(frame, t) for t in live]
        obs_boxes = boxes_to_array([o.box for o in obs])
        obs_feats = self.source.features(frame, obs_boxes) if obs else None
        pair = np.zeros((len(live), len(obs)))
        for i, t in enumerate(live):
            if obs:
                pair[i] = score(t.scorer, obs_feats)
        t2 = time.perf_counter()
        joint = build_joint_matrix(preds, obs, pair, p)
        decision = decode_states(solve_joint(joint), len(preds), len(obs))
        t3 = time.perf_counter()
        if self.associations is not None:
            self.associations.append(FrameAssociation(
                frame, tuple(t.id for t in live), boxes_to_array([q.box for q in preds]), obs_boxes,
                block_terms(preds, obs, pair)))

        refresh = []
        for i, track in enumerate(live):
            j = decision.tracked[i]
            self._set_state(track, *transition(track.state, j is not None, track.lost_streak, p.lost_patience))
            if track.state is TargetState.TRACKED:
                track.box = obs[j].box
                track.trajectory[frame] = track.box
                if preds[i].self_score < p.update_threshold:
                    refresh.append(track)
            elif track.state is TargetState.LOST:
                track.box = preds[i].box
            else:
                del self.tracks[track.id]
        t4 = time.perf_counter()
        for track in self._spawn(frame, [obs[j].box for j in decision.new]):
            self.tracks[track.id] = track
        t5 = time.perf_counter()
        for track in refresh:
            smp = harvest_samples(track.box, frame, self.source, p, self.rng)
            track.scorer = update_scorer(track.scorer, smp, p, self.rng)
        t6 = time.perf_counter()

        self.timings["prune"] += t1 - t0
        self.timings["predict"] += t2 - t1
        self.timings["associate"] += t3 - t2
        self.timings["transition"] += t4 - t3
        self.timings["spawn"] += t5 - t4
        self.timings["update"] += t6 - t5
        return self.output(frame)

    def output(self, frame: int) -> TrackerOutput:
        recs = tuple(TrackRecord(t.id, t.box, t.state) for t in sorted(self.tracks.values(), key=lambda t: t.id))
        return TrackerOutput(frame, recs)


def run_sequence(engine: TrackerEngine, detections: dict[int, list[Detection]], frames=None) -> list[TrackerOutput]:
    """Step ``engine`` over ``frames`` (default: every frame holding detections, ascending)."""
    frames = sorted(detections) if frames is None else frames
    return [engine.step(f, detections.get(f, [])) for f in frames]


# --------------------------------------------------------------------------
# Offline lambda calibration against ground truth
# --------------------------------------------------------------------------
def _gt_identity(boxes: np.ndarray, gt_ids: list[int], gt_boxes: np.ndarray, thr: float = 0.5):
    if boxes.shape[0] == 0 or gt_boxes.shape[0] == 0:
        return [None] * boxes.shape[0]
    ov = iou_matrix(boxes, gt_boxes)
    best = ov.argmax(axis=1)
    return [gt_ids[k] if ov[r, k] >= thr else None for r, k in enumerate(best)]


def label_associations(engine: TrackerEngine, outputs: list[TrackerOutput], gt) -> list[AssociationLog]:
    """Turn recorded association terms into labelled samples using ground truth.

    A track's identity at a frame is the majority ground-truth id of its
    trajectory up to the previous frame.
    """
    if engine.associations is None:
        raise InputError("engine was not recording associations")
    votes: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    by_frame = {o.frame: o for o in outputs}
    logs = []
    for fa in engine.associations:
        entries = gt.get(fa.frame, [])
        gt_ids = [e[0] for e in entries]
        gt_boxes = boxes_to_array([e[1] for e in entries])
        obs_id = _gt_identity(fa.obs_boxes, gt_ids, gt_boxes)
        trk_id = [max(votes[t].items(), key=lambda kv: (kv[1], -kv[0]))[0] if votes[t] else None
                  for t in fa.track_ids]
        present = set(x for x in obs_id if x is not None)
        carried = set(x for x in trk_id if x is not None)
        t = fa.terms
        for i, tid in enumerate(trk_id):
            logs.append(AssociationLog(LOST_BLOCK, float(t.g_lost[i]), float(t.b_lost[i]),
                                       float(tid is not None and tid not in present)))
            for j, oid in enumerate(obs_id):
                logs.append(AssociationLog(TRACKED_BLOCK, float(t.g_tracked[i, j]), float(t.b_tracked[i, j]),
                                           float(tid is not None and tid == oid)))
        for j, oid in enumerate(obs_id):
            logs.append(AssociationLog(NEW_BLOCK, float(t.g_new[j]), float(t.b_new[j]),
                                       float(oid is not None and oid not in carried)))
        out = by_frame.get(fa.frame)
        if out is not None:
            recs = out.tracked()
            ids = _gt_identity(boxes_to_array([r.box for r in recs]), gt_ids, gt_boxes)
            for r, gid in zip(recs, ids):
                if gid is not None:
                    votes[r.track_id][gid] += 1
    return logs


def balance_learn(make_engine, detections, gt, initial: TrackerParams, rounds: int = 3) -> TrackerParams:
    """Alternate tracking runs and least-squares lambda refits.

    ``make_engine(params)`` must return a fresh engine recording associations.
    """
    params = initial
    for _ in range(rounds):
        engine = make_engine(params)
        outputs = run_sequence(engine, detections, sorted(set(detections) | set(gt)))
        lam = calibrate_lambdas(label_associations(engine, outputs, gt), params.lambdas)
        params = replace(params, lambda_lost=lam[0], lambda_tracked=lam[1], lambda_new=lam[2])
    return params
