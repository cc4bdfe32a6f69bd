"""Deterministic synthetic scenes: moving targets, noisy detections, and a feature oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import BoundingBox, Detection, InputError
from .geometry import iou_matrix
from .scoring import FrameSource

ORACLE_IOU_FLOOR = 0.3
_QUANT = 16.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Scene description.

    ``occlusions`` holds ``(target_id, start_frame, duration)`` triples with
    1-based target ids.  ``starts``/``velocities`` optionally pin each
    target's initial center and velocity; otherwise both are drawn from the
    seed.  ``feature_dim=0`` picks ``max(16, num_targets + 2)``.
    """

    num_targets: int = 5
    frames: int = 100
    arena: tuple[float, float] = (800.0, 600.0)
    box_size: tuple[float, float] = (40.0, 80.0)
    speed: float = 2.0
    motion_jitter: float = 0.0
    appearance_separation: float = 1.0
    feature_noise: float = 0.1
    person_contrast: float = 1.0
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    det_noise: float = 0.0
    occlusions: tuple = ()
    starts: tuple = ()
    velocities: tuple = ()
    feature_dim: int = 0

    def __post_init__(self):
        if self.num_targets <= 0 or self.frames <= 0:
            raise InputError("num_targets and frames must be positive")
        aw, ah = self.arena
        bw, bh = self.box_size
        if bw <= 0 or bh <= 0:
            raise InputError("box_size must be positive")
        if bw >= aw or bh >= ah:
            raise InputError(f"box {self.box_size} does not fit the arena {self.arena}")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise InputError("miss_rate must lie in [0, 1]")
        for name in ("fp_rate", "det_noise", "feature_noise", "appearance_separation",
                     "motion_jitter", "speed", "person_contrast"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be nonnegative")
        if self.starts and len(self.starts) != self.num_targets:
            raise InputError("starts must list one position per target")
        if self.velocities and len(self.velocities) != self.num_targets:
            raise InputError("velocities must list one velocity per target")
        for occ in self.occlusions:
            if len(occ) != 3 or not 1 <= occ[0] <= self.num_targets or occ[2] < 0:
                raise InputError(f"bad occlusion entry {occ}")
        if self.feature_dim and self.feature_dim < self.num_targets + 1:
            raise InputError("feature_dim must exceed num_targets")

    @property
    def dim(self) -> int:
        return self.feature_dim or max(16, self.num_targets + 2)


class SyntheticSource(FrameSource):
    """Feature oracle.

    A query box takes the signature of the visible ground-truth target it
    overlaps most (if IoU > 0.3), otherwise the background signature (zero),
    plus per-component Gaussian noise keyed on ``(frame, box)``.
    """

    def __init__(self, signatures: np.ndarray, noise: float, seed: int, arena,
                 gt_boxes: dict[int, np.ndarray], visible: dict[int, np.ndarray]):
        self.signatures = np.asarray(signatures, dtype=np.float64)
        self.dim = self.signatures.shape[1]
        self.noise = float(noise)
        self.seed = int(seed)
        self.arena = (int(round(arena[0])), int(round(arena[1])))
        self._gt = gt_boxes
        self._visible = visible

    def dimensions(self, frame):
        return self.arena

    def features(self, frame, boxes):
        boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
        out = np.zeros((boxes.shape[0], self.dim))
        gt = self._gt.get(frame)
        if gt is not None and boxes.shape[0]:
            vis = self._visible[frame]
            ov = iou_matrix(boxes, gt)
            ov[:, ~vis] = 0.0
            best = ov.argmax(axis=1)
            hit = ov[np.arange(boxes.shape[0]), best] > ORACLE_IOU_FLOOR
            out[hit] = self.signatures[best[hit]]
        if self.noise > 0 and boxes.shape[0]:
            keys = np.empty((boxes.shape[0], 5), dtype=np.int64)
            keys[:, 0] = frame
            keys[:, 1:] = np.rint(boxes * _QUANT).astype(np.int64)
            out += self.noise * kernels.hashed_normals(np.uint64(self.seed), keys, self.dim)
        return out

    def oracle_params(self) -> dict:
        return {
            "seed": self.seed,
            "noise": self.noise,
            "iou_floor": ORACLE_IOU_FLOOR,
            "quantization": _QUANT,
            "arena": list(self.arena),
            "background": [0.0] * self.dim,
            "signatures": self.signatures.tolist(),
        }


@dataclass
class SyntheticWorld:
    spec: ScenarioSpec
    seed: int
    gt: dict[int, list[tuple[int, BoundingBox]]]
    detections: dict[int, list[Detection]]
    source: SyntheticSource
    occluded: dict[int, set] = field(default_factory=dict)


def _signatures(spec: ScenarioSpec, rng) -> np.ndarray:
    d = spec.dim
    q, _ = np.linalg.qr(rng.standard_normal((d - 1, d - 1)))
    sig = np.zeros((spec.num_targets, d))
    sig[:, 0] = spec.person_contrast
    sig[:, 1:] = q[: spec.num_targets] * (spec.appearance_separation / np.sqrt(2.0))
    return sig


def _reflect(pos, vel, lo, hi):
    for _ in range(4):
        below = pos < lo
        above = pos > hi
        if not (below.any() or above.any()):
            break
        pos = np.where(below, 2 * lo - pos, pos)
        pos = np.where(above, 2 * hi - pos, pos)
        vel = np.where(below | above, -vel, vel)
    return np.clip(pos, lo, hi), vel


def generate(spec: ScenarioSpec, seed: int) -> SyntheticWorld:
    """Build a world fully determined by ``(spec, seed)``."""
    rng = np.random.default_rng(seed)
    aw, ah = spec.arena
    bw, bh = spec.box_size
    lo = np.array([bw / 2, bh / 2])
    hi = np.array([aw - bw / 2, ah - bh / 2])
    k = spec.num_targets

    if spec.starts:
        pos = np.array(spec.starts, dtype=np.float64).reshape(k, 2)
    else:
        pos = rng.uniform(lo, hi, size=(k, 2))
    if spec.velocities:
        vel = np.array(spec.velocities, dtype=np.float64).reshape(k, 2)
    else:
        ang = rng.uniform(0, 2 * np.pi, k)
        vel = spec.speed * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    sig = _signatures(spec, rng)

    occluded = {}
    for tid, start, dur in spec.occlusions:
        for f in range(start, start + dur):
            occluded.setdefault(f, set()).add(tid)

    gt, dets, gt_arr, visible = {}, {}, {}, {}
    for frame in range(1, spec.frames + 1):
        if frame > 1:
            step = vel + rng.normal(0.0, spec.motion_jitter, size=vel.shape) if spec.motion_jitter else vel
            pos, vel = _reflect(pos + step, vel, lo, hi)
        boxes = np.column_stack([pos, np.full(k, bw), np.full(k, bh)])
        gt_arr[frame] = boxes
        hidden = occluded.get(frame, set())
        visible[frame] = np.array([(t + 1) not in hidden for t in range(k)])
        gt[frame] = [(t + 1, BoundingBox.from_array(boxes[t])) for t in range(k)]
        frame_dets = []
        miss = rng.random(k) < spec.miss_rate
        noise = rng.normal(0.0, spec.det_noise, size=(k, 4)) if spec.det_noise else np.zeros((k, 4))
        conf = 1.0 + 0.1 * rng.standard_normal(k)
        for t in range(k):
            if miss[t] or not visible[frame][t]:
                continue
            b = boxes[t] + noise[t]
            b[2:] = np.maximum(b[2:], 1.0)
            frame_dets.append(Detection(frame, BoundingBox.from_array(b), float(conf[t])))
        n_fp = rng.poisson(spec.fp_rate) if spec.fp_rate else 0
        for _ in range(n_fp):
            s = np.exp(rng.normal(0.0, 0.2))
            c = rng.uniform(lo, hi)
            frame_dets.append(Detection(frame, BoundingBox(c[0], c[1], bw * s, bh * s),
                                        float(0.3 + 0.1 * rng.standard_normal())))
        dets[frame] = frame_dets

    source = SyntheticSource(sig, spec.feature_noise, seed, spec.arena, gt_arr, visible)
    return SyntheticWorld(spec, seed, gt, dets, source, occluded)
