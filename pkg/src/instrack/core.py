"""Value types and tracker configuration."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

import numpy as np


class InputError(ValueError):
    """Bad user input: malformed file, invalid parameter, precondition violation."""


class InvariantError(RuntimeError):
    """An internal invariant was violated. Indicates a bug, never bad input."""


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box in pixels, parameterised by center and size."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InputError(f"box size must be positive, got w={self.w}, h={self.h}")
        if not all(math.isfinite(v) for v in (self.cx, self.cy, self.w, self.h)):
            raise InputError("box coordinates must be finite")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def left(self) -> float:
        return self.cx - 0.5 * self.w

    @property
    def top(self) -> float:
        return self.cy - 0.5 * self.h

    @classmethod
    def from_ltwh(cls, left: float, top: float, w: float, h: float) -> BoundingBox:
        return cls(left + 0.5 * w, top + 0.5 * h, w, h)

    def to_ltwh(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.w, self.h)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> BoundingBox:
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float array (``n`` may be 0)."""
    if not boxes:
        return np.zeros((0, 4))
    return np.array([[b.cx, b.cy, b.w, b.h] for b in boxes], dtype=np.float64)


@dataclass(frozen=True, slots=True)
class Detection:
    frame: int
    box: BoundingBox
    confidence: float = 1.0

    def __post_init__(self):
        if self.frame < 1:
            raise InputError(f"frame index must be >= 1, got {self.frame}")


@dataclass(frozen=True, slots=True)
class Observation:
    """A detection that survived pruning."""

    box: BoundingBox
    prune_score: float


@dataclass(frozen=True, slots=True)
class Prediction:
    track_id: int
    box: BoundingBox
    self_score: float

    def __post_init__(self):
        if not 0.0 <= self.self_score <= 1.0:
            raise InputError(f"self_score must lie in [0, 1], got {self.self_score}")


class TargetState(enum.Enum):
    NEW = "New"
    TRACKED = "Tracked"
    LOST = "Lost"
    DISCARDED = "Discarded"


_UNIT_FIELDS = (
    "lambda_lost",
    "lambda_tracked",
    "lambda_new",
    "alpha",
    "update_threshold",
    "theta_pos",
    "theta_neg",
    "accept_threshold",
)


@dataclass(frozen=True)
class TrackerParams:
    """All tunables of the tracker.

    The first block carries the published settings.  ``candidate_count`` is not
    published; the remaining fields configure the desk-scale scorers.
    ``sigma_s`` is the diagonal of the candidate-sampling covariance, i.e.
    variances of (dx [px^2], dy [px^2], scale factor).
    """

    lambda_lost: float = 0.2
    lambda_tracked: float = 0.85
    lambda_new: float = 0.4
    sigma_s: tuple[float, float, float] = (25.0, 25.0, 0.01)
    alpha: float = 0.75
    candidate_count: int = 256
    update_threshold: float = 0.5
    lost_patience: int = 10
    mu: float = 0.7
    n_pos: int = 500
    n_neg: int = 256
    theta_pos: float = 0.5
    theta_neg: float = 0.3
    accept_threshold: float = 0.5
    # scorer training
    pruner_lr: float = 0.05
    instance_lr: float = 0.1
    instance_passes: int = 50
    update_passes: int = 50
    batch_size: int = 32
    l2: float = 1e-4
    pruner_passes: int = 50
    pruner_rounds: int = 1

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigma_s)
        object.__setattr__(self, "sigma_s", sig)
        if len(sig) != 3 or any(s < 0 or not math.isfinite(s) for s in sig):
            raise InputError("sigma_s must be three finite nonnegative values")
        for name in _UNIT_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {v}")
        if not self.theta_neg < self.theta_pos:
            raise InputError(
                f"theta_neg ({self.theta_neg}) must be smaller than theta_pos ({self.theta_pos})"
            )
        for name in ("candidate_count", "lost_patience", "n_pos", "n_neg", "batch_size"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be a positive integer")
        for name in ("instance_passes", "update_passes", "pruner_passes", "pruner_rounds"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be nonnegative")
        if self.mu < 0:
            raise InputError("mu must be nonnegative")
        if self.pruner_lr <= 0 or self.instance_lr <= 0:
            raise InputError("learning rates must be positive")
        if self.l2 < 0:
            raise InputError("l2 must be nonnegative")

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(getattr(cls(), f.name)) for f in fields(cls)}

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda_lost, self.lambda_tracked, self.lambda_new)
