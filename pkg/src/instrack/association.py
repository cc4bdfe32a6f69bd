"""Joint association matrix, its Hungarian solution, and state decoding.

The joint matrix for ``m`` predictions and ``n`` observations is::

    [ Lambda  Upsilon  ]      Lambda: m x m, diagonal only  -> Lost
    [ Upsilon^T  Gamma ]      Upsilon: m x n                 -> Tracked
                              Gamma:  n x n, diagonal only   -> New

Off-diagonal cells of the two square blocks are forbidden and stored as
``-inf``.  All other entries lie in [0, 1]; the best assignment maximises the
sum of chosen entries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import InputError, InvariantError, Observation, Prediction, TrackerParams, boxes_to_array
from .geometry import iou_matrix

FORBIDDEN = -np.inf

LOST_BLOCK = "lost"
TRACKED_BLOCK = "tracked"
NEW_BLOCK = "new"


@dataclass(frozen=True)
class JointAssociationMatrix:
    m: int
    n: int
    entries: np.ndarray

    @property
    def forbidden(self) -> np.ndarray:
        return ~np.isfinite(self.entries)

    @property
    def lost_block(self) -> np.ndarray:
        return self.entries[: self.m, : self.m]

    @property
    def tracked_block(self) -> np.ndarray:
        return self.entries[: self.m, self.m:]

    @property
    def new_block(self) -> np.ndarray:
        return self.entries[self.m:, self.m:]


@dataclass(frozen=True)
class Assignment:
    """``perm[r]`` is the (0-based) column chosen for row ``r``."""

    perm: np.ndarray
    objective: float


@dataclass(frozen=True)
class StateDecision:
    """``tracked[i]`` is the matched observation of prediction ``i`` or ``None`` (Lost);
    ``matched[j]`` is the matched prediction of observation ``j`` or ``None`` (New)."""

    tracked: tuple
    matched: tuple

    @property
    def lost(self) -> list[int]:
        return [i for i, j in enumerate(self.tracked) if j is None]

    @property
    def new(self) -> list[int]:
        return [j for j, i in enumerate(self.matched) if i is None]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in enumerate(self.tracked) if j is not None]


@dataclass(frozen=True)
class BlockTerms:
    """Confidence (G) and overlap (B) terms of each block, before lambda mixing."""

    g_lost: np.ndarray
    b_lost: np.ndarray
    g_tracked: np.ndarray
    b_tracked: np.ndarray
    g_new: np.ndarray
    b_new: np.ndarray


def block_terms(preds, obs, pair_scores) -> BlockTerms:
    m, n = len(preds), len(obs)
    f = np.asarray(pair_scores, dtype=np.float64).reshape(m, n)
    self_scores = np.array([p.self_score for p in preds], dtype=np.float64)
    ov = iou_matrix(boxes_to_array([p.box for p in preds]), boxes_to_array([o.box for o in obs]))
    best_ov_pred = ov.max(axis=1) if n else np.zeros(m)
    best_ov_obs = ov.max(axis=0) if m else np.zeros(n)
    best_f_obs = f.max(axis=0) if m else np.zeros(n)
    return BlockTerms(
        g_lost=1.0 - self_scores,
        b_lost=1.0 - best_ov_pred,
        g_tracked=f,
        b_tracked=ov,
        g_new=1.0 - best_f_obs,
        b_new=1.0 - best_ov_obs,
    )


def build_joint_matrix(preds: list[Prediction], obs: list[Observation], pair_scores,
                       params: TrackerParams) -> JointAssociationMatrix:
    """Assemble the ``(m+n) x (m+n)`` joint matrix.

    ``pair_scores[i, j]`` is target ``i``'s scorer evaluated on observation ``j``.
    """
    m, n = len(preds), len(obs)
    f = np.asarray(pair_scores, dtype=np.float64)
    if f.size == 0:
        f = np.zeros((m, n))
    if f.shape != (m, n):
        raise InputError(f"pair_scores has shape {f.shape}, expected {(m, n)}")
    if np.any(~np.isfinite(f)) or np.any((f < 0.0) | (f > 1.0)):
        raise InputError("pair scores must lie in [0, 1]")
    t = block_terms(preds, obs, f)
    lam_l, lam_t, lam_n = params.lambdas
    k = m + n
    c = np.full((k, k), FORBIDDEN)
    ups = lam_t * t.g_tracked + (1.0 - lam_t) * t.b_tracked
    c[:m, m:] = ups
    c[m:, :m] = ups.T
    idx_m = np.arange(m)
    idx_n = np.arange(n)
    c[idx_m, idx_m] = lam_l * t.g_lost + (1.0 - lam_l) * t.b_lost
    c[m + idx_n, m + idx_n] = lam_n * t.g_new + (1.0 - lam_n) * t.b_new
    return JointAssociationMatrix(m, n, c)


def hungarian_min_cost(cost) -> Assignment:
    """Minimum-cost perfect matching of a square finite matrix in O(k^3)."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InputError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix must be finite")
    k = cost.shape[0]
    if k == 0:
        return Assignment(np.zeros(0, dtype=np.int64), 0.0)
    perm = kernels.lap_min_cost(cost)
    return Assignment(perm, float(cost[np.arange(k), perm].sum()))


def solve_joint(c: JointAssociationMatrix) -> Assignment:
    """Maximise the sum of chosen entries; forbidden cells are never selected.

    ``Assignment.objective`` is the maximised sum of joint-matrix entries.
    """
    e = c.entries
    k = e.shape[0]
    if k == 0:
        return Assignment(np.zeros(0, dtype=np.int64), 0.0)
    finite = np.isfinite(e)
    c_max = e[finite].max()
    c_min = e[finite].min()
    cost = np.where(finite, c_max - e, (c_max - c_min) + k + 1.0)
    perm = hungarian_min_cost(cost).perm
    rows = np.arange(k)
    if not np.all(finite[rows, perm]):
        raise InvariantError("joint assignment selected a forbidden cell")
    return Assignment(perm, float(e[rows, perm].sum()))


def decode_states(a: Assignment, m: int, n: int) -> StateDecision:
    """Translate a joint assignment into Lost / Tracked / New decisions.

    Raises :class:`InvariantError` if the chosen tracked cells are not mirrored
    by their transposed counterparts.
    """
    perm = np.asarray(a.perm)
    if perm.shape != (m + n,):
        raise InvariantError(f"assignment has {perm.shape[0]} rows, expected {m + n}")
    tracked = []
    for i in range(m):
        col = int(perm[i])
        if col == i:
            tracked.append(None)
        elif col >= m:
            tracked.append(col - m)
        else:
            raise InvariantError(f"prediction {i} assigned to forbidden column {col}")
    matched = []
    for j in range(n):
        col = int(perm[m + j])
        if col == m + j:
            matched.append(None)
        elif col < m:
            matched.append(col)
        else:
            raise InvariantError(f"observation {j} assigned to forbidden column {col}")
    for i, j in enumerate(tracked):
        if j is not None and matched[j] != i:
            raise InvariantError(f"asymmetric joint solution: prediction {i} -> observation {j}, "
                                 f"but observation {j} -> {matched[j]}")
    for j, i in enumerate(matched):
        if i is not None and tracked[i] != j:
            raise InvariantError(f"asymmetric joint solution: observation {j} -> prediction {i}, "
                                 f"but prediction {i} -> {tracked[i]}")
    return StateDecision(tuple(tracked), tuple(matched))


@dataclass(frozen=True)
class AssociationLog:
    """One pairwise term: its block, G and B values, and whether the pair was truly matched."""

    block: str
    g: float
    b: float
    label: float


def _fit_lambda(entries, initial: float) -> float:
    g = np.array([e.g for e in entries])
    b = np.array([e.b for e in entries])
    y = np.array([e.label for e in entries])
    a = g - b
    denom = float(a @ a)
    if denom == 0.0:
        return initial
    return float(np.clip(-(a @ (b - y)) / denom, 0.0, 1.0))


def calibrate_lambdas(logs, initial) -> tuple[float, float, float]:
    """Least-squares fit of each block's mixing weight against 0/1 match labels.

    ``initial`` is ``(lambda_lost, lambda_tracked, lambda_new)``; a block with no
    log entries, or whose G and B terms coincide everywhere, keeps its value.
    """
    logs = list(logs)
    if not logs:
        raise InputError("calibration needs a non-empty association log")
    out = []
    for block, lam in zip((LOST_BLOCK, TRACKED_BLOCK, NEW_BLOCK), initial):
        entries = [e for e in logs if e.block == block]
        out.append(_fit_lambda(entries, float(lam)) if entries else float(lam))
    return tuple(out)
