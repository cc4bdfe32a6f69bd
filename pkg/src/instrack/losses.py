"""Classification + triplet-like metric loss, its exact gradients, and a linear embedding trainer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import InputError

LN2 = math.log(2.0)


def phi(x):
    """``log2(1 + 2**-x)``, evaluated without overflow. Works on scalars and arrays."""
    out = np.logaddexp2(0.0, -np.asarray(x, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def psi(x):
    """``1 / (1 + 2**x)``; note ``phi'(x) == -psi(x)``."""
    z = np.asarray(x, dtype=np.float64) * LN2
    out = np.exp(-np.logaddexp(0.0, z))
    return float(out) if out.ndim == 0 else out


def _vec(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise InputError("feature vectors must be one-dimensional")
    return a


def sq_distance(a, b) -> float:
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    diff = a - b
    return float(diff @ diff)


@dataclass(frozen=True)
class TripletBatch:
    """One anchor, one positive of the same identity, and a set of negatives."""

    anchor: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray  # (k, d)

    def __post_init__(self):
        a, p = _vec(self.anchor), _vec(self.positive)
        n = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        if n.shape[0] == 0 or n.size == 0:
            raise InputError("a triplet batch needs at least one negative")
        if p.shape != a.shape or n.shape[1] != a.shape[0]:
            raise InputError("anchor, positive and negatives must share one dimension")
        object.__setattr__(self, "anchor", a)
        object.__setattr__(self, "positive", p)
        object.__setattr__(self, "negatives", n)


def _margins(t: TripletBatch) -> np.ndarray:
    dpos = sq_distance(t.anchor, t.positive)
    dneg = ((t.negatives - t.anchor) ** 2).sum(axis=1)
    return dneg - dpos


def triplet_loss(t: TripletBatch) -> float:
    return float(np.sum(phi(_margins(t))))


def triplet_gradients(t: TripletBatch):
    """Exact partial derivatives of :func:`triplet_loss`.

    Returns ``(grad_anchor, grad_positive, grad_negatives)`` where
    ``grad_negatives[c]`` is the derivative w.r.t. the c-th negative alone.
    """
    w = psi(_margins(t))[:, None]
    a, p, n = t.anchor, t.positive, t.negatives
    grad_anchor = 2.0 * (w * (n - p)).sum(axis=0)
    grad_positive = 2.0 * w.sum() * (p - a)
    grad_negatives = 2.0 * w * (a - n)
    return grad_anchor, grad_positive, grad_negatives


def log_loss(p, u: int) -> float:
    """Natural-log cross entropy ``-ln p[u]`` for a two-class probability pair."""
    p0, p1 = (float(v) for v in p)
    if abs(p0 + p1 - 1.0) > 1e-9:
        raise InputError(f"probabilities must sum to 1, got {p0 + p1}")
    if u not in (0, 1):
        raise InputError(f"label must be 0 or 1, got {u}")
    pu = (p0, p1)[u]
    if pu <= 0.0:
        raise InputError("probability of the true class must be positive")
    return -math.log(pu)


def multi_task_loss(p, u: int, t: TripletBatch, mu: float) -> float:
    return log_loss(p, u) + mu * triplet_loss(t)


# --------------------------------------------------------------------------
# Linear embedding trained with the multi-task objective
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class LabeledQuad:
    """Anchor, positive and two negatives with their person/background labels."""

    batch: TripletBatch
    labels: tuple[int, ...]  # one per sample: anchor, positive, negatives...

    def __post_init__(self):
        if len(self.labels) != 2 + self.batch.negatives.shape[0]:
            raise InputError("one label per sample in the batch is required")

    def samples(self) -> np.ndarray:
        b = self.batch
        return np.vstack([b.anchor, b.positive, b.negatives])


@dataclass
class Embedding:
    """Linear map ``x -> weights @ x`` plus the logistic classification head."""

    weights: np.ndarray  # (d_out, d_in)
    head_w: np.ndarray  # (d_in,)
    head_b: float = 0.0
    loss_history: list[float] = field(default_factory=list)

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64) @ self.weights.T


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _objective(quads, W, v, c, mu):
    """Mean multi-task loss and its gradients w.r.t. (W, v, c)."""
    gW = np.zeros_like(W)
    gv = np.zeros_like(v)
    gc = 0.0
    total = 0.0
    for q in quads:
        X = q.samples()
        y = np.asarray(q.labels, dtype=np.float64)
        z = X @ v + c
        # -ln p_u for a logistic head, averaged over the samples of the quad
        total += float(np.mean(np.logaddexp(0.0, -z) * y + np.logaddexp(0.0, z) * (1 - y)))
        r = (_sigmoid(z) - y) / len(y)
        gv += r @ X
        gc += float(r.sum())
        if mu > 0.0:
            E = X @ W.T
            emb = TripletBatch(E[0], E[1], E[2:])
            total += mu * triplet_loss(emb)
            ga, gp, gn = triplet_gradients(emb)
            G = np.vstack([ga, gp, gn])
            gW += mu * (G.T @ X)
    k = len(quads)
    return total / k, gW / k, gv / k, gc / k


def train_embedding(quads, mu: float, lr: float, iterations: int, d_out: int | None = None) -> Embedding:
    """Full-batch gradient descent on the multi-task loss.

    The embedding starts as an identity-padded ``(d_out, d_in)`` matrix, the
    head at zero.  The classification term acts on the raw features, so with
    ``mu == 0`` the embedding receives no gradient and only the head moves.
    """
    quads = list(quads)
    if not quads:
        raise InputError("no training quads")
    if lr <= 0:
        raise InputError("learning rate must be positive")
    d_in = quads[0].batch.anchor.shape[0]
    if any(q.batch.anchor.shape[0] != d_in for q in quads):
        raise InputError("all quads must share one feature dimension")
    d_out = d_in if d_out is None else d_out
    if not 0 < d_out <= d_in:
        raise InputError("d_out must lie in [1, d_in]")
    W = np.eye(d_out, d_in)
    v = np.zeros(d_in)
    c = 0.0
    history = []
    for _ in range(iterations):
        loss, gW, gv, gc = _objective(quads, W, v, c, mu)
        history.append(loss)
        W = W - lr * gW
        v = v - lr * gv
        c -= lr * gc
    return Embedding(W, v, c, history)
