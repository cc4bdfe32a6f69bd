"""Hot numeric kernels.

Every kernel exists twice: a loop form compiled with numba (``*_numba``) and a
vectorised pure-numpy form (``*_numpy``).  The unsuffixed name is bound to one
of them at import time according to :data:`instrack._accel.USE_NUMBA`.

Boxes are ``(n, 4)`` float64 arrays of ``(cx, cy, w, h)``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "iou_matrix",
    "lap_min_cost",
    "rgb_histogram",
    "logistic_sgd",
    "hashed_normals",
    "BACKEND",
]

BACKEND = "numba" if USE_NUMBA else "numpy"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


# --------------------------------------------------------------------------
# IoU
# --------------------------------------------------------------------------
@njit
def iou_matrix_numba(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        ax0 = a[i, 0] - 0.5 * a[i, 2]
        ax1 = a[i, 0] + 0.5 * a[i, 2]
        ay0 = a[i, 1] - 0.5 * a[i, 3]
        ay1 = a[i, 1] + 0.5 * a[i, 3]
        area_a = a[i, 2] * a[i, 3]
        for j in range(m):
            bx0 = b[j, 0] - 0.5 * b[j, 2]
            bx1 = b[j, 0] + 0.5 * b[j, 2]
            by0 = b[j, 1] - 0.5 * b[j, 3]
            by1 = b[j, 1] + 0.5 * b[j, 3]
            iw = min(ax1, bx1) - max(ax0, bx0)
            ih = min(ay1, by1) - max(ay0, by0)
            if iw <= 0.0 or ih <= 0.0:
                continue
            inter = iw * ih
            union = area_a + b[j, 2] * b[j, 3] - inter
            v = inter / union
            out[i, j] = 1.0 if v > 1.0 else v
    return out


def iou_matrix_numpy(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax0 = (a[:, 0] - 0.5 * a[:, 2])[:, None]
    ax1 = (a[:, 0] + 0.5 * a[:, 2])[:, None]
    ay0 = (a[:, 1] - 0.5 * a[:, 3])[:, None]
    ay1 = (a[:, 1] + 0.5 * a[:, 3])[:, None]
    bx0 = b[:, 0] - 0.5 * b[:, 2]
    bx1 = b[:, 0] + 0.5 * b[:, 2]
    by0 = b[:, 1] - 0.5 * b[:, 3]
    by1 = b[:, 1] + 0.5 * b[:, 3]
    iw = np.minimum(ax1, bx1) - np.maximum(ax0, bx0)
    ih = np.minimum(ay1, by1) - np.maximum(ay0, by0)
    hit = (iw > 0.0) & (ih > 0.0)
    inter = np.where(hit, iw * ih, 0.0)
    union = (a[:, 2] * a[:, 3])[:, None] + b[:, 2] * b[:, 3] - inter
    return np.minimum(np.where(hit, inter / union, 0.0), 1.0)


# --------------------------------------------------------------------------
# Linear assignment (shortest augmenting path with potentials, O(k^3))
# --------------------------------------------------------------------------
@njit
def lap_min_cost_numba(cost):
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, np.int64)
    way = np.zeros(n + 1, np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    rows = np.empty(n, np.int64)
    for j in range(1, n + 1):
        rows[p[j] - 1] = j - 1
    return rows


def lap_min_cost_numpy(cost):
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, np.int64)
    way = np.zeros(n + 1, np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            upd = free & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    rows = np.empty(n, np.int64)
    rows[p[1:] - 1] = np.arange(n)
    return rows


# --------------------------------------------------------------------------
# 8x8x8 RGB histogram over an integer pixel window
# --------------------------------------------------------------------------
@njit
def rgb_histogram_numba(frame, x0, y0, x1, y1):
    hist = np.zeros(512)
    for y in range(y0, y1):
        for x in range(x0, x1):
            r = frame[y, x, 0] >> 5
            g = frame[y, x, 1] >> 5
            b = frame[y, x, 2] >> 5
            hist[r * 64 + g * 8 + b] += 1.0
    total = (x1 - x0) * (y1 - y0)
    return hist / total


def rgb_histogram_numpy(frame, x0, y0, x1, y1):
    patch = frame[y0:y1, x0:x1].reshape(-1, 3).astype(np.int64) >> 5
    idx = patch[:, 0] * 64 + patch[:, 1] * 8 + patch[:, 2]
    hist = np.bincount(idx, minlength=512).astype(np.float64)
    return hist / idx.size


# --------------------------------------------------------------------------
# Mini-batch logistic regression SGD
# --------------------------------------------------------------------------
@njit
def _sigmoid_scalar(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit
def logistic_sgd_numba(w, b, X, y, sw, perms, lr, batch, l2):
    w = w.copy()
    d = X.shape[1]
    gw = np.zeros(d)
    for p in range(perms.shape[0]):
        n = perms.shape[1]
        for start in range(0, n, batch):
            stop = min(start + batch, n)
            gw[:] = 0.0
            gb = 0.0
            for k in range(start, stop):
                i = perms[p, k]
                z = b
                for c in range(d):
                    z += X[i, c] * w[c]
                g = sw[i] * (_sigmoid_scalar(z) - y[i])
                for c in range(d):
                    gw[c] += g * X[i, c]
                gb += g
            m = stop - start
            for c in range(d):
                w[c] -= lr * (gw[c] / m + l2 * w[c])
            b -= lr * gb / m
    return w, b


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic_sgd_numpy(w, b, X, y, sw, perms, lr, batch, l2):
    w = np.array(w, dtype=np.float64)
    b = float(b)
    n = perms.shape[1]
    for order in perms:
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            xb = X[idx]
            g = sw[idx] * (_sigmoid(xb @ w + b) - y[idx])
            m = idx.size
            w -= lr * (g @ xb / m + l2 * w)
            b -= lr * g.sum() / m
    return w, b


# --------------------------------------------------------------------------
# Counter-based Gaussian noise keyed on integer tuples
# --------------------------------------------------------------------------
@njit
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def hashed_normals_numba(seed, keys, d):
    n = keys.shape[0]
    out = np.empty((n, d))
    base = _mix(np.uint64(seed) + _GOLDEN)
    for i in range(n):
        h = base
        for k in range(keys.shape[1]):
            h = _mix(h ^ np.uint64(keys[i, k]))
        for c in range(d):
            c2 = np.uint64(2 * c + 1)
            u1 = float(_mix(h + c2 * _GOLDEN) >> _S11) * _INV_2_53
            u2 = float(_mix(h + (c2 + np.uint64(1)) * _GOLDEN) >> _S11) * _INV_2_53
            out[i, c] = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(_TWO_PI * u2)
    return out


def _mix_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hashed_normals_numpy(seed, keys, d):
    keys = np.asarray(keys, dtype=np.int64).view(np.uint64)
    n = keys.shape[0]
    with np.errstate(over="ignore"):
        h = np.full(n, _mix_np(np.array([np.uint64(seed) + _GOLDEN]))[0], dtype=np.uint64)
        for k in range(keys.shape[1]):
            h = _mix_np(h ^ keys[:, k])
        c2 = (2 * np.arange(d, dtype=np.uint64) + np.uint64(1))[None, :]
        hh = h[:, None]
        u1 = (_mix_np(hh + c2 * _GOLDEN) >> _S11).astype(np.float64) * _INV_2_53
        u2 = (_mix_np(hh + (c2 + np.uint64(1)) * _GOLDEN) >> _S11).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(_TWO_PI * u2)


if USE_NUMBA:
    iou_matrix = iou_matrix_numba
    lap_min_cost = lap_min_cost_numba
    rgb_histogram = rgb_histogram_numba
    logistic_sgd = logistic_sgd_numba
    hashed_normals = hashed_normals_numba
else:
    iou_matrix = iou_matrix_numpy
    lap_min_cost = lap_min_cost_numpy
    rgb_histogram = rgb_histogram_numpy
    logistic_sgd = logistic_sgd_numpy
    hashed_normals = hashed_normals_numpy
