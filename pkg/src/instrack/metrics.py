"""CLEAR-MOT and IDF1 scores of a hypothesis sequence against ground truth.

Sequences are ``dict[frame, list[(identity, BoundingBox)]]``.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from .association import hungarian_min_cost
from .core import InputError, boxes_to_array
from .geometry import iou_matrix

MT_RATIO = 0.8
ML_RATIO = 0.2

CSV_FIELDS = ("mota", "idf1", "mt", "ml", "fp", "fn", "ids", "frag", "gt_total",
              "matches", "idtp", "idfp", "idfn", "num_gt_tracks")


@dataclass(frozen=True)
class MetricsReport:
    mota: float
    idf1: float
    mt: float
    ml: float
    fp: int
    fn: int
    ids: int
    frag: int
    gt_total: int
    matches: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0
    num_gt_tracks: int = 0

    def csv_header(self) -> str:
        return ",".join(CSV_FIELDS)

    def csv_line(self) -> str:
        d = asdict(self)
        return ",".join(f"{d[k]:.6f}" if isinstance(d[k], float) else str(d[k]) for k in CSV_FIELDS)

    def pretty(self) -> str:
        rows = [
            ("MOTA", f"{100 * self.mota:.2f}%"),
            ("IDF1", f"{100 * self.idf1:.2f}%"),
            ("MT", f"{100 * self.mt:.2f}%"),
            ("ML", f"{100 * self.ml:.2f}%"),
            ("FP", str(self.fp)),
            ("FN", str(self.fn)),
            ("IDS", str(self.ids)),
            ("Frag", str(self.frag)),
            ("GT", str(self.gt_total)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v:>10}" for k, v in rows)


def _frame_arrays(entries):
    ids = [int(e[0]) for e in entries]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate identity within a frame")
    return ids, boxes_to_array([e[1] for e in entries])


def _match_remaining(ov: np.ndarray, rows: list[int], cols: list[int], thr: float):
    """Hungarian on (1 - IoU) among the free rows/columns, keeping pairs at or above ``thr``."""
    if not rows or not cols:
        return []
    sub = ov[np.ix_(rows, cols)]
    k = max(len(rows), len(cols))
    big = 2.0
    cost = np.full((k, k), big)
    cost[: len(rows), : len(cols)] = np.where(sub >= thr, 1.0 - sub, big)
    perm = hungarian_min_cost(cost).perm
    out = []
    for r in range(len(rows)):
        c = int(perm[r])
        if c < len(cols) and sub[r, c] >= thr:
            out.append((rows[r], cols[c]))
    return out


def evaluate(gt, hyp, iou_threshold: float = 0.5) -> MetricsReport:
    if not 0.0 < iou_threshold <= 1.0:
        raise InputError("iou_threshold must lie in (0, 1]")
    gt_total = sum(len(v) for v in gt.values())
    if gt_total == 0:
        raise InputError("ground truth is empty")

    fp = fn = ids = frag = matches = 0
    last_hyp: dict[int, int] = {}        # gt id -> hyp id of its latest match
    current: dict[int, int] = {}         # correspondences carried from the previous frame
    was_tracked: dict[int, bool] = {}    # gt id -> matched in its previous appearance
    ever_matched: set[int] = set()
    gt_len: dict[int, int] = defaultdict(int)
    gt_hit: dict[int, int] = defaultdict(int)
    pair_count: dict[tuple[int, int], int] = defaultdict(int)
    gt_count: dict[int, int] = defaultdict(int)
    hyp_count: dict[int, int] = defaultdict(int)
    hyp_total = 0

    for frame in sorted(set(gt) | set(hyp)):
        g_ids, g_boxes = _frame_arrays(gt.get(frame, []))
        h_ids, h_boxes = _frame_arrays(hyp.get(frame, []))
        hyp_total += len(h_ids)
        for g in g_ids:
            gt_len[g] += 1
            gt_count[g] += 1
        for h in h_ids:
            hyp_count[h] += 1
        ov = iou_matrix(g_boxes, h_boxes)

        # identity-agnostic overlap counts for IDF1
        for r, c in zip(*np.nonzero(ov >= iou_threshold)):
            pair_count[(g_ids[r], h_ids[c])] += 1

        h_index = {h: c for c, h in enumerate(h_ids)}
        pairs = []
        used_r, used_c = set(), set()
        for r, g in enumerate(g_ids):
            h = current.get(g)
            c = h_index.get(h) if h is not None else None
            if c is not None and c not in used_c and ov[r, c] >= iou_threshold:
                pairs.append((r, c))
                used_r.add(r)
                used_c.add(c)
        free_r = [r for r in range(len(g_ids)) if r not in used_r]
        free_c = [c for c in range(len(h_ids)) if c not in used_c]
        pairs += _match_remaining(ov, free_r, free_c, iou_threshold)

        matched_gt = set()
        new_current = {}
        for r, c in pairs:
            g, h = g_ids[r], h_ids[c]
            if g in last_hyp and last_hyp[g] != h:
                ids += 1
            if g in ever_matched and not was_tracked.get(g, False):
                frag += 1
            last_hyp[g] = h
            ever_matched.add(g)
            new_current[g] = h
            matched_gt.add(g)
            gt_hit[g] += 1
        for g in g_ids:
            was_tracked[g] = g in matched_gt
        current = new_current
        matches += len(pairs)
        fn += len(g_ids) - len(pairs)
        fp += len(h_ids) - len(pairs)

    mota = 1.0 - (fn + fp + ids) / gt_total
    ratios = [gt_hit[g] / gt_len[g] for g in gt_len]
    mt = sum(r >= MT_RATIO for r in ratios) / len(ratios)
    ml = sum(r <= ML_RATIO for r in ratios) / len(ratios)

    idtp = _identity_matching(list(gt_count), list(hyp_count), pair_count)
    idfn = gt_total - idtp
    idfp = hyp_total - idtp
    idf1 = 2 * idtp / (2 * idtp + idfp + idfn)
    return MetricsReport(mota, idf1, mt, ml, fp, fn, ids, frag, gt_total,
                         matches, idtp, idfp, idfn, len(gt_len))


def _identity_matching(gt_ids, hyp_ids, pair_count) -> int:
    """Largest total of co-located frames under a one-to-one gt/hyp identity mapping."""
    if not gt_ids or not hyp_ids:
        return 0
    k = max(len(gt_ids), len(hyp_ids))
    w = np.zeros((k, k))
    gi = {g: r for r, g in enumerate(gt_ids)}
    hi = {h: c for c, h in enumerate(hyp_ids)}
    for (g, h), n in pair_count.items():
        w[gi[g], hi[h]] = n
    perm = hungarian_min_cost(-w).perm
    return int(w[np.arange(k), perm].sum())
