"""Segmentation metrics, threshold selection, and the branch-point box metric.

AUC uses the exact rank statistic (probability a random positive outscores a
random negative, ties counted one half) rather than a threshold grid, so it is
invariant under any strictly increasing rescoring.
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class EvalReport:
    accuracy: float
    dice: float
    sensitivity: float
    specificity: float
    n_pos: int
    n_neg: int
    auc: float | None = None
    local_accuracy: float | None = None
    threshold: float | None = None

    def to_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "dice": self.dice,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }
        for key in ("auc", "local_accuracy", "threshold"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


def _flatten(arr, fov):
    a = np.asarray(arr).reshape(-1)
    if fov is None:
        return a
    f = np.asarray(fov, dtype=bool).reshape(-1)
    if f.shape != a.shape:
        raise ValueError("fov shape differs from the input")
    if not f.any():
        raise ValueError("empty fov")
    return a[f]


def _check_gt(gt):
    n_pos = int(gt.sum())
    n_neg = int(gt.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate ground truth: needs at least one positive and one negative")
    return n_pos, n_neg


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group average."""
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts).astype(np.float64)
    starts = ends - counts + 1.0
    return ((starts + ends) / 2.0)[inverse]


def roc_auc(scores, gt, fov=None) -> float:
    """Area under the ROC curve by the Mann-Whitney rank statistic."""
    s = _flatten(scores, fov).astype(np.float64)
    g = _flatten(gt, fov).astype(bool)
    n_pos, n_neg = _check_gt(g)
    ranks = _average_ranks(s)
    r_pos = float(ranks[g].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def best_threshold(scores, gt, fov=None) -> tuple[float, float]:
    """Sweep every distinct score as a threshold (score >= tau means vessel)
    and return the (tau, dice) maximizing Dice; ties go to the smallest tau."""
    s = _flatten(scores, fov).astype(np.float64)
    g = _flatten(gt, fov).astype(bool)
    n_pos, _ = _check_gt(g)
    order = np.argsort(-s, kind="mergesort")
    ss = s[order]
    tp = np.cumsum(g[order].astype(np.int64))
    selected = np.arange(1, len(ss) + 1)
    # last index of each distinct value in the descending order
    cand = np.append(np.nonzero(np.diff(ss))[0], len(ss) - 1)
    dice = 2.0 * tp[cand] / (selected[cand] + n_pos)
    best = np.flatnonzero(dice == dice.max())[-1]  # smallest tau among ties
    return float(ss[cand[best]]), float(dice[best])


def confusion_metrics(seg, gt, fov=None) -> EvalReport:
    """Standard confusion-matrix metrics over the (optionally masked) pixels."""
    s = _flatten(seg, fov).astype(bool)
    g = _flatten(gt, fov).astype(bool)
    tp = int(np.sum(s & g))
    fp = int(np.sum(s & ~g))
    fn = int(np.sum(~s & g))
    tn = int(np.sum(~s & ~g))
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("empty fov")
    return EvalReport(
        accuracy=(tp + tn) / total,
        dice=_safe_ratio(2.0 * tp, 2.0 * tp + fp + fn),
        sensitivity=_safe_ratio(tp, tp + fn),
        specificity=_safe_ratio(tn, tn + fp),
        n_pos=tp + fn,
        n_neg=tn + fp,
    )


def _safe_ratio(num, den) -> float:
    return float(num / den) if den > 0 else 1.0


def _dilate_disk(mask: np.ndarray, radius: int) -> np.ndarray:
    out = np.zeros_like(mask, dtype=bool)
    h, w = mask.shape
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx * dx + dy * dy > radius * radius:
                continue
            if abs(dy) >= h or abs(dx) >= w:
                continue
            ys_dst = slice(max(0, dy), min(h, h + dy))
            ys_src = slice(max(0, -dy), min(h, h - dy))
            xs_dst = slice(max(0, dx), min(w, w + dx))
            xs_src = slice(max(0, -dx), min(w, w - dx))
            out[ys_dst, xs_dst] |= mask[ys_src, xs_src]
    return out


def local_accuracy(seg, gt, dilation_radius: int = 2) -> float:
    """Pixel accuracy restricted to the disk-dilated ground-truth vessels."""
    if dilation_radius < 1:
        raise ValueError("dilation_radius must be >= 1")
    g = np.asarray(gt, dtype=bool)
    s = np.asarray(seg, dtype=bool)
    region = _dilate_disk(g, dilation_radius)
    if not region.any():
        raise ValueError("empty dilated region")
    return float(np.mean(s[region] == g[region]))


def boxes_region(boxes, shape) -> np.ndarray:
    """Union of box interiors, clipped to the image; errors on a vacuous box."""
    if len(boxes) == 0:
        raise ValueError("empty box list")
    h, w = shape
    region = np.zeros(shape, dtype=bool)
    for b in boxes:
        x_lo = max(0, int(np.ceil(b.cx - b.half)))
        x_hi = min(w - 1, int(np.floor(b.cx + b.half)))
        y_lo = max(0, int(np.ceil(b.cy - b.half)))
        y_hi = min(h - 1, int(np.floor(b.cy + b.half)))
        if x_lo > x_hi or y_lo > y_hi:
            raise ValueError("bounding box does not intersect the image")
        region[y_lo : y_hi + 1, x_lo : x_hi + 1] = True
    return region


def bifurcation_bb_dice(seg, gt, boxes) -> float:
    """Dice over the union of branch-point bounding boxes."""
    s = np.asarray(seg, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    region = boxes_region(boxes, g.shape)
    tp = int(np.sum(s & g & region))
    fp = int(np.sum(s & ~g & region))
    fn = int(np.sum(~s & g & region))
    return _safe_ratio(2.0 * tp, 2.0 * tp + fp + fn)


def write_csv(path, rows: list[dict], fieldnames: list[str]) -> None:
    """One row per record; comma separated, '.' decimal point."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
