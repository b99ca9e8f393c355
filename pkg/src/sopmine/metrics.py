"""Saliency evaluation: MAE, precision/recall sweeps, max F-measure, and the
structure measure (object + region terms), plus a directory-level evaluator.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .ingest import load_saliency_map
from .model import SaliencyMap

F_BETA_SQUARED = 0.3
_EPS = np.finfo(np.float64).eps


def _check_pair(s: SaliencyMap, gt: SaliencyMap, binary_gt: bool = True) -> tuple[np.ndarray, np.ndarray]:
    if (s.height, s.width) != (gt.height, gt.width):
        raise ValueError(
            f"dimension mismatch: {s.width}x{s.height} vs {gt.width}x{gt.height}"
        )
    gtv = gt.values
    if binary_gt and not np.isin(gtv, (0.0, 1.0)).all():
        raise ValueError("ground truth must be binary (values exactly 0 or 1)")
    return s.values, gtv


def mae(s: SaliencyMap, gt: SaliencyMap) -> float:
    """Mean absolute error between two maps."""
    sv, gtv = _check_pair(s, gt, binary_gt=False)
    return float(np.abs(sv - gtv).mean())


def precision_recall(s: SaliencyMap, gt: SaliencyMap) -> np.ndarray:
    """(256, 2) array of (precision, recall), one row per threshold t/255.

    Prediction is s > t/255. Empty predictions score precision 1 by
    convention; an empty ground truth scores recall 0.
    """
    sv, gtv = _check_pair(s, gt)
    positive = gtv > 0.5
    n_pos = int(positive.sum())
    out = np.empty((256, 2), dtype=np.float64)
    for t in range(256):
        pred = sv > t / 255.0
        tp = int((pred & positive).sum())
        n_pred = int(pred.sum())
        out[t, 0] = 1.0 if n_pred == 0 else tp / n_pred
        out[t, 1] = 0.0 if n_pos == 0 else tp / n_pos
    return out


def max_f_measure(s: SaliencyMap, gt: SaliencyMap) -> float:
    """Best F-measure over the 256-threshold sweep (beta^2 = 0.3; 0/0 -> 0)."""
    pr = precision_recall(s, gt)
    p, r = pr[:, 0], pr[:, 1]
    denom = F_BETA_SQUARED * p + r
    safe = np.where(denom > 0.0, denom, 1.0)
    scores = np.where(denom > 0.0, (1.0 + F_BETA_SQUARED) * p * r / safe, 0.0)
    return float(scores.max())


def _object_score(values: np.ndarray) -> float:
    # similarity of a (foreground or background) region to an all-ones target
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(sv: np.ndarray, fg: np.ndarray) -> float:
    o_fg = _object_score(sv[fg])
    o_bg = _object_score(1.0 - sv[~fg])
    u = float(fg.mean())
    return u * o_fg + (1.0 - u) * o_bg


def _region_ssim(sv: np.ndarray, gtv: np.ndarray) -> float:
    n = sv.size
    if n == 0:
        return 0.0
    x, y = float(sv.mean()), float(gtv.mean())
    denom = n - 1 + _EPS
    sigma_x2 = float(((sv - x) ** 2).sum()) / denom
    sigma_y2 = float(((gtv - y) ** 2).sum()) / denom
    sigma_xy = float(((sv - x) * (gtv - y)).sum()) / denom
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x2 + sigma_y2)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    return 1.0 if beta == 0.0 else 0.0


def _s_region(sv: np.ndarray, gtv: np.ndarray) -> float:
    rows, cols = gtv.shape
    total = gtv.sum()
    # centroid of the foreground, in 1-based coordinates like the reference
    cx = int(round(float((gtv.sum(axis=0) * np.arange(1, cols + 1)).sum() / total)))
    cy = int(round(float((gtv.sum(axis=1) * np.arange(1, rows + 1)).sum() / total)))
    area = rows * cols
    w = [
        cx * cy / area,
        (cols - cx) * cy / area,
        cx * (rows - cy) / area,
    ]
    w.append(1.0 - sum(w))
    quads = [
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, cols)),
        (slice(cy, rows), slice(0, cx)),
        (slice(cy, rows), slice(cx, cols)),
    ]
    score = 0.0
    for weight, (rs, cs) in zip(w, quads):
        if weight > 0.0:
            score += weight * _region_ssim(sv[rs, cs], gtv[rs, cs])
    return score


def s_measure(s: SaliencyMap, gt: SaliencyMap, alpha: float = 0.5) -> float:
    """Structure measure: alpha * object term + (1-alpha) * region term.

    Degenerate ground truths follow the reference conventions: all-background
    gives 1 - mean(s), all-foreground gives mean(s).
    """
    sv, gtv = _check_pair(s, gt)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    fg = gtv > 0.5
    y = float(fg.mean())
    if y == 0.0:
        return 1.0 - float(sv.mean())
    if y == 1.0:
        return float(sv.mean())
    score = alpha * _s_object(sv, fg) + (1.0 - alpha) * _s_region(sv, gtv)
    return max(score, 0.0)


def evaluate_pair(s: SaliencyMap, gt: SaliencyMap) -> dict:
    return {
        "max_f": max_f_measure(s, gt),
        "s_measure": s_measure(s, gt),
        "mae": mae(s, gt),
    }


def evaluate_directories(pred_dir: str, gt_dir: str) -> dict:
    """Match PGMs by filename across two directories and score every pair."""
    preds = sorted(f for f in os.listdir(pred_dir) if f.endswith(".pgm"))
    gts = sorted(f for f in os.listdir(gt_dir) if f.endswith(".pgm"))
    if preds != gts:
        only_pred = sorted(set(preds) - set(gts))
        only_gt = sorted(set(gts) - set(preds))
        raise ValueError(
            f"prediction/gt filenames do not match (only in pred: {only_pred[:3]}, "
            f"only in gt: {only_gt[:3]})"
        )
    if not preds:
        raise ValueError("no .pgm files to evaluate")
    per_frame = {}
    for name in preds:
        s = load_saliency_map(os.path.join(pred_dir, name))
        gt = load_saliency_map(os.path.join(gt_dir, name))
        per_frame[name] = evaluate_pair(s, gt)
    means = {
        key: float(np.mean([frame[key] for frame in per_frame.values()]))
        for key in ("max_f", "s_measure", "mae")
    }
    return {"per_frame": per_frame, "means": means}


def save_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
