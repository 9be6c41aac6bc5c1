"""Evaluation: voxel overlap (IoU), pooled average precision, completion
reports, and the closed-form 1-D Wasserstein-1 oracle used to sanity-check
trained critics.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .voxel import VoxelGrid


def iou(pred, truth, threshold=0.5):
    """Intersection over union of binarized occupancies; 1.0 when both empty."""
    if pred.extent != truth.extent:
        raise ShapeError("iou", pred.occupancy.shape, truth.occupancy.shape)
    p = pred.binarize(threshold).occupancy.astype(bool)
    t = truth.binarize().occupancy.astype(bool)
    union = int(np.logical_or(p, t).sum())
    if union == 0:
        return 1.0
    return float(np.logical_and(p, t).sum()) / union


def average_precision_scores(scores, labels):
    """AP over (score, label) pairs: area under the precision-recall curve.

    Thresholds sweep the unique scores in descending order; tied scores
    enter together, which makes constant scores evaluate to the positive
    prevalence. Equivalent to averaging precision at each positive rank
    when scores are distinct.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if scores.size == 0:
        raise DataError("average precision needs a nonempty evaluation set")
    if scores.shape != labels.shape:
        raise ShapeError("average_precision", scores.shape, labels.shape)
    npos = int(labels.sum())
    if npos == 0:
        raise DataError("average precision undefined with no positive voxels")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    tp = np.cumsum(l)
    ranks = np.arange(1, s.size + 1)
    # last index of each tied-score group
    group_end = np.flatnonzero(np.diff(s) != 0)
    group_end = np.concatenate((group_end, [s.size - 1]))
    tp_end = tp[group_end]
    precision = tp_end / ranks[group_end]
    recall = tp_end / npos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


def average_precision(pred_grids, truth_grids, pooling="dataset"):
    """Voxel-pooled AP over paired soft predictions and binary truths.

    pooling="dataset" pools every voxel of every pair into one ranking;
    pooling="object" scores each pair separately and averages.
    """
    if len(pred_grids) != len(truth_grids) or not pred_grids:
        raise DataError("average_precision needs matching nonempty grid lists")
    for p, t in zip(pred_grids, truth_grids):
        if p.extent != t.extent:
            raise ShapeError("average_precision", p.occupancy.shape, t.occupancy.shape)
    if pooling == "dataset":
        scores = np.concatenate([p.occupancy.astype(np.float64).reshape(-1) for p in pred_grids])
        labels = np.concatenate([t.binarize().occupancy.reshape(-1) for t in truth_grids])
        return average_precision_scores(scores, labels)
    if pooling == "object":
        aps = [
            average_precision_scores(
                p.occupancy.astype(np.float64).reshape(-1),
                t.binarize().occupancy.reshape(-1),
            )
            for p, t in zip(pred_grids, truth_grids)
        ]
        return float(np.mean(aps))
    raise ValueError(f"pooling must be 'dataset' or 'object', got {pooling!r}")


@dataclass
class EvalReport:
    per_class_ap: dict
    mean_ap: float
    per_sample_iou: list
    threshold: float
    sample_count: int
    mean_iou: float = field(default=None)

    def __post_init__(self):
        if self.mean_iou is None:
            self.mean_iou = float(np.mean(self.per_sample_iou)) if self.per_sample_iou else 0.0

    def to_json(self):
        payload = {
            "threshold": self.threshold,
            "sample_count": self.sample_count,
            "per_class_ap": {k: self.per_class_ap[k] for k in sorted(self.per_class_ap)},
            "mean_ap": self.mean_ap,
            "mean_iou": self.mean_iou,
            "per_sample_iou": self.per_sample_iou,
        }
        return json.dumps(payload, indent=2)

    def write_iou_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "iou"])
            for i, v in enumerate(self.per_sample_iou):
                w.writerow([i, repr(v)])


def mean_of_class_aps(per_class_ap):
    """Unweighted mean over classes (the Mean column convention)."""
    if not per_class_ap:
        raise DataError("no per-class scores")
    return float(np.mean(list(per_class_ap.values())))


def evaluate_completion(model, pairs, threshold=0.5, pooling="dataset"):
    """Run a completion model over (condition, truth) pairs.

    `model` maps a condition VoxelGrid to a soft prediction VoxelGrid.
    Classes come from each truth grid's class tag (missing tags pool under
    "all"); mean AP is the unweighted class mean.
    """
    if not pairs:
        raise DataError("empty evaluation set")
    preds, truths, ious = [], [], []
    by_class = {}
    for cond, truth in pairs:
        pred = model(cond)
        if pred.extent != truth.extent:
            raise ShapeError("evaluate_completion", pred.occupancy.shape, truth.occupancy.shape)
        preds.append(pred)
        truths.append(truth)
        ious.append(iou(pred, truth, threshold))
        tag = truth.class_tag or "all"
        by_class.setdefault(tag, ([], []))
        by_class[tag][0].append(pred)
        by_class[tag][1].append(truth)
    per_class = {
        tag: average_precision(ps, ts, pooling=pooling) for tag, (ps, ts) in by_class.items()
    }
    return EvalReport(
        per_class_ap=per_class,
        mean_ap=mean_of_class_aps(per_class),
        per_sample_iou=[float(v) for v in ious],
        threshold=threshold,
        sample_count=len(pairs),
    )


def nearest_shell_baseline(train_pairs, test_pairs, threshold=0.5):
    """Retrieval floor: answer with the training target whose condition
    shell best matches the test condition. Returns the per-sample IoUs."""
    out = []
    for cond, truth in test_pairs:
        best, best_match = None, -1.0
        for tc, tt in train_pairs:
            m = iou(tc, cond, threshold)
            if m > best_match:
                best_match, best = m, tt
        out.append(iou(best, truth, threshold))
    return out


def wasserstein1_1d(a, b):
    """Closed-form empirical W1 between two 1-D sample sets.

    Equal sizes reduce to the mean absolute difference of sorted samples;
    unequal sizes integrate |CDF_a - CDF_b| over the merged support.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise DataError("wasserstein1_1d needs nonempty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.sort(np.concatenate((a, b)))
    deltas = np.diff(grid)
    cdf_a = np.searchsorted(a, grid[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, grid[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))
