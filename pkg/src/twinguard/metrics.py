"""Evaluation metrics for anomaly scores.

Scores follow the convention "higher = more anomalous".  Threshold-free
metrics (average precision, AUC-ROC) operate on the full score ranking;
thresholded metrics flag a sample as anomalous iff its score is >= the
threshold (ties count as anomalous, one rule everywhere).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class EvalReport:
    """Per-run evaluation result."""

    ap: float
    auc_roc: float
    f2: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    model: str = ""
    seed: int = 0
    fold: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def csv_row(self) -> str:
        """Row for the results CSV (see RESULTS_CSV_HEADER)."""
        return (
            f"{self.model},{self.seed},{self.fold},"
            f"{self.ap:.12g},{self.auc_roc:.12g},{self.f2:.12g},"
            f"{self.tp},{self.fp},{self.tn},{self.fn},{self.threshold:.12g}"
        )


RESULTS_CSV_HEADER = "model,seed,fold,ap,auc_roc,f2,tp,fp,tn,fn,threshold"


def _check_scored(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, labels.astype(np.int64)


def average_precision(scores, labels) -> float:
    """Step-interpolated area under the precision-recall curve.

    Thresholds sweep the descending unique scores; tied scores enter at a
    single threshold.  AP = sum over thresholds of (R_t - R_{t-1}) * P_t.
    """
    scores, labels = _check_scored(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # group boundaries: last index of each tied block
    boundary = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([boundary, [len(s) - 1]])
    tp = np.cumsum(y)[ends].astype(np.float64)
    pred_pos = (ends + 1).astype(np.float64)
    precision = tp / pred_pos
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve via the rank (Mann-Whitney) statistic.

    Equals P(score_pos > score_neg) + 0.5 * P(tie).
    """
    scores, labels = _check_scored(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC-ROC needs both a positive and a negative label")

    order = np.argsort(scores, kind="stable")
    s = scores[order]
    # midranks (1-based), ties share the average rank
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[i : j + 1] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = float(ranks[labels[order] == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_curve_points(scores, labels):
    """Precision-recall curve points, one per distinct threshold.

    Returns (precision, recall, threshold) arrays ordered by descending
    threshold; tied scores enter at a single point.  Integrating
    precision over recall steps reproduces `average_precision` exactly.
    """
    scores, labels = _check_scored(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("precision-recall curve needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    ends = np.concatenate([np.nonzero(np.diff(s))[0], [len(s) - 1]])
    tp = np.cumsum(y)[ends].astype(np.float64)
    pred_pos = (ends + 1).astype(np.float64)
    return tp / pred_pos, tp / n_pos, s[ends]


def roc_curve_points(scores, labels):
    """ROC curve points (false positive rate, true positive rate, threshold).

    One point per distinct threshold, descending, with the trapezoidal
    area equal to `auc_roc`; the (0, 0) anchor is included.
    """
    scores, labels = _check_scored(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC curve needs both a positive and a negative label")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    ends = np.concatenate([np.nonzero(np.diff(s))[0], [len(s) - 1]])
    tp = np.cumsum(y)[ends].astype(np.float64)
    fp = (ends + 1) - tp
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    thresholds = np.concatenate([[np.inf], s[ends]])
    return fpr, tpr, thresholds


def fbeta(precision: float, recall: float, beta: float) -> float:
    """F_beta from precision/recall; 0 when both are 0."""
    if precision == 0.0 and recall == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def confusion_at_threshold(scores, labels, threshold: float):
    """(tp, fp, tn, fn) with "anomalous iff score >= threshold"."""
    scores, labels = _check_scored(scores, labels)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    return tp, fp, tn, fn


def f2_at_threshold(scores, labels, threshold: float):
    """F2 score and confusion counts at a fixed threshold.

    Returns (f2, (tp, fp, tn, fn)).  F2 weighs recall over precision and is
    0 by convention when there are no true positives.
    """
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    tp, fp, tn, fn = confusion_at_threshold(scores, labels, threshold)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return fbeta(precision, recall, 2.0), (tp, fp, tn, fn)


def quantile_threshold(scores, fraction: float = 0.25) -> float:
    """Threshold such that the top `fraction` of scores is flagged.

    Returns the k-th largest score with k = ceil(fraction * n); combined
    with the ">= threshold" rule this flags exactly k samples when scores
    are distinct, and everything tied with the k-th score otherwise.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty score array")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    k = math.ceil(fraction * scores.size)
    return float(np.sort(scores)[::-1][k - 1])


def evaluate_scores(
    scores,
    labels,
    fraction: float = 0.25,
    model: str = "",
    seed: int = 0,
    fold: int = 0,
) -> EvalReport:
    """Full report: AP, AUC-ROC and F2/confusion at the quantile threshold."""
    theta = quantile_threshold(scores, fraction)
    f2, (tp, fp, tn, fn) = f2_at_threshold(scores, labels, theta)
    return EvalReport(
        ap=average_precision(scores, labels),
        auc_roc=auc_roc(scores, labels),
        f2=f2,
        threshold=theta,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        model=model,
        seed=seed,
        fold=fold,
    )
