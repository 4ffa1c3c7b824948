"""Ranking metrics for binary risk scores."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    """Metric undefined for the given inputs (e.g. single-class labels)."""


def _validate(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise MetricError(f"labels {labels.shape} vs scores {scores.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("labels must be binary")
    if not np.all(np.isfinite(scores)):
        raise MetricError("non-finite scores")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricError("need at least one positive and one negative")
    return labels, scores, n_pos


def auroc(labels, scores) -> float:
    """P(score of a random positive > score of a random negative), ties 0.5.

    Mann-Whitney form: rank all scores (average ranks on ties); the positive
    rank sum determines the statistic.
    """
    labels, scores, n_pos = _validate(labels, scores)
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(labels, scores) -> float:
    """Average precision over descending unique-score thresholds:
    sum of (recall step) * (precision at that threshold)."""
    labels, scores, n_pos = _validate(labels, scores)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    fp = np.cumsum(1 - sorted_labels)
    # evaluate only where the score changes (last index of each tie group)
    boundary = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    cut = np.append(boundary, labels.size - 1)
    precision = tp[cut] / (tp[cut] + fp[cut])
    recall = tp[cut] / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))
