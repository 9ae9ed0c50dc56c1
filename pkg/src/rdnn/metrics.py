"""Ranking metrics: per-category average precision, mAP, confusion summary."""

import math

import numpy as np

from .exceptions import ShapeError, UndefinedMetricError


def _rank_order(scores):
    # stable sort on negated scores: ties keep ascending original index
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def average_precision(scores, labels):
    """Non-interpolated average precision of a ranked list.

    Samples are ranked by descending score, ties broken by ascending index.
    ``AP = (1/R) * sum over positive ranks k of precision@k``.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    hits = labels[_rank_order(scores)] > 0
    n_pos = int(hits.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision is undefined without positive labels")
    ranks = np.flatnonzero(hits) + 1
    return math.fsum(np.arange(1, n_pos + 1) / ranks) / n_pos


def mean_average_precision(scores, labels):
    """Per-category AP and their mean.

    Categories without positives are skipped.

    Returns
    -------
    per_category : ndarray, shape (C,)
        NaN for skipped categories.
    map_ : float
    excluded : list of int
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise ShapeError(f"score table {scores.shape} and labels {labels.shape} must be equal 2-D shapes")
    per_cat = np.full(scores.shape[1], np.nan)
    excluded = []
    for c in range(scores.shape[1]):
        if not np.any(labels[:, c] > 0):
            excluded.append(c)
            continue
        per_cat[c] = average_precision(scores[:, c], labels[:, c])
    if len(excluded) == scores.shape[1]:
        raise UndefinedMetricError("no category has a positive label")
    return per_cat, float(np.nanmean(per_cat)), excluded


def confusion_summary(scores, labels):
    """Row-normalized ``C x C`` confusion matrix of a single-label projection.

    A sample's true row is its first positive category and its predicted
    column the arg-max score (first index on ties). Samples with no positive
    label are ignored; rows without samples stay zero.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != labels.shape or scores.shape[0] == 0:
        raise ShapeError("confusion summary needs equal, non-empty 2-D score and label tables")
    c = scores.shape[1]
    has_pos = np.any(labels > 0, axis=1)
    true = np.argmax(labels[has_pos] > 0, axis=1)
    pred = np.argmax(scores[has_pos], axis=1)
    counts = np.zeros((c, c))
    np.add.at(counts, (true, pred), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def metric_report(scores, labels, category_names=None):
    per_cat, map_, excluded = mean_average_precision(scores, labels)
    names = category_names or [f"cat_{i}" for i in range(len(per_cat))]
    return {
        "map": map_,
        "average_precision": {n: (None if np.isnan(v) else float(v)) for n, v in zip(names, per_cat)},
        "excluded": [names[i] for i in excluded],
        "confusion": confusion_summary(scores, labels).tolist(),
        "category_names": list(names),
    }
