"""Confusion matrices and ROC curves."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from fusion_graphs.classify.fusion import FeatureBlocks, MulticlassModel, multiclass_scores, predict_batch
from fusion_graphs.errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed [true class, predicted class]."""

    counts: np.ndarray
    class_names: Tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.counts) / total) if total else 0.0

    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True).astype(float)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_frame(self, normalized: bool = False) -> pd.DataFrame:
        values = self.normalized() if normalized else self.counts
        return pd.DataFrame(values, index=pd.Index(self.class_names, name='true'), columns=list(self.class_names))

    def report(self) -> Dict[str, object]:
        return {
            'classes': list(self.class_names),
            'accuracy': self.accuracy,
            'total': self.total,
            'counts': self.counts.tolist(),
            'per_class_accuracy': {
                name: float(self.normalized()[k, k]) for k, name in enumerate(self.class_names)
            },
        }


def confusion_from_predictions(truth: Sequence[int], predicted: Sequence[int],
                               class_names: Sequence[str]) -> ConfusionMatrix:
    k = len(class_names)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (np.asarray(truth, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
    return ConfusionMatrix(counts=counts, class_names=tuple(class_names))


def label_indices(labels: Sequence[str], class_names: Sequence[str]) -> np.ndarray:
    index = {name: k for k, name in enumerate(class_names)}
    out = np.empty(len(labels), dtype=np.int64)
    for row, label in enumerate(labels):
        if label not in index:
            raise DataError(f'unknown label {label!r} at sample {row}; model classes are {list(class_names)}')
        out[row] = index[label]
    return out


def evaluate(model: MulticlassModel, blocks: FeatureBlocks, labels: Sequence[str]) -> ConfusionMatrix:
    truth = label_indices([str(v) for v in labels], model.class_names)
    predicted, _ = predict_batch(model, blocks)
    matrix = confusion_from_predictions(truth, predicted, model.class_names)
    logger.info('Evaluated %d samples: accuracy %.4f', matrix.total, matrix.accuracy)
    return matrix


@dataclass(frozen=True)
class RocCurve:
    """(threshold, P_fa, P_d) with strictly increasing thresholds; a sample is declared
    positive when its score exceeds the threshold."""

    thresholds: np.ndarray
    p_fa: np.ndarray
    p_d: np.ndarray

    def points(self):
        return list(zip(self.thresholds.tolist(), self.p_fa.tolist(), self.p_d.tolist()))

    def auc(self) -> float:
        x = self.p_fa[::-1]
        y = self.p_d[::-1]
        return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'threshold': self.thresholds, 'p_fa': self.p_fa, 'p_d': self.p_d})


def roc_sweep(scores: Sequence[float], truth: Sequence[bool]) -> RocCurve:
    scores = np.asarray(scores, dtype=float).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if scores.shape != truth.shape:
        raise DataError(f'{scores.shape[0]} scores but {truth.shape[0]} truth values')
    if not np.all(np.isfinite(scores)):
        raise DataError('scores must be finite')
    positives, negatives = np.sort(scores[truth]), np.sort(scores[~truth])
    if positives.size == 0 or negatives.size == 0:
        raise DataError('ROC needs at least one positive and one negative sample')
    distinct = np.unique(scores)
    midpoints = (distinct[:-1] + distinct[1:]) / 2.0
    thresholds = np.concatenate([[-np.inf], midpoints, [np.inf]])
    hits = positives.size - np.searchsorted(positives, thresholds, side='right')
    false_alarms = negatives.size - np.searchsorted(negatives, thresholds, side='right')
    return RocCurve(thresholds=thresholds, p_fa=false_alarms / negatives.size, p_d=hits / positives.size)


def binary_roc(model: MulticlassModel, blocks: FeatureBlocks, labels: Sequence[str], positive: str) -> RocCurve:
    """ROC of one class's one-vs-all score with that class as the positive."""
    if positive not in model.class_names:
        raise DataError(f'unknown class {positive!r}; model classes are {list(model.class_names)}')
    label_indices([str(v) for v in labels], model.class_names)
    k = model.class_names.index(positive)
    scores = multiclass_scores(model, blocks)[:, k]
    return roc_sweep(scores, np.asarray(labels).astype(str) == positive)


def rejection_roc(model: MulticlassModel, blocks: FeatureBlocks, inlier_mask: Sequence[bool]) -> RocCurve:
    """ROC of the outlier test: P_d is the fraction of inliers kept and P_fa the fraction of
    outliers kept as the rejection threshold tau_out sweeps over the maximum class score."""
    best = multiclass_scores(model, blocks).max(axis=1)
    return roc_sweep(best, inlier_mask)
