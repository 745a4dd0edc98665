"""Accuracy as a function of training-set size, averaged over seeded random subsets."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from fusion_graphs.classify.fusion import class_features, train_multiclass
from fusion_graphs.config import FusionConfig
from fusion_graphs.errors import DataError
from fusion_graphs.evaluation.metrics import evaluate
from fusion_graphs.features.tabular import FeatureTable

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = 10


@dataclass(frozen=True)
class SweepPoint:
    size: int
    mean: float
    std: float
    accuracies: Tuple[float, ...]


@dataclass(frozen=True)
class SweepResult:
    points: Tuple[SweepPoint, ...]
    seeds: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'size': [p.size for p in self.points],
            'mean_accuracy': [p.mean for p in self.points],
            'std_accuracy': [p.std for p in self.points],
        })


def _rows_by_class(table: FeatureTable) -> Dict[str, np.ndarray]:
    if table.labels is None:
        raise DataError('training data needs labels')
    return {name: np.flatnonzero(table.labels == name) for name in table.class_names()}


def stratified_subset(table: FeatureTable, size: int, rng: np.random.Generator) -> FeatureTable:
    """`size` samples drawn without replacement from every class; original row order is kept."""
    rows = []
    for name, idx in _rows_by_class(table).items():
        if size > idx.size:
            raise DataError(f'training size {size} exceeds the {idx.size} samples of class {name!r}')
        rows.append(rng.choice(idx, size=size, replace=False))
    return table.subset(np.sort(np.concatenate(rows)))


def holdout_split(table: FeatureTable, fraction: float, seed: int = 0) -> Tuple[FeatureTable, FeatureTable]:
    """Stratified split into (train, test); every class keeps at least one sample on each side."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f'hold-out fraction must be in (0, 1), got {fraction}')
    rng = np.random.default_rng([seed, 0xB0])
    train_rows, test_rows = [], []
    for name, idx in _rows_by_class(table).items():
        if idx.size < 2:
            raise DataError(f'class {name!r} has {idx.size} sample(s); a hold-out split needs 2')
        n_test = min(max(int(round(fraction * idx.size)), 1), idx.size - 1)
        shuffled = rng.permutation(idx)
        test_rows.append(shuffled[:n_test])
        train_rows.append(shuffled[n_test:])
    return table.subset(np.sort(np.concatenate(train_rows))), table.subset(np.sort(np.concatenate(test_rows)))


def _accuracy(train: FeatureTable, test: FeatureTable, config: FusionConfig) -> float:
    model = train_multiclass(class_features(train.blocks, train.labels, train.class_names()), config)
    return evaluate(model, test.blocks, test.labels).accuracy


def training_size_sweep(train: FeatureTable, test: FeatureTable, sizes: Sequence[int],
                        seeds: int = DEFAULT_SEEDS, config: FusionConfig = None, seed: int = 0) -> SweepResult:
    """Train on stratified subsets of `size` samples per class and evaluate on the fixed test set.

    Cell (size, s) draws from default_rng([seed, size, s]), so results do not depend on the
    order or parallelism of the cells.
    """
    config = config or FusionConfig()
    if seeds < 1:
        raise DataError(f'seed count must be >= 1, got {seeds}')
    if not sizes:
        raise DataError('no training sizes given')
    if test.labels is None:
        raise DataError('test data needs labels')
    per_class = {name: idx.size for name, idx in _rows_by_class(train).items()}
    for size in sizes:
        if size < 2:
            raise DataError(f'training size must be >= 2, got {size}')
        too_small = [name for name, n in per_class.items() if size > n]
        if too_small:
            raise DataError(f'training size {size} exceeds the samples of classes {too_small}')

    cells = list(product(sizes, range(seeds)))
    cell_config = config.updated(workers=1)

    def run(cell: Tuple[int, int]) -> float:
        size, s = cell
        subset = stratified_subset(train, size, np.random.default_rng([seed, size, s]))
        return _accuracy(subset, test, cell_config)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        accuracies = list(pool.map(run, cells))

    points: List[SweepPoint] = []
    for k, size in enumerate(sizes):
        acc = np.asarray(accuracies[k * seeds:(k + 1) * seeds])
        points.append(SweepPoint(size=int(size), mean=float(acc.mean()), std=float(acc.std()),
                                 accuracies=tuple(acc.tolist())))
        logger.info('Training size %d: accuracy %.4f +/- %.4f over %d seeds', size, acc.mean(), acc.std(), seeds)
    return SweepResult(points=tuple(points), seeds=seeds)
