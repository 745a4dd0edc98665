"""Feature-fusion classifiers over M feature sets.

A binary model quantizes each feature set, learns a disjoint forest of per-set tree pairs and
thickens it by boosting. The multi-class model is K one-vs-all binary models decided by the
largest log-likelihood ratio, with an optional outlier threshold on that maximum.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import logging

import numpy as np

from fusion_graphs.config import FusionConfig
from fusion_graphs.errors import DataError
from fusion_graphs.graphs.boosting import (
    P_LABEL,
    Q_LABEL,
    BoostedModel,
    strong_llr,
    strong_llr_batch,
    thicken,
)
from fusion_graphs.stats.distributions import Quantizer, WeightedDataset, fit_quantizer

logger = logging.getLogger(__name__)

FeatureBlocks = Sequence[np.ndarray]


@dataclass(frozen=True)
class FeatureLayout:
    dims: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.dims or any(int(m) < 1 for m in self.dims):
            raise DataError(f'invalid layout {self.dims}: every feature set needs at least one dimension')
        object.__setattr__(self, 'dims', tuple(int(m) for m in self.dims))

    @classmethod
    def parse(cls, text: str) -> 'FeatureLayout':
        try:
            dims = tuple(int(part) for part in text.split(',') if part.strip())
        except ValueError as exc:
            raise DataError(f'invalid layout {text!r}: expected comma-separated integers') from exc
        return cls(dims)

    @property
    def m(self) -> int:
        return len(self.dims)

    @property
    def offsets(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.dims)]))

    @property
    def n_total(self) -> int:
        return int(sum(self.dims))

    def split(self, matrix: np.ndarray) -> List[np.ndarray]:
        """Split an N x n_total matrix into the M column blocks."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != self.n_total:
            raise DataError(f'expected {self.n_total} feature columns, got shape {matrix.shape}')
        offsets = self.offsets
        return [matrix[:, a:b] for a, b in zip(offsets[:-1], offsets[1:])]

    def __str__(self) -> str:
        return ','.join(str(m) for m in self.dims)


@dataclass(frozen=True)
class BinaryFusionModel:
    layout: FeatureLayout
    quantizers: Tuple[Quantizer, ...]
    boosted: BoostedModel
    p_label: str
    q_label: str

    @property
    def tau(self) -> float:
        return self.boosted.tau

    def with_tau(self, tau: float) -> 'BinaryFusionModel':
        boosted = BoostedModel(rounds=self.boosted.rounds, offsets=self.boosted.offsets, tau=float(tau),
                               clamp=self.boosted.clamp)
        return BinaryFusionModel(self.layout, self.quantizers, boosted, self.p_label, self.q_label)

    def symbols(self, sample: Sequence[Sequence[float]]) -> np.ndarray:
        vectors = _as_sample(sample, self.layout)
        return np.concatenate([q.quantize(v) for q, v in zip(self.quantizers, vectors)])

    def symbol_matrix(self, blocks: FeatureBlocks) -> np.ndarray:
        blocks = _as_blocks(blocks, self.layout)
        return np.hstack([q.quantize_matrix(b) for q, b in zip(self.quantizers, blocks)])


@dataclass(frozen=True)
class MulticlassModel:
    submodels: Tuple[BinaryFusionModel, ...]
    class_names: Tuple[str, ...]
    tau_out: float = float('-inf')

    def __post_init__(self) -> None:
        if len(self.submodels) < 2 or len(self.submodels) != len(self.class_names):
            raise DataError('a multi-class model needs one submodel per class and at least two classes')
        layouts = {m.layout for m in self.submodels}
        if len(layouts) != 1:
            raise DataError('all submodels must share one feature layout')

    @property
    def layout(self) -> FeatureLayout:
        return self.submodels[0].layout

    @property
    def k(self) -> int:
        return len(self.submodels)

    def with_tau_out(self, tau_out: float) -> 'MulticlassModel':
        return MulticlassModel(self.submodels, self.class_names, float(tau_out))


def _as_sample(sample: Sequence[Sequence[float]], layout: FeatureLayout) -> List[np.ndarray]:
    if len(sample) != layout.m:
        raise DataError(f'dimension mismatch: expected {layout.m} feature vectors, got {len(sample)}')
    vectors = [np.asarray(v, dtype=float).ravel() for v in sample]
    for i, (v, m) in enumerate(zip(vectors, layout.dims)):
        if v.shape[0] != m:
            raise DataError(f'dimension mismatch in feature set {i}: expected {m}, got {v.shape[0]}')
    return vectors


def _as_blocks(blocks: FeatureBlocks, layout: FeatureLayout) -> List[np.ndarray]:
    if len(blocks) != layout.m:
        raise DataError(f'dimension mismatch: expected {layout.m} feature sets, got {len(blocks)}')
    arrays = [np.asarray(b, dtype=float) for b in blocks]
    rows = {a.shape[0] for a in arrays}
    if len(rows) != 1:
        raise DataError('feature sets disagree on the number of samples')
    for i, (a, m) in enumerate(zip(arrays, layout.dims)):
        if a.ndim != 2 or a.shape[1] != m:
            raise DataError(f'dimension mismatch in feature set {i}: expected {m} columns, got shape {a.shape}')
    return arrays


def _initial_weights(n_p: int, n_q: int, rebalance: bool) -> np.ndarray:
    if rebalance:
        return np.concatenate([np.full(n_p, 0.5 / n_p), np.full(n_q, 0.5 / n_q)])
    n = n_p + n_q
    return np.full(n, 1.0 / n)


def train_binary(features_p: FeatureBlocks, features_q: FeatureBlocks, config: FusionConfig,
                 p_label: str = 'p', q_label: str = 'q') -> BinaryFusionModel:
    """Quantize, learn the per-set forest pair and thicken it (class p against class q)."""
    if len(features_p) != len(features_q) or not features_p:
        raise DataError('both classes need the same, nonzero number of feature sets')
    layout = FeatureLayout(tuple(np.asarray(b).shape[1] if np.asarray(b).ndim == 2 else 0 for b in features_p))
    blocks_p = _as_blocks(features_p, layout)
    blocks_q = _as_blocks(features_q, layout)
    n_p, n_q = blocks_p[0].shape[0], blocks_q[0].shape[0]
    if n_p == 0 or n_q == 0:
        raise DataError(f'empty class: {p_label!r} has {n_p} samples, {q_label!r} has {n_q}')
    if n_p < 2 or n_q < 2:
        raise DataError(f'need at least 2 samples per class ({p_label!r}: {n_p}, {q_label!r}: {n_q})')

    quantizers = tuple(fit_quantizer(np.vstack([bp, bq]), config.bins) for bp, bq in zip(blocks_p, blocks_q))
    symbols = np.vstack([
        np.hstack([q.quantize_matrix(b) for q, b in zip(quantizers, blocks_p)]),
        np.hstack([q.quantize_matrix(b) for q, b in zip(quantizers, blocks_q)]),
    ])
    labels = np.concatenate([np.full(n_p, P_LABEL), np.full(n_q, Q_LABEL)])
    cells = tuple(c for q in quantizers for c in q.cells)
    ds = WeightedDataset(symbols=symbols, labels=labels, weights=_initial_weights(n_p, n_q, config.rebalance),
                         cells=cells)
    boosted = thicken(ds, layout.offsets, config)
    logger.info('Trained %r vs %r: %d rounds over %d variables', p_label, q_label, len(boosted.rounds),
                layout.n_total)
    return BinaryFusionModel(layout=layout, quantizers=quantizers, boosted=boosted, p_label=p_label, q_label=q_label)


def classify(model: BinaryFusionModel, sample: Sequence[Sequence[float]]) -> Tuple[str, float]:
    score = strong_llr(model.boosted, model.symbols(sample))
    label = model.p_label if score > model.tau else model.q_label
    return label, score


def score_batch(model: BinaryFusionModel, blocks: FeatureBlocks) -> np.ndarray:
    return strong_llr_batch(model.boosted, model.symbol_matrix(blocks))


def _pool(blocks_by_class: Sequence[FeatureBlocks]) -> List[np.ndarray]:
    return [np.vstack(parts) for parts in zip(*blocks_by_class)]


def _train_one_vs_all(name: str, features: Mapping[str, FeatureBlocks], config: FusionConfig) -> BinaryFusionModel:
    # complement pooled in sorted class order so the submodel does not depend on class order
    others = [features[other] for other in sorted(features) if other != name]
    return train_binary(features[name], _pool(others), config, p_label=name, q_label=f'not {name}')


def _check_classes(features: Mapping[str, FeatureBlocks]) -> None:
    for name, blocks in features.items():
        if not len(blocks) or np.asarray(blocks[0]).shape[0] == 0:
            raise DataError(f'empty class {name!r}')


def train_multiclass(features: Mapping[str, FeatureBlocks], config: FusionConfig) -> MulticlassModel:
    """One-vs-all training; submodels are independent and may train in parallel.

    Classes are indexed in sorted name order, which is also the tie order of the argmax.
    """
    if len(features) < 2:
        raise DataError(f'need at least 2 classes, got {len(features)}')
    _check_classes(features)
    names = sorted(features)
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        submodels = list(pool.map(lambda name: _train_one_vs_all(name, features, config), names))
    return MulticlassModel(submodels=tuple(submodels), class_names=tuple(names), tau_out=config.tau_out)


def add_class(model: MulticlassModel, features: Mapping[str, FeatureBlocks], name: str,
              new_features: FeatureBlocks, config: FusionConfig, retrain: bool = False) -> MulticlassModel:
    """Include a new class.

    By default only the new class-vs-rest submodel is learned and the existing submodels are
    kept as they are; `retrain=True` relearns all submodels with the new class in every
    complement.
    """
    if name in model.class_names:
        raise DataError(f'class {name!r} already in the model')
    missing = set(model.class_names) - set(features)
    if missing:
        raise DataError(f'training features missing for classes {sorted(missing)}')
    known = {n: features[n] for n in model.class_names}
    extended = {**known, name: new_features}
    if retrain:
        return train_multiclass(extended, config.updated(tau_out=model.tau_out))
    _check_classes(extended)
    submodel = _train_one_vs_all(name, extended, config)
    if submodel.layout != model.layout:
        raise DataError(f'new class layout {submodel.layout} differs from model layout {model.layout}')
    logger.info('Added class %r without retraining %d existing submodels', name, model.k)
    return MulticlassModel(submodels=model.submodels + (submodel,), class_names=model.class_names + (name,),
                           tau_out=model.tau_out)


def multiclass_scores(model: MulticlassModel, blocks: FeatureBlocks) -> np.ndarray:
    """N x K matrix of submodel LLRs."""
    return np.column_stack([score_batch(m, blocks) for m in model.submodels])


def classify_multiclass(model: MulticlassModel, sample: Sequence[Sequence[float]]) -> Tuple[int, np.ndarray]:
    """Index of the winning class (lowest index on ties) and the K scores."""
    scores = np.array([strong_llr(m.boosted, m.symbols(sample)) for m in model.submodels])
    return int(np.argmax(scores)), scores


def predict_batch(model: MulticlassModel, blocks: FeatureBlocks) -> Tuple[np.ndarray, np.ndarray]:
    scores = multiclass_scores(model, blocks)
    return np.argmax(scores, axis=1), scores


def reject_outlier(model: MulticlassModel, sample: Sequence[Sequence[float]]) -> bool:
    _, scores = classify_multiclass(model, sample)
    return bool(scores.max() < model.tau_out)


def class_features(blocks: FeatureBlocks, labels: Sequence[str],
                   order: Optional[Sequence[str]] = None) -> Dict[str, List[np.ndarray]]:
    """Group row-aligned feature blocks by label (first-appearance order unless given)."""
    labels = np.asarray(labels).astype(str)
    names = list(order) if order is not None else list(dict.fromkeys(labels.tolist()))
    grouped: Dict[str, List[np.ndarray]] = {}
    for name in names:
        mask = labels == name
        grouped[name] = [np.asarray(b, dtype=float)[mask] for b in blocks]
    return grouped
