"""Quantization and smoothed empirical probability tables.

Continuous features are discretized per dimension by quantile binning; every tree model in the
package is built on the node and pairwise tables estimated here. All logarithms are natural.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from fusion_graphs.errors import DataError

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-8
WEIGHT_SUM_TOL = 1e-12

Pair = Tuple[int, int]


@dataclass(frozen=True)
class Quantizer:
    """Per-dimension bin edges; `edges[d]` is strictly increasing and may be empty."""

    edges: Tuple[Tuple[float, ...], ...]
    bins: int

    @property
    def dims(self) -> int:
        return len(self.edges)

    @property
    def cells(self) -> Tuple[int, ...]:
        return tuple(len(e) + 1 for e in self.edges)

    def quantize(self, x: Sequence[float]) -> np.ndarray:
        return quantize(self, x)

    def quantize_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dims:
            raise DataError(f'dimension mismatch: expected {self.dims} columns, got shape {X.shape}')
        if not np.all(np.isfinite(X)):
            raise DataError('non-finite values in input')
        out = np.empty(X.shape, dtype=np.int64)
        for d, edges in enumerate(self.edges):
            out[:, d] = np.searchsorted(np.asarray(edges, dtype=float), X[:, d], side='right')
        return out


def fit_quantizer(columns: np.ndarray, bins: int) -> Quantizer:
    """Place edges at the empirical k/B quantiles (linear interpolation) of each column.

    Duplicate edges collapse, and an edge at or below the column minimum would leave the lowest
    cell empty, so it is dropped too; a constant column therefore gets no edges at all.
    """
    X = np.asarray(columns, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError('fit_quantizer needs at least one sample')
    if bins < 2:
        raise DataError(f'bins must be >= 2, got {bins}')
    if not np.all(np.isfinite(X)):
        raise DataError('non-finite values in input')
    probs = np.arange(1, bins) / bins
    edges: List[Tuple[float, ...]] = []
    for d in range(X.shape[1]):
        col = X[:, d]
        qs = np.unique(np.quantile(col, probs))
        qs = qs[qs > col.min()]
        edges.append(tuple(float(v) for v in qs))
    return Quantizer(edges=tuple(edges), bins=bins)


def quantize(q: Quantizer, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != q.dims:
        raise DataError(f'dimension mismatch: quantizer has {q.dims} dimensions, sample has {x.shape[0]}')
    if not np.all(np.isfinite(x)):
        raise DataError('non-finite values in input')
    return np.array(
        [np.searchsorted(np.asarray(e, dtype=float), v, side='right') for e, v in zip(q.edges, x)],
        dtype=np.int64,
    )


@dataclass(frozen=True)
class WeightedDataset:
    """Discrete samples with labels and a probability distribution over samples.

    `symbols` is N x n_total, `cells[v]` is the alphabet size of variable v.
    """

    symbols: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    cells: Tuple[int, ...]

    def __post_init__(self) -> None:
        symbols = np.asarray(self.symbols, dtype=np.int64)
        labels = np.asarray(self.labels)
        weights = np.asarray(self.weights, dtype=float)
        if symbols.ndim != 2:
            raise DataError(f'symbols must be a matrix, got shape {symbols.shape}')
        n = symbols.shape[0]
        if labels.shape != (n,) or weights.shape != (n,):
            raise DataError('labels and weights must have one entry per sample')
        if symbols.shape[1] != len(self.cells):
            raise DataError(f'{symbols.shape[1]} variables but {len(self.cells)} cell counts')
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise DataError(f'weights must be nonnegative and sum to 1 (sum={weights.sum():.15f})')
        if n and (symbols.min() < 0 or np.any(symbols.max(axis=0) >= np.asarray(self.cells))):
            raise DataError('symbols outside quantizer cell ranges')
        object.__setattr__(self, 'symbols', symbols)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, symbols: np.ndarray, labels: np.ndarray, cells: Sequence[int]) -> 'WeightedDataset':
        n = np.asarray(symbols).shape[0]
        if n == 0:
            raise DataError('no samples')
        return cls(symbols=symbols, labels=labels, weights=np.full(n, 1.0 / n), cells=tuple(cells))

    @property
    def size(self) -> int:
        return int(self.symbols.shape[0])

    def with_weights(self, weights: np.ndarray) -> 'WeightedDataset':
        return WeightedDataset(symbols=self.symbols, labels=self.labels, weights=weights, cells=self.cells)

    def class_mass(self, label) -> float:
        return float(self.weights[self.labels == label].sum())

    def restrict(self, label) -> 'WeightedDataset':
        """Samples of one class with their weights renormalized to a distribution."""
        mask = self.labels == label
        mass = float(self.weights[mask].sum())
        if not mask.any() or mass <= 0.0:
            raise DataError(f'no training mass for class {label!r}')
        return WeightedDataset(
            symbols=self.symbols[mask],
            labels=self.labels[mask],
            weights=self.weights[mask] / mass,
            cells=self.cells,
        )


@dataclass(frozen=True)
class EmpiricalModel:
    """Smoothed node marginals and pairwise joints over a set of variables.

    `pairwise[(i, j)]` (i < j) is indexed [x_i, x_j]. Node marginals are row/column sums of a
    designated partner table, so marginal consistency holds by construction.
    """

    variables: Tuple[int, ...]
    cells: Dict[int, int]
    alpha: float
    marginals: Dict[int, np.ndarray] = field(repr=False)
    pairwise: Dict[Pair, np.ndarray] = field(repr=False)

    def marginal(self, i: int) -> np.ndarray:
        return self.marginals[i]

    def pair(self, i: int, j: int) -> np.ndarray:
        """Joint table indexed [x_i, x_j] regardless of argument order."""
        if i < j:
            return self.pairwise[(i, j)]
        return self.pairwise[(j, i)].T

    @classmethod
    def from_joint(cls, joint: np.ndarray, variables: Optional[Sequence[int]] = None) -> 'EmpiricalModel':
        """Model whose tables are the exact marginals of a full joint pmf (one axis per variable)."""
        joint = np.asarray(joint, dtype=float)
        if np.any(joint <= 0) or abs(joint.sum() - 1.0) > NORMALIZATION_TOL:
            raise DataError('joint pmf must be strictly positive and normalized')
        variables = tuple(range(joint.ndim)) if variables is None else tuple(variables)
        if len(variables) != joint.ndim:
            raise DataError('one variable index per joint axis is required')
        axes = range(joint.ndim)
        pairwise: Dict[Pair, np.ndarray] = {}
        for a, b in combinations(axes, 2):
            table = joint.sum(axis=tuple(k for k in axes if k not in (a, b)))
            pairwise[_ordered(variables[a], variables[b])] = table if variables[a] < variables[b] else table.T
        marginals = {
            variables[a]: joint.sum(axis=tuple(k for k in axes if k != a)) for a in axes
        }
        cells = {variables[a]: joint.shape[a] for a in axes}
        return cls(variables=variables, cells=cells, alpha=0.0, marginals=marginals, pairwise=pairwise)


def _ordered(i: int, j: int) -> Pair:
    return (i, j) if i < j else (j, i)


def _smoothed_pair(a: np.ndarray, b: np.ndarray, weights: np.ndarray, ca: int, cb: int, alpha: float) -> np.ndarray:
    counts = np.bincount(a * cb + b, weights=weights, minlength=ca * cb).reshape(ca, cb)
    table = counts + alpha / (ca * cb)
    return table / table.sum()


def fit_empirical_model(ds: WeightedDataset, variables: Sequence[int], alpha: float,
                        label=None) -> EmpiricalModel:
    """Weighted, additively smoothed tables for `variables` of one class.

    With `label` given, the dataset is first restricted to that class. The partner of node i
    for its marginal is the next variable in `variables` (the previous one for the last node).
    """
    if alpha <= 0:
        raise DataError(f'alpha must be > 0, got {alpha}')
    if label is not None:
        ds = ds.restrict(label)
    if ds.size == 0 or ds.weights.sum() <= 0.0:
        raise DataError('no training mass')
    variables = tuple(int(v) for v in variables)
    if not variables:
        raise DataError('at least one variable is required')
    cells = {v: int(ds.cells[v]) for v in variables}
    X, w = ds.symbols, ds.weights

    pairwise: Dict[Pair, np.ndarray] = {}
    for i, j in combinations(sorted(variables), 2):
        pairwise[(i, j)] = _smoothed_pair(X[:, i], X[:, j], w, cells[i], cells[j], alpha)

    marginals: Dict[int, np.ndarray] = {}
    if len(variables) == 1:
        v = variables[0]
        counts = np.bincount(X[:, v], weights=w, minlength=cells[v]) + alpha / cells[v]
        marginals[v] = counts / counts.sum()
    else:
        for k, v in enumerate(variables):
            partner = variables[k + 1] if k + 1 < len(variables) else variables[k - 1]
            table = pairwise[_ordered(v, partner)]
            marginals[v] = table.sum(axis=1) if v < partner else table.sum(axis=0)
    logger.debug('Fitted empirical model over %d variables (%d pairs)', len(variables), len(pairwise))
    return EmpiricalModel(variables=variables, cells=cells, alpha=alpha, marginals=marginals, pairwise=pairwise)


def _check_table(table: np.ndarray, name: str = 'table') -> np.ndarray:
    table = np.asarray(table, dtype=float)
    if abs(table.sum() - 1.0) > NORMALIZATION_TOL:
        raise DataError(f'{name} is not normalized (sum={table.sum():.12f})')
    return table


def mutual_information(joint: np.ndarray) -> float:
    """I(X;Y) in nats of a 2-D joint table, using the table's own marginals."""
    p = _check_table(joint, 'joint table')
    if p.ndim != 2:
        raise DataError(f'joint table must be 2-D, got shape {p.shape}')
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    mask = p > 0
    mi = float(np.sum(p[mask] * np.log(p[mask] / (px * py)[mask])))
    # rounding can leave a tiny negative value for product tables
    return max(mi, 0.0)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    p = _check_table(p, 'p')
    q = _check_table(q, 'q')
    if p.shape != q.shape:
        raise DataError(f'shape mismatch: {p.shape} vs {q.shape}')
    if np.any(p <= 0) or np.any(q <= 0):
        raise DataError('kl_divergence requires strictly positive tables')
    return float(np.sum(p * np.log(p / q)))
