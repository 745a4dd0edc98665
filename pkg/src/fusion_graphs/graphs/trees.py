"""Tree-structured models: Chow-Liu and discriminative tree learning.

Trees are found as maximum-weight spanning trees with networkx's Kruskal implementation.
Candidate edges are inserted in lexicographic (i, j) order and Kruskal's sort is stable, so
ties always resolve to the lexicographically smallest edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Sequence, Tuple
import logging

import networkx as nx
import numpy as np

from fusion_graphs.errors import DataError
from fusion_graphs.stats.distributions import EmpiricalModel, mutual_information

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


@dataclass(frozen=True)
class Provenance:
    kind: str  # 'generative' | 'discriminative'
    role: str  # 'p' | 'q'
    iteration: int = 0


@dataclass(frozen=True)
class TreeGraph:
    """A tree (or forest) over global variable indices with its log-probability tables.

    `node_log[i]` is log p_i, `edge_log[(i, j)]` (i < j) is log[p_ij / (p_i p_j)] indexed
    [x_i, x_j].
    """

    nodes: Tuple[int, ...]
    edges: Tuple[Pair, ...]
    node_log: Dict[int, np.ndarray] = field(repr=False)
    edge_log: Dict[Pair, np.ndarray] = field(repr=False)
    provenance: Provenance = Provenance('generative', 'p', 0)

    @classmethod
    def from_model(cls, model: EmpiricalModel, nodes: Sequence[int], edges: Iterable[Pair],
                   provenance: Provenance) -> 'TreeGraph':
        nodes = tuple(sorted(int(v) for v in nodes))
        edges = tuple(sorted((min(i, j), max(i, j)) for i, j in edges))
        node_log = {i: np.log(model.marginal(i)) for i in nodes}
        edge_log = {}
        for i, j in edges:
            joint = model.pair(i, j)
            edge_log[(i, j)] = np.log(joint) - node_log[i][:, None] - node_log[j][None, :]
        return cls(nodes=nodes, edges=edges, node_log=node_log, edge_log=edge_log, provenance=provenance)

    def cells(self, i: int) -> int:
        return int(self.node_log[i].shape[0])

    def log_likelihood(self, sample: Sequence[int]) -> float:
        return tree_log_likelihood(self, sample)

    def log_likelihood_batch(self, symbols: np.ndarray) -> np.ndarray:
        """Log-likelihood of every row of an N x n_total symbol matrix."""
        X = np.asarray(symbols, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f'symbols must be a matrix, got shape {X.shape}')
        self._check_range(X)
        total = np.zeros(X.shape[0])
        for i in self.nodes:
            total += self.node_log[i][X[:, i]]
        for (i, j) in self.edges:
            total += self.edge_log[(i, j)][X[:, i], X[:, j]]
        return total

    def _check_range(self, X: np.ndarray) -> None:
        if X.shape[-1] <= max(self.nodes):
            raise DataError(f'sample does not cover node {max(self.nodes)}')
        for i in self.nodes:
            col = X[..., i]
            if np.any(col < 0) or np.any(col >= self.cells(i)):
                raise DataError(f'symbol out of range for variable {i}')


@dataclass(frozen=True)
class TreePair:
    tree_p: TreeGraph
    tree_q: TreeGraph
    iteration: int
    j_divergence_value: float

    def __post_init__(self) -> None:
        if self.tree_p.nodes != self.tree_q.nodes:
            raise DataError('trees of a pair must span the same node set')

    @property
    def nodes(self) -> Tuple[int, ...]:
        return self.tree_p.nodes


def _max_spanning_edges(nodes: Sequence[int], weights: Dict[Pair, float], allow_forest: bool = False,
                        forest_tol: float = 0.0) -> List[Pair]:
    """Kruskal maximum spanning tree; with `allow_forest`, edges weighing <= forest_tol are cut."""
    graph = nx.Graph()
    graph.add_nodes_from(sorted(nodes))
    for (i, j) in sorted(weights):
        graph.add_edge(i, j, weight=weights[(i, j)])
    chosen = nx.maximum_spanning_edges(graph, algorithm='kruskal', weight='weight', data=False)
    edges = sorted((min(i, j), max(i, j)) for i, j in chosen)
    if allow_forest:
        edges = [e for e in edges if weights[e] > forest_tol]
    return edges


def chow_liu_tree(model: EmpiricalModel, nodes: Sequence[int], role: str = 'p', iteration: int = 0) -> TreeGraph:
    """Maximum-weight spanning tree under mutual-information edge weights."""
    nodes = sorted(int(v) for v in nodes)
    missing = set(nodes) - set(model.variables)
    if missing:
        raise DataError(f'model does not cover nodes {sorted(missing)}')
    weights = {(i, j): mutual_information(model.pair(i, j)) for i, j in combinations(nodes, 2)}
    edges = _max_spanning_edges(nodes, weights)
    return TreeGraph.from_model(model, nodes, edges, Provenance('generative', role, iteration))


def discriminative_edge_weight(p_model: EmpiricalModel, q_model: EmpiricalModel, i: int, j: int) -> float:
    """psi^p(i, j) = sum_ab [p_ij - q_ij] log[p_ij / (p_i p_j)]; swap the models for psi^q."""
    if p_model.cells.get(i) != q_model.cells.get(i) or p_model.cells.get(j) != q_model.cells.get(j):
        raise DataError(f'cell mismatch between models for pair ({i}, {j})')
    p_ij = p_model.pair(i, j)
    q_ij = q_model.pair(i, j)
    log_ratio = np.log(p_ij) - np.log(p_model.marginal(i))[:, None] - np.log(p_model.marginal(j))[None, :]
    return float(np.sum((p_ij - q_ij) * log_ratio))


def _node_divergence(p_model: EmpiricalModel, q_model: EmpiricalModel, nodes: Iterable[int]) -> float:
    total = 0.0
    for i in nodes:
        p_i, q_i = p_model.marginal(i), q_model.marginal(i)
        total += float(np.sum((p_i - q_i) * np.log(p_i / q_i)))
    return total


def tree_approx_j_divergence(pair: TreePair, p_model: EmpiricalModel, q_model: EmpiricalModel) -> float:
    """Closed-form sum_x (p - q) log(p_hat / q_hat) under the pair's tree factorizations."""
    value = _node_divergence(p_model, q_model, pair.nodes)
    value += sum(discriminative_edge_weight(p_model, q_model, i, j) for i, j in pair.tree_p.edges)
    value += sum(discriminative_edge_weight(q_model, p_model, i, j) for i, j in pair.tree_q.edges)
    return value


def learn_discriminative_tree_pair(p_model: EmpiricalModel, q_model: EmpiricalModel, nodes: Sequence[int],
                                   allow_forest: bool = False, iteration: int = 0,
                                   forest_tol: float = 0.0) -> TreePair:
    nodes = sorted(int(v) for v in nodes)
    for model in (p_model, q_model):
        missing = set(nodes) - set(model.variables)
        if missing:
            raise DataError(f'model does not cover nodes {sorted(missing)}')
    pairs = list(combinations(nodes, 2))
    psi_p = {(i, j): discriminative_edge_weight(p_model, q_model, i, j) for i, j in pairs}
    psi_q = {(i, j): discriminative_edge_weight(q_model, p_model, i, j) for i, j in pairs}
    tree_p = TreeGraph.from_model(p_model, nodes, _max_spanning_edges(nodes, psi_p, allow_forest, forest_tol),
                                  Provenance('discriminative', 'p', iteration))
    tree_q = TreeGraph.from_model(q_model, nodes, _max_spanning_edges(nodes, psi_q, allow_forest, forest_tol),
                                  Provenance('discriminative', 'q', iteration))
    pair = TreePair(tree_p=tree_p, tree_q=tree_q, iteration=iteration, j_divergence_value=0.0)
    j_value = tree_approx_j_divergence(pair, p_model, q_model)
    logger.debug('Discriminative pair t=%d over %d nodes: J=%.6f', iteration, len(nodes), j_value)
    return TreePair(tree_p=tree_p, tree_q=tree_q, iteration=iteration, j_divergence_value=j_value)


def learn_generative_tree_pair(p_model: EmpiricalModel, q_model: EmpiricalModel, nodes: Sequence[int],
                               iteration: int = 0) -> TreePair:
    """Chow-Liu tree per class, scored with the same tree-approximate J-divergence."""
    tree_p = chow_liu_tree(p_model, nodes, role='p', iteration=iteration)
    tree_q = chow_liu_tree(q_model, nodes, role='q', iteration=iteration)
    pair = TreePair(tree_p=tree_p, tree_q=tree_q, iteration=iteration, j_divergence_value=0.0)
    j_value = tree_approx_j_divergence(pair, p_model, q_model)
    return TreePair(tree_p=tree_p, tree_q=tree_q, iteration=iteration, j_divergence_value=j_value)


def tree_log_likelihood(tree: TreeGraph, sample: Sequence[int]) -> float:
    x = np.asarray(sample, dtype=np.int64).ravel()
    tree._check_range(x)
    value = sum(float(tree.node_log[i][x[i]]) for i in tree.nodes)
    value += sum(float(tree.edge_log[(i, j)][x[i], x[j]]) for i, j in tree.edges)
    return value


def concat_trees(trees: Sequence[TreeGraph], provenance: Provenance) -> TreeGraph:
    """Disjoint union of trees over non-overlapping node sets."""
    node_log: Dict[int, np.ndarray] = {}
    edge_log: Dict[Pair, np.ndarray] = {}
    for tree in trees:
        if set(tree.nodes) & set(node_log):
            raise DataError('trees to concatenate must have disjoint node sets')
        node_log.update(tree.node_log)
        edge_log.update(tree.edge_log)
    return TreeGraph(
        nodes=tuple(sorted(node_log)),
        edges=tuple(sorted(edge_log)),
        node_log=node_log,
        edge_log=edge_log,
        provenance=provenance,
    )
