from itertools import product
from typing import Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np
import pytest

from fusion_graphs.config import FusionConfig
from fusion_graphs.evaluation.synth import SynthClass, SynthSpec
from fusion_graphs.graphs.trees import TreeGraph
from fusion_graphs.stats.distributions import WeightedDataset


def random_joint(rng: np.random.Generator, cells: Sequence[int]) -> np.ndarray:
    joint = rng.random(tuple(cells)) + 0.05
    return joint / joint.sum()


def spanning_trees(nodes: Sequence[int]) -> List[List[Tuple[int, int]]]:
    """Every labeled spanning tree over `nodes` (Cayley enumeration through Pruefer sequences)."""
    nodes = list(nodes)
    n = len(nodes)
    if n == 1:
        return [[]]
    trees = []
    for seq in product(range(n), repeat=n - 2):
        graph = nx.from_prufer_sequence(list(seq))
        trees.append(sorted((min(nodes[a], nodes[b]), max(nodes[a], nodes[b])) for a, b in graph.edges))
    return trees


def tree_log_pmf(tree: TreeGraph, cells: Sequence[int]) -> Dict[Tuple[int, ...], float]:
    out = {}
    for x in product(*(range(c) for c in cells)):
        out[x] = tree.log_likelihood(x)
    return out


def brute_force_j(p_joint: np.ndarray, q_joint: np.ndarray, tree_p: TreeGraph, tree_q: TreeGraph) -> float:
    total = 0.0
    for x in product(*(range(c) for c in p_joint.shape)):
        total += (p_joint[x] - q_joint[x]) * (tree_p.log_likelihood(x) - tree_q.log_likelihood(x))
    return total


def binary_dataset(symbols_p: np.ndarray, symbols_q: np.ndarray, cells: Sequence[int]) -> WeightedDataset:
    symbols = np.vstack([symbols_p, symbols_q])
    labels = np.concatenate([np.ones(len(symbols_p), dtype=int), -np.ones(len(symbols_q), dtype=int)])
    return WeightedDataset.uniform(symbols, labels, cells)


def fusion_spec(n: int = 500, rho: float = 0.8, dims=(4, 4, 4)) -> SynthSpec:
    """Two classes, cross-set couplings active under `p` only; chains differ in strength."""
    return SynthSpec(
        dims=list(dims),
        cells=2,
        rho=rho,
        jitter=0.9,
        classes=[
            SynthClass(name='p', n=n, within=0.6, coupled=True),
            SynthClass(name='q', n=n, within=0.4, coupled=False),
        ],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def quick_config() -> FusionConfig:
    return FusionConfig(bins=4, alpha=1.0, t_max=3, j_tol=1e-3, seed=0, workers=1)
