"""Synthetic multi-feature-set data from per-class tree-structured distributions.

Within every feature set the variables form a chain (variable a is the parent of a + 1). A
coupling joins the variable of one set to the first variable of a later set; it is active only
for classes marked `coupled`, otherwise the coupled variable stays an independent root. A child
copies its parent with probability s (the chain's `within`, or `rho` on a coupling) and is drawn
uniformly otherwise. Emitted features are symbol + jitter * U[0, 1).

A class may instead list its own parent -> child `edges`; they replace the chains and couplings
for that class, and an edge between two feature sets copies with probability `rho`.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Tuple
import json
import logging

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from fusion_graphs.classify.fusion import FeatureLayout
from fusion_graphs.errors import ConfigError, DataError
from fusion_graphs.features.tabular import FeatureTable

logger = logging.getLogger(__name__)


class SynthClass(BaseModel):
    name: str
    n: int = Field(ge=1)
    within: float = Field(default=0.5, ge=0.0, le=1.0)
    coupled: bool = False
    mode: int = Field(default=0, ge=0)
    bias: float = Field(default=0.0, ge=0.0, le=1.0)
    # parent -> child; replaces the default chains and couplings for this class
    edges: Optional[List[Tuple[int, int]]] = None


class SynthSpec(BaseModel):
    dims: List[int] = Field(min_length=1)
    cells: int = Field(default=2, ge=2)
    rho: float = Field(default=0.8, ge=0.0, lt=1.0)
    couplings: Optional[List[Tuple[int, int]]] = None
    jitter: float = Field(default=0.9, gt=0.0, le=1.0)
    classes: List[SynthClass] = Field(min_length=2)

    @model_validator(mode='after')
    def _check(self) -> 'SynthSpec':
        if any(m < 1 for m in self.dims):
            raise ValueError('every feature set needs at least one variable')
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValueError('class names must be unique')
        if any(c.mode >= self.cells for c in self.classes):
            raise ValueError('class mode must be a valid symbol')
        offsets = self.offsets
        starts = set(offsets[:-1])
        for u, v in self.coupling_edges:
            if not (0 <= u < offsets[-1] and 0 <= v < offsets[-1]):
                raise ValueError(f'coupling ({u}, {v}) outside the {offsets[-1]} variables')
            if v not in starts:
                raise ValueError(f'coupled variable {v} must be the first variable of its feature set')
            if self.set_of(u) >= self.set_of(v):
                raise ValueError(f'coupling ({u}, {v}) must go from an earlier to a later feature set')
        if not _is_tree_forest(self._graph_of(self._default_edges(coupled=True))):
            raise ValueError('couplings must keep the variable graph a forest with one parent per variable')
        for c in self.classes:
            if c.edges is None:
                continue
            for u, v in c.edges:
                if not (0 <= u < offsets[-1] and 0 <= v < offsets[-1]) or u == v:
                    raise ValueError(f'edge ({u}, {v}) of class {c.name!r} does not join two of the '
                                     f'{offsets[-1]} variables')
            undirected = {frozenset(e) for e in c.edges}
            if len(undirected) != len(c.edges) or not _is_tree_forest(self._graph_of(c.edges)):
                raise ValueError(f'edges of class {c.name!r} must form a forest with one parent per variable')
        return self

    @property
    def offsets(self) -> Tuple[int, ...]:
        return FeatureLayout(tuple(self.dims)).offsets

    @property
    def layout(self) -> FeatureLayout:
        return FeatureLayout(tuple(self.dims))

    def set_of(self, var: int) -> int:
        return int(np.searchsorted(np.asarray(self.offsets), var, side='right') - 1)

    @property
    def coupling_edges(self) -> List[Tuple[int, int]]:
        if self.couplings is not None:
            return [(int(u), int(v)) for u, v in self.couplings]
        offsets = self.offsets
        # default: last variable of set i drives the first variable of set i + 1
        return [(offsets[i + 1] - 1, offsets[i + 1]) for i in range(len(self.dims) - 1)]

    def _default_edges(self, coupled: bool) -> List[Tuple[int, int]]:
        offsets = self.offsets
        edges = [(a, a + 1) for start, stop in zip(offsets[:-1], offsets[1:]) for a in range(start, stop - 1)]
        return edges + self.coupling_edges if coupled else edges

    def class_edges(self, cls: SynthClass) -> List[Tuple[int, int]]:
        if cls.edges is not None:
            return [(int(u), int(v)) for u, v in cls.edges]
        return self._default_edges(cls.coupled)

    def _graph_of(self, edges: List[Tuple[int, int]]) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.offsets[-1]))
        for u, v in edges:
            graph.add_edge(int(u), int(v), coupling=self.set_of(u) != self.set_of(v))
        return graph

    def graph(self, cls: SynthClass) -> nx.DiGraph:
        """Parent -> child edges of one class; `coupling` marks edges that cross feature sets."""
        return self._graph_of(self.class_edges(cls))

    def class_named(self, name: str) -> SynthClass:
        for c in self.classes:
            if c.name == name:
                return c
        raise DataError(f'unknown synthetic class {name!r}')


def _is_tree_forest(graph: nx.DiGraph) -> bool:
    return all(d <= 1 for _, d in graph.in_degree()) and nx.is_forest(graph)


def load_synth_spec(path: Path) -> SynthSpec:
    path = Path(path)
    if not path.exists():
        raise DataError(f'synthetic spec not found: {path}')
    try:
        return SynthSpec.model_validate(json.loads(path.read_text(encoding='utf-8')))
    except ValueError as exc:
        raise ConfigError(f'invalid synthetic spec {path}: {exc}') from exc


def _root_pmf(spec: SynthSpec, cls: SynthClass) -> np.ndarray:
    pmf = np.full(spec.cells, (1.0 - cls.bias) / spec.cells)
    pmf[cls.mode] += cls.bias
    return pmf


def _strength(spec: SynthSpec, cls: SynthClass, graph: nx.DiGraph, parent: int, child: int) -> float:
    return spec.rho if graph.edges[parent, child]['coupling'] else cls.within


def _transition(cells: int, strength: float) -> np.ndarray:
    return strength * np.eye(cells) + (1.0 - strength) / cells


def _sampling_order(graph: nx.DiGraph) -> List[Tuple[Optional[int], int]]:
    order: List[Tuple[Optional[int], int]] = []
    for root in sorted(v for v in graph.nodes if graph.in_degree(v) == 0):
        order.append((None, root))
        order.extend(nx.bfs_edges(graph, root))
    return order


def _marginals(spec: SynthSpec, cls: SynthClass) -> Dict[int, np.ndarray]:
    graph = spec.graph(cls)
    marginals: Dict[int, np.ndarray] = {}
    for parent, child in _sampling_order(graph):
        if parent is None:
            marginals[child] = _root_pmf(spec, cls)
        else:
            T = _transition(spec.cells, _strength(spec, cls, graph, parent, child))
            marginals[child] = marginals[parent] @ T
    return marginals


def edge_pmf(spec: SynthSpec, class_name: str, i: int, j: int) -> np.ndarray:
    """Exact generating joint pmf of tree edge (i, j), indexed [x_i, x_j]."""
    cls = spec.class_named(class_name)
    graph = spec.graph(cls)
    if graph.has_edge(i, j):
        parent, child, flip = i, j, False
    elif graph.has_edge(j, i):
        parent, child, flip = j, i, True
    else:
        raise DataError(f'({i}, {j}) is not an edge of class {class_name!r}')
    marginal = _marginals(spec, cls)[parent]
    joint = marginal[:, None] * _transition(spec.cells, _strength(spec, cls, graph, parent, child))
    return joint.T if flip else joint


def _sample_class(spec: SynthSpec, cls: SynthClass, rng: np.random.Generator) -> np.ndarray:
    graph = spec.graph(cls)
    symbols = np.zeros((cls.n, spec.offsets[-1]), dtype=np.int64)
    for parent, child in _sampling_order(graph):
        if parent is None:
            symbols[:, child] = rng.choice(spec.cells, size=cls.n, p=_root_pmf(spec, cls))
            continue
        strength = _strength(spec, cls, graph, parent, child)
        copy = rng.random(cls.n) < strength
        fresh = rng.integers(0, spec.cells, size=cls.n)
        symbols[:, child] = np.where(copy, symbols[:, parent], fresh)
    return symbols


def synth_symbols(spec: SynthSpec, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Discrete samples and labels, classes in spec order."""
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for cls in spec.classes:
        parts.append(_sample_class(spec, cls, rng))
        labels.extend([cls.name] * cls.n)
    return np.vstack(parts), np.asarray(labels, dtype=str)


def synth_fusion_generator(spec: SynthSpec, seed: int) -> FeatureTable:
    if not isinstance(spec, SynthSpec):
        try:
            spec = SynthSpec.model_validate(spec)
        except ValidationError as exc:
            raise ConfigError(f'invalid synthetic spec: {exc}') from exc
    symbols, labels = synth_symbols(spec, seed)
    noise = np.random.default_rng([seed, 1]).random(symbols.shape)
    values = symbols + spec.jitter * noise
    logger.info('Generated %d synthetic samples over layout %s (seed %d)', values.shape[0], spec.layout, seed)
    return FeatureTable(blocks=spec.layout.split(values), labels=labels, layout=spec.layout)
