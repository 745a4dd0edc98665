"""Versioned JSON documents for trained models.

Floats are written with Python's shortest round-trip representation, so a saved and reloaded
model produces bit-identical scores.
"""
from __future__ import annotations

from pathlib import Path
from threading import RLock
from typing import Dict, List, Optional, Tuple
import json
import logging

import numpy as np
from pydantic import BaseModel, ValidationError

from fusion_graphs.classify.fusion import BinaryFusionModel, FeatureLayout, MulticlassModel
from fusion_graphs.errors import DataError
from fusion_graphs.graphs.boosting import BoostedModel, BoostRound, edge_union
from fusion_graphs.graphs.trees import Provenance, TreeGraph, TreePair
from fusion_graphs.stats.distributions import Quantizer

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TreeDocument(BaseModel):
    nodes: List[int]
    edges: List[Tuple[int, int]]
    node_log: List[List[float]]
    edge_log: List[List[List[float]]]
    kind: str
    role: str
    iteration: int


class RoundDocument(BaseModel):
    tree_p: TreeDocument
    tree_q: TreeDocument
    iteration: int
    beta: float
    epsilon: float
    z_norm: float
    j_divergence: float


class SubmodelDocument(BaseModel):
    p_label: str
    q_label: str
    tau: float
    clamp: float
    quantizers: List[List[List[float]]]
    bins: int
    rounds: List[RoundDocument]


class ModelDocument(BaseModel):
    format_version: int
    layout: List[int]
    class_names: List[str]
    tau_out: float
    submodels: List[SubmodelDocument]


def _tree_to_doc(tree: TreeGraph) -> TreeDocument:
    return TreeDocument(
        nodes=list(tree.nodes),
        edges=[tuple(e) for e in tree.edges],
        node_log=[tree.node_log[i].tolist() for i in tree.nodes],
        edge_log=[tree.edge_log[e].tolist() for e in tree.edges],
        kind=tree.provenance.kind,
        role=tree.provenance.role,
        iteration=tree.provenance.iteration,
    )


def _tree_from_doc(doc: TreeDocument) -> TreeGraph:
    if len(doc.node_log) != len(doc.nodes) or len(doc.edge_log) != len(doc.edges):
        raise DataError('tree document tables do not match its nodes and edges')
    edges = [(int(i), int(j)) for i, j in doc.edges]
    return TreeGraph(
        nodes=tuple(doc.nodes),
        edges=tuple(edges),
        node_log={i: np.asarray(t, dtype=float) for i, t in zip(doc.nodes, doc.node_log)},
        edge_log={e: np.asarray(t, dtype=float) for e, t in zip(edges, doc.edge_log)},
        provenance=Provenance(doc.kind, doc.role, doc.iteration),
    )


def binary_to_doc(model: BinaryFusionModel) -> SubmodelDocument:
    rounds = [
        RoundDocument(
            tree_p=_tree_to_doc(r.pair.tree_p),
            tree_q=_tree_to_doc(r.pair.tree_q),
            iteration=r.pair.iteration,
            beta=r.beta,
            epsilon=r.epsilon,
            z_norm=r.z_norm,
            j_divergence=r.j_divergence,
        )
        for r in model.boosted.rounds
    ]
    return SubmodelDocument(
        p_label=model.p_label,
        q_label=model.q_label,
        tau=model.boosted.tau,
        clamp=model.boosted.clamp,
        quantizers=[[list(e) for e in q.edges] for q in model.quantizers],
        bins=model.quantizers[0].bins,
        rounds=rounds,
    )


def binary_from_doc(doc: SubmodelDocument, layout: FeatureLayout) -> BinaryFusionModel:
    rounds = []
    for r in doc.rounds:
        pair = TreePair(tree_p=_tree_from_doc(r.tree_p), tree_q=_tree_from_doc(r.tree_q), iteration=r.iteration,
                        j_divergence_value=r.j_divergence)
        rounds.append(BoostRound(pair=pair, epsilon=r.epsilon, beta=r.beta, z_norm=r.z_norm,
                                 j_divergence=r.j_divergence))
    quantizers = tuple(
        Quantizer(edges=tuple(tuple(float(v) for v in e) for e in edges), bins=doc.bins) for edges in doc.quantizers
    )
    if tuple(q.dims for q in quantizers) != layout.dims:
        raise DataError(f'quantizer dimensions do not match layout {layout}')
    boosted = BoostedModel(rounds=tuple(rounds), offsets=layout.offsets, tau=doc.tau, clamp=doc.clamp)
    return BinaryFusionModel(layout=layout, quantizers=quantizers, boosted=boosted, p_label=doc.p_label,
                             q_label=doc.q_label)


def model_to_doc(model: MulticlassModel) -> ModelDocument:
    return ModelDocument(
        format_version=FORMAT_VERSION,
        layout=list(model.layout.dims),
        class_names=list(model.class_names),
        tau_out=model.tau_out,
        submodels=[binary_to_doc(m) for m in model.submodels],
    )


def model_from_doc(doc: ModelDocument) -> MulticlassModel:
    if doc.format_version != FORMAT_VERSION:
        raise DataError(f'unsupported model format_version {doc.format_version} (expected {FORMAT_VERSION})')
    layout = FeatureLayout(tuple(doc.layout))
    submodels = tuple(binary_from_doc(s, layout) for s in doc.submodels)
    return MulticlassModel(submodels=submodels, class_names=tuple(doc.class_names), tau_out=doc.tau_out)


def save_model(model: MulticlassModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8') as fh:
        json.dump(model_to_doc(model).model_dump(mode='python'), fh, indent=2)
    logger.info('Saved %d-class model to %s', model.k, path)


def load_model(path: Path) -> MulticlassModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f'model file not found: {path}')
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
        doc = ModelDocument.model_validate(payload)
    except (ValueError, ValidationError) as exc:
        raise DataError(f'invalid model document {path}: {exc}') from exc
    return model_from_doc(doc)


class ModelCache:
    """Loads a model file once and reloads it when the file changes on disk."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self._lock = RLock()
        self._model: Optional[MulticlassModel] = None
        self._mtime: Optional[float] = None

    def get(self) -> MulticlassModel:
        with self._lock:
            mtime = self.path.stat().st_mtime if self.path.exists() else None
            if self._model is None or mtime != self._mtime:
                self._model = load_model(self.path)
                self._mtime = mtime
            return self._model

    def summary(self) -> Dict[str, object]:
        model = self.get()
        classes = []
        for name, sub in zip(model.class_names, model.submodels):
            edges_p, edges_q = edge_union(sub.boosted)
            classes.append({
                'name': name,
                'rounds': len(sub.boosted.rounds),
                'edges_p': len(edges_p),
                'edges_q': len(edges_q),
                'tau': sub.tau,
            })
        return {
            'layout': list(model.layout.dims),
            'class_names': list(model.class_names),
            'tau_out': model.tau_out,
            'classes': classes,
        }
