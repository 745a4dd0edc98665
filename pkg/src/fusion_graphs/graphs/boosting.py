"""Boosting of discriminative tree pairs and graph thickening.

Round 0 is the disjoint forest of per-feature-set tree pairs; every later round learns a tree
pair over all variables from the reweighted training set. The thickened graphs are the union of
the edges of all rounds, and the decision statistic is the beta-weighted sum of round LLRs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple
import logging
import math

import numpy as np

from fusion_graphs.config import FusionConfig
from fusion_graphs.errors import DataError, WeakLearnerRejected
from fusion_graphs.graphs.trees import (
    Pair,
    Provenance,
    TreePair,
    concat_trees,
    learn_discriminative_tree_pair,
    learn_generative_tree_pair,
)
from fusion_graphs.stats.distributions import WeightedDataset, fit_empirical_model

logger = logging.getLogger(__name__)

P_LABEL = 1
Q_LABEL = -1


@dataclass(frozen=True)
class BoostRound:
    pair: TreePair
    epsilon: float
    beta: float
    z_norm: float
    j_divergence: float


@dataclass(frozen=True)
class BoostedModel:
    """Rounds 0..T plus the feature-set offsets the round-0 forest respects."""

    rounds: Tuple[BoostRound, ...]
    offsets: Tuple[int, ...]
    tau: float = 0.0
    clamp: float = 10.0

    @property
    def n_total(self) -> int:
        return self.offsets[-1]

    @property
    def t(self) -> int:
        return len(self.rounds) - 1

    def feature_set_of(self, var: int) -> int:
        return int(np.searchsorted(np.asarray(self.offsets), var, side='right') - 1)

    def crosses_sets(self, edge: Pair) -> bool:
        return self.feature_set_of(edge[0]) != self.feature_set_of(edge[1])


def beta_from_epsilon(epsilon: float) -> float:
    return 0.5 * math.log((1.0 - epsilon) / epsilon)


def weak_llr(pair: TreePair, sample: Sequence[int], clamp: float = 10.0) -> float:
    raw = pair.tree_p.log_likelihood(sample) - pair.tree_q.log_likelihood(sample)
    return float(min(max(raw, -clamp), clamp))


def weak_llr_batch(pair: TreePair, symbols: np.ndarray, clamp: float = 10.0) -> np.ndarray:
    raw = pair.tree_p.log_likelihood_batch(symbols) - pair.tree_q.log_likelihood_batch(symbols)
    return np.clip(raw, -clamp, clamp)


def hard_decisions(llr: np.ndarray) -> np.ndarray:
    """+1 (class p) where the LLR is strictly positive, ties go to q."""
    return np.where(llr > 0, P_LABEL, Q_LABEL)


def score_round(pair: TreePair, ds: WeightedDataset, config: FusionConfig,
                iteration: int) -> Tuple[BoostRound, np.ndarray]:
    """Weighted error, beta and the next distribution for an already learned pair.

    Raises WeakLearnerRejected when the weighted error is not below one half.
    """
    y = ds.labels
    h = weak_llr_batch(pair, ds.symbols, config.clamp)
    predicted = hard_decisions(h)
    raw_epsilon = float(np.sum(ds.weights[predicted != y]))
    epsilon = min(max(raw_epsilon, config.epsilon_floor), 1.0 - config.epsilon_floor)
    if epsilon >= 0.5:
        raise WeakLearnerRejected(epsilon, iteration)
    beta = beta_from_epsilon(epsilon)
    margin = predicted if config.margin == 'sign' else h
    unnormalized = ds.weights * np.exp(-beta * y * margin)
    z_norm = float(unnormalized.sum())
    round_ = BoostRound(pair=pair, epsilon=epsilon, beta=beta, z_norm=z_norm,
                        j_divergence=pair.j_divergence_value)
    return round_, unnormalized / z_norm


def _fitting_set(ds: WeightedDataset, config: FusionConfig, iteration: int) -> WeightedDataset:
    """The dataset the round's empirical models are fitted on (a seeded resample if configured).

    Each class is resampled on its own from its renormalized weights and keeps its sample count,
    so a class with little mass is never drawn out of the fitting set.
    """
    if not config.resample:
        return ds
    rng = np.random.default_rng([config.seed, iteration])
    parts = []
    for label in (P_LABEL, Q_LABEL):
        members = np.flatnonzero(ds.labels == label)
        weights = ds.weights[members]
        parts.append(rng.choice(members, size=members.size, replace=True, p=weights / weights.sum()))
    idx = np.sort(np.concatenate(parts))
    return WeightedDataset.uniform(ds.symbols[idx], ds.labels[idx], ds.cells)


def _check_two_classes(ds: WeightedDataset) -> None:
    for label in (P_LABEL, Q_LABEL):
        if ds.class_mass(label) <= 0.0:
            raise DataError(f'no training mass for class {label:+d}')


def boost_round(ds: WeightedDataset, t: int, config: FusionConfig,
                nodes: Optional[Sequence[int]] = None) -> Tuple[BoostRound, np.ndarray]:
    """One round over all variables: fit weighted class models, learn the pair, reweight."""
    _check_two_classes(ds)
    nodes = list(range(len(ds.cells))) if nodes is None else list(nodes)
    fit_on = _fitting_set(ds, config, t)
    p_model = fit_empirical_model(fit_on, nodes, config.alpha, label=P_LABEL)
    q_model = fit_empirical_model(fit_on, nodes, config.alpha, label=Q_LABEL)
    pair = learn_discriminative_tree_pair(p_model, q_model, nodes, allow_forest=config.allow_forest, iteration=t,
                                         forest_tol=config.forest_tol)
    return score_round(pair, ds, config, t)


def initial_forest(ds: WeightedDataset, offsets: Sequence[int], config: FusionConfig) -> TreePair:
    """Per-feature-set tree pairs concatenated into one disjoint forest pair."""
    fit_on = _fitting_set(ds, config, 0)
    blocks_p, blocks_q = [], []
    j_total = 0.0
    for start, stop in zip(offsets[:-1], offsets[1:]):
        nodes = list(range(start, stop))
        p_model = fit_empirical_model(fit_on, nodes, config.alpha, label=P_LABEL)
        q_model = fit_empirical_model(fit_on, nodes, config.alpha, label=Q_LABEL)
        if config.init_structure == 'chow_liu':
            block = learn_generative_tree_pair(p_model, q_model, nodes, iteration=0)
        else:
            block = learn_discriminative_tree_pair(p_model, q_model, nodes,
                                                   allow_forest=config.allow_forest, iteration=0,
                                                   forest_tol=config.forest_tol)
        blocks_p.append(block.tree_p)
        blocks_q.append(block.tree_q)
        j_total += block.j_divergence_value
    kind = 'generative' if config.init_structure == 'chow_liu' else 'discriminative'
    return TreePair(
        tree_p=concat_trees(blocks_p, Provenance(kind, 'p', 0)),
        tree_q=concat_trees(blocks_q, Provenance(kind, 'q', 0)),
        iteration=0,
        j_divergence_value=j_total,
    )


def _validate_offsets(offsets: Sequence[int], n_total: int) -> Tuple[int, ...]:
    offsets = tuple(int(o) for o in offsets)
    if len(offsets) < 2 or offsets[0] != 0 or offsets[-1] != n_total or any(
            b <= a for a, b in zip(offsets[:-1], offsets[1:])):
        raise DataError(f'layout offsets {offsets} do not partition {n_total} variables')
    return offsets


def thicken(ds: WeightedDataset, offsets: Sequence[int], config: FusionConfig) -> BoostedModel:
    """Round 0 on the disjoint forest, then boosting rounds over all variables.

    Stops at t_max, at the first round no better than chance, or when the relative change of
    the tree-approximate J-divergence drops below j_tol.
    """
    offsets = _validate_offsets(offsets, len(ds.cells))
    _check_two_classes(ds)

    forest = initial_forest(ds, offsets, config)
    try:
        first, weights = score_round(forest, ds, config, 0)
    except WeakLearnerRejected as exc:
        # round 0 still defines the initial graphs; it just gets no vote
        logger.warning('Initial forest no better than chance (epsilon=%.4f); beta_0 set to 0', exc.epsilon)
        first = BoostRound(pair=forest, epsilon=0.5, beta=0.0, z_norm=1.0,
                           j_divergence=forest.j_divergence_value)
        weights = ds.weights
    rounds: List[BoostRound] = [first]
    logger.info('Round 0: epsilon=%.4f beta=%.4f J=%.5f edges_p=%d edges_q=%d', first.epsilon, first.beta,
                first.j_divergence, len(forest.tree_p.edges), len(forest.tree_q.edges))

    previous_j = first.j_divergence
    for t in range(1, config.t_max + 1):
        try:
            round_, weights = boost_round(ds.with_weights(weights), t, config)
        except WeakLearnerRejected as exc:
            logger.info('Stopping before round %d: %s', t, exc)
            break
        rounds.append(round_)
        logger.info('Round %d: epsilon=%.4f beta=%.4f J=%.5f', t, round_.epsilon, round_.beta, round_.j_divergence)
        change = abs(round_.j_divergence - previous_j) / max(abs(previous_j), 1e-12)
        if change < config.j_tol:
            logger.info('Stopping after round %d: relative J change %.2e below %.2e', t, change, config.j_tol)
            break
        previous_j = round_.j_divergence
    return BoostedModel(rounds=tuple(rounds), offsets=offsets, tau=config.tau, clamp=config.clamp)


def strong_llr(model: BoostedModel, sample: Sequence[int]) -> float:
    return float(sum(r.beta * weak_llr(r.pair, sample, model.clamp) for r in model.rounds))


def strong_llr_batch(model: BoostedModel, symbols: np.ndarray) -> np.ndarray:
    total = np.zeros(np.asarray(symbols).shape[0])
    for r in model.rounds:
        total += r.beta * weak_llr_batch(r.pair, symbols, model.clamp)
    return total


def decide(model: BoostedModel, score: float) -> int:
    return P_LABEL if score > model.tau else Q_LABEL


def margin_votes(model: BoostedModel, symbols: np.ndarray, margin: str = 'sign') -> np.ndarray:
    """Cumulative vote sum_{s<=t} beta_s m_s(x) after each round, shape (T+1, N).

    m_s is the margin the weight update used, so the exponential-loss bound applies to it.
    """
    votes = np.zeros((len(model.rounds), np.asarray(symbols).shape[0]))
    running = np.zeros(votes.shape[1])
    for t, r in enumerate(model.rounds):
        h = weak_llr_batch(r.pair, symbols, model.clamp)
        running = running + r.beta * (hard_decisions(h) if margin == 'sign' else h)
        votes[t] = running
    return votes


def edge_union(model: BoostedModel) -> Tuple[Set[Pair], Set[Pair]]:
    edges_p: Set[Pair] = set()
    edges_q: Set[Pair] = set()
    for r in model.rounds:
        edges_p.update(r.pair.tree_p.edges)
        edges_q.update(r.pair.tree_q.edges)
    return edges_p, edges_q


def factor_evaluation_count(model: BoostedModel, sample: Optional[Sequence[int]] = None) -> int:
    """Node and edge table lookups strong_llr performs for one sample."""
    if sample is not None and len(sample) < model.n_total:
        raise DataError(f'sample has {len(sample)} symbols, model needs {model.n_total}')
    count = 0
    for r in model.rounds:
        for tree in (r.pair.tree_p, r.pair.tree_q):
            count += len(tree.nodes) + len(tree.edges)
    return count
