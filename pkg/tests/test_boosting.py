import math

import numpy as np
import pytest

from conftest import binary_dataset, fusion_spec, random_joint
from fusion_graphs.config import FusionConfig
from fusion_graphs.errors import WeakLearnerRejected
from fusion_graphs.evaluation.synth import synth_symbols
from fusion_graphs.graphs.boosting import (
    BoostedModel,
    BoostRound,
    beta_from_epsilon,
    boost_round,
    decide,
    edge_union,
    factor_evaluation_count,
    hard_decisions,
    margin_votes,
    score_round,
    strong_llr,
    strong_llr_batch,
    thicken,
    weak_llr,
)
from fusion_graphs.graphs.trees import Provenance, TreeGraph, TreePair, learn_generative_tree_pair
from fusion_graphs.stats.distributions import EmpiricalModel, WeightedDataset


def _one_node_pair(p, q):
    tree_p = TreeGraph.from_model(EmpiricalModel.from_joint(np.array(p)), [0], [], Provenance('generative', 'p'))
    tree_q = TreeGraph.from_model(EmpiricalModel.from_joint(np.array(q)), [0], [], Provenance('generative', 'q'))
    return TreePair(tree_p=tree_p, tree_q=tree_q, iteration=0, j_divergence_value=0.0)


def _model(rounds, n_total=1):
    return BoostedModel(rounds=tuple(rounds), offsets=(0, n_total))


def _round(pair, beta):
    return BoostRound(pair=pair, epsilon=0.25, beta=beta, z_norm=1.0, j_divergence=0.0)


def _synthetic_dataset(seed, n=300, rho=0.8, dims=(2, 2)):
    spec = fusion_spec(n=n, rho=rho, dims=dims)
    symbols, labels = synth_symbols(spec, seed)
    return binary_dataset(symbols[labels == 'p'], symbols[labels == 'q'], (2,) * sum(dims))


@pytest.mark.parametrize('epsilon, beta', [(0.5, 0.0), (0.1, 0.5 * math.log(9)), (0.25, 0.5 * math.log(3))])
def test_beta_formula(epsilon, beta):
    assert beta_from_epsilon(epsilon) == pytest.approx(beta, abs=1e-12)


def test_identical_trees_give_zero_llr():
    pair = _one_node_pair([0.3, 0.7], [0.3, 0.7])
    assert weak_llr(pair, [0]) == 0.0
    assert weak_llr(pair, [1]) == 0.0


def test_one_node_llr_closed_form():
    pair = _one_node_pair([0.9, 0.1], [0.1, 0.9])
    assert weak_llr(pair, [0]) == pytest.approx(math.log(9), abs=1e-12)
    assert weak_llr(pair, [1]) == pytest.approx(-math.log(9), abs=1e-12)


def test_llr_is_clamped():
    pair = _one_node_pair([1 - 1e-11, 1e-11], [1e-11, 1 - 1e-11])
    assert weak_llr(pair, [0], clamp=10.0) == 10.0
    assert weak_llr(pair, [1], clamp=10.0) == -10.0


def test_hand_executed_reweighting_step():
    # samples 0, 1 are class p with symbol 0, 1; samples 2, 3 are class q with symbol 1, 0
    pair = _one_node_pair([0.8, 0.2], [0.3, 0.7])
    ds = WeightedDataset(symbols=np.array([[0], [1], [1], [0]]), labels=np.array([1, 1, -1, -1]),
                         weights=np.array([0.4, 0.1, 0.3, 0.2]), cells=(2,))
    round_, weights = score_round(pair, ds, FusionConfig(margin='sign'), iteration=1)
    # symbol 0 -> h > 0 (p), symbol 1 -> h < 0 (q): samples 1 and 3 are wrong
    assert round_.epsilon == pytest.approx(0.3)
    beta = 0.5 * math.log(0.7 / 0.3)
    assert round_.beta == pytest.approx(beta, abs=1e-12)
    unnormalized = np.array([0.4 * math.exp(-beta), 0.1 * math.exp(beta), 0.3 * math.exp(-beta),
                             0.2 * math.exp(beta)])
    assert round_.z_norm == pytest.approx(unnormalized.sum(), abs=1e-12)
    np.testing.assert_allclose(weights, unnormalized / unnormalized.sum(), atol=1e-12)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert weights[1] / 0.1 > weights[0] / 0.4


def test_chance_level_round_is_rejected():
    pair = _one_node_pair([0.5, 0.5], [0.4, 0.6])
    ds = WeightedDataset(symbols=np.array([[0], [1]]), labels=np.array([-1, 1]), weights=np.array([0.5, 0.5]),
                         cells=(2,))
    with pytest.raises(WeakLearnerRejected, match='no better than chance'):
        score_round(pair, ds, FusionConfig(), iteration=2)


def test_ties_go_to_class_q():
    assert hard_decisions(np.array([0.0, 1e-9, -1e-9])).tolist() == [-1, 1, -1]
    zero = _model([_round(_one_node_pair([0.5, 0.5], [0.5, 0.5]), 0.0)])
    assert strong_llr(zero, [0]) == 0.0
    assert decide(zero, 0.0) == -1


def test_strong_llr_is_the_beta_weighted_sum():
    a = _one_node_pair([0.9, 0.1], [0.1, 0.9])
    b = _one_node_pair([0.6, 0.4], [0.2, 0.8])
    single = _model([_round(a, 1.0)])
    assert strong_llr(single, [0]) == weak_llr(a, [0])
    both = _model([_round(a, 0.5), _round(b, 2.0)])
    expected = 0.5 * math.log(9) + 2.0 * math.log(0.6 / 0.2)
    assert strong_llr(both, [0]) == pytest.approx(expected, abs=1e-12)


def test_edge_union_collapses_duplicates(rng):
    model = EmpiricalModel.from_joint(random_joint(rng, (2, 2, 2, 2)))

    def pair_with(edges):
        tree = TreeGraph.from_model(model, range(4), edges, Provenance('discriminative', 'p'))
        return TreePair(tree_p=tree, tree_q=tree, iteration=0, j_divergence_value=0.0)

    boosted = BoostedModel(rounds=(_round(pair_with([(0, 1)]), 1.0), _round(pair_with([(0, 1), (2, 3)]), 1.0)),
                           offsets=(0, 4))
    edges_p, edges_q = edge_union(boosted)
    assert edges_p == {(0, 1), (2, 3)}
    assert edges_q == edges_p


def test_factor_count_of_a_single_node():
    boosted = _model([_round(_one_node_pair([0.5, 0.5], [0.4, 0.6]), 1.0)])
    assert factor_evaluation_count(boosted, [0]) == 2


def test_forest_only_model_with_tmax_zero():
    ds = _synthetic_dataset(seed=3, dims=(4, 4, 4))
    boosted = thicken(ds, (0, 4, 8, 12), FusionConfig(t_max=0, bins=2))
    assert boosted.t == 0
    forest = boosted.rounds[0].pair
    assert not any(boosted.crosses_sets(e) for e in forest.tree_p.edges + forest.tree_q.edges)
    assert len(forest.tree_p.edges) == 9
    assert factor_evaluation_count(boosted) == 42
    edges_p, _ = edge_union(boosted)
    assert edges_p == set(forest.tree_p.edges)


def test_chow_liu_initial_structure_is_generative():
    ds = _synthetic_dataset(seed=5)
    boosted = thicken(ds, (0, 2, 4), FusionConfig(t_max=0, init_structure='chow_liu'))
    assert boosted.rounds[0].pair.tree_p.provenance.kind == 'generative'


def test_boosting_contract_holds_every_round():
    for seed in range(5):
        ds = _synthetic_dataset(seed, n=150)
        config = FusionConfig(t_max=6, j_tol=0.0, bins=2)
        boosted = thicken(ds, (0, 2, 4), config)
        votes = margin_votes(boosted, ds.symbols, config.margin)
        bound = 1.0
        for t, r in enumerate(boosted.rounds):
            if r.beta > 0:
                assert r.beta == 0.5 * math.log((1 - r.epsilon) / r.epsilon)
            bound *= r.z_norm
            error = float(np.sum(ds.weights[ds.labels * votes[t] <= 0]))
            assert error <= bound + 1e-12
        n_total = 4
        assert factor_evaluation_count(boosted) <= 2 * (boosted.t + 1) * (2 * n_total - 1)


def test_weights_stay_normalized_across_rounds():
    ds = _synthetic_dataset(seed=11)
    config = FusionConfig(bins=2)
    weights = ds.weights
    for t in range(1, 4):
        try:
            _, weights = boost_round(ds.with_weights(weights), t, config)
        except WeakLearnerRejected:
            break
        assert weights.sum() == pytest.approx(1.0, abs=1e-10)


def test_edge_unions_grow_with_rounds():
    ds = _synthetic_dataset(seed=2)
    boosted = thicken(ds, (0, 2, 4), FusionConfig(t_max=4, j_tol=0.0, bins=2))
    previous = set()
    for t in range(len(boosted.rounds)):
        partial = BoostedModel(rounds=boosted.rounds[:t + 1], offsets=boosted.offsets)
        edges_p, _ = edge_union(partial)
        assert previous <= edges_p
        previous = edges_p


def test_training_is_deterministic():
    ds = _synthetic_dataset(seed=9)
    config = FusionConfig(t_max=3, bins=2)
    first, second = thicken(ds, (0, 2, 4), config), thicken(ds, (0, 2, 4), config)
    assert [r.beta for r in first.rounds] == [r.beta for r in second.rounds]
    np.testing.assert_array_equal(strong_llr_batch(first, ds.symbols), strong_llr_batch(second, ds.symbols))


def test_resampling_is_seeded():
    ds = _synthetic_dataset(seed=4)
    config = FusionConfig(t_max=2, bins=2, resample=True, seed=13)
    first, second = thicken(ds, (0, 2, 4), config), thicken(ds, (0, 2, 4), config)
    assert [r.pair.tree_p.edges for r in first.rounds] == [r.pair.tree_p.edges for r in second.rounds]


def test_equal_classes_get_no_vote_in_round_zero():
    rng = np.random.default_rng(0)
    symbols = rng.integers(0, 2, size=(200, 2))
    ds = binary_dataset(symbols[:100], symbols[:100], (2, 2))
    boosted = thicken(ds, (0, 1, 2), FusionConfig(t_max=2))
    assert all(r.beta < 1e-9 for r in boosted.rounds)
    assert np.all(np.abs(strong_llr_batch(boosted, ds.symbols)) < 1e-9)


def test_generative_pair_is_a_valid_weak_learner(rng):
    p = EmpiricalModel.from_joint(random_joint(rng, (2, 2)))
    q = EmpiricalModel.from_joint(random_joint(rng, (2, 2)))
    pair = learn_generative_tree_pair(p, q, [0, 1])
    assert weak_llr(pair, [0, 1]) == pytest.approx(
        pair.tree_p.log_likelihood([0, 1]) - pair.tree_q.log_likelihood([0, 1]))


def _added_edges(boosted):
    return [e for r in boosted.rounds[1:] for e in r.pair.tree_p.edges + r.pair.tree_q.edges]


def test_planted_cross_set_correlation_is_picked_up():
    # couplings join set 0 to set 1 and set 1 to set 2, under class p only
    planted = {frozenset((0, 1)), frozenset((1, 2))}
    hits = 0
    for seed in range(20):
        ds = _synthetic_dataset(seed, n=2000, rho=0.8, dims=(4, 4, 4))
        boosted = thicken(ds, (0, 4, 8, 12), FusionConfig(t_max=5))
        hits += any(frozenset((boosted.feature_set_of(i), boosted.feature_set_of(j))) in planted
                    for r in boosted.rounds[1:] for i, j in r.pair.tree_p.edges)
    assert hits >= 18


def test_independent_sets_gain_almost_no_cross_edges_with_forests():
    added = crossing = 0
    for seed in range(3):
        ds = _synthetic_dataset(seed, n=5000, rho=0.0, dims=(4, 4, 4))
        boosted = thicken(ds, (0, 4, 8, 12), FusionConfig(t_max=5, j_tol=0.0, allow_forest=True))
        edges = _added_edges(boosted)
        added += len(edges)
        crossing += sum(boosted.crosses_sets(e) for e in edges)
    assert added > 0
    assert crossing < 0.05 * added


def test_forest_floor_prunes_noise_edges():
    ds = _synthetic_dataset(seed=1, n=5000, rho=0.0, dims=(4, 4, 4))

    def crossing(config):
        pair = boost_round(ds, 1, config)[0].pair
        return [(i, j) for i, j in pair.tree_p.edges + pair.tree_q.edges if i // 4 != j // 4]

    assert crossing(FusionConfig(allow_forest=True, forest_tol=0.0))
    assert not crossing(FusionConfig(allow_forest=True))


def test_resampling_keeps_a_minority_class():
    rng = np.random.default_rng(21)
    symbols = rng.integers(0, 2, size=(203, 4))
    ds = binary_dataset(symbols[:200], symbols[200:], (2, 2, 2, 2))
    config = FusionConfig(t_max=5, resample=True, seed=3)
    boosted = thicken(ds, (0, 2, 4), config)
    assert boosted.rounds[0].pair.nodes == (0, 1, 2, 3)

    weights = np.concatenate([np.full(200, 1.0), np.full(3, 1e-9)])
    skewed = ds.with_weights(weights / weights.sum())
    try:
        round_, _ = boost_round(skewed, 1, config)
    except WeakLearnerRejected:
        return
    assert round_.pair.nodes == (0, 1, 2, 3)
