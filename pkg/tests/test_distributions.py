import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusion_graphs.errors import DataError
from fusion_graphs.stats.distributions import (
    EmpiricalModel,
    Quantizer,
    WeightedDataset,
    fit_empirical_model,
    fit_quantizer,
    kl_divergence,
    mutual_information,
    quantize,
)


def _one_class(symbols, weights=None, cells=None):
    symbols = np.asarray(symbols).reshape(len(symbols), -1)
    n = symbols.shape[0]
    cells = cells or tuple(int(c) + 1 for c in symbols.max(axis=0))
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    return WeightedDataset(symbols=symbols, labels=np.ones(n, dtype=int), weights=weights, cells=tuple(cells))


def test_constant_column_gets_one_cell():
    q = fit_quantizer(np.array([[5.0], [5.0], [5.0], [5.0]]), bins=8)
    assert q.edges == ((),)
    assert q.cells == (1,)
    assert quantize(q, [5.0]).tolist() == [0]


def test_two_bins_split_at_the_median():
    col = np.arange(8, dtype=float).reshape(-1, 1)
    q = fit_quantizer(col, bins=2)
    assert q.edges == ((3.5,),)
    assert q.quantize_matrix(col)[:, 0].tolist() == [0, 0, 0, 0, 1, 1, 1, 1]


def test_quartiles_of_normal_draws_fill_cells_evenly(rng):
    col = rng.standard_normal((1000, 1))
    q = fit_quantizer(col, bins=4)
    assert len(q.edges[0]) == 3
    counts = np.bincount(q.quantize_matrix(col)[:, 0], minlength=4)
    assert np.all(np.abs(counts - 250) <= 25)


@pytest.mark.parametrize('edges, x, expected', [
    ((0.5,), 0.4, 0),
    ((0.5,), 0.6, 1),
    ((-1.0, 1.0), 1e9, 2),
    ((-1.0, 1.0), -1e9, 0),
])
def test_quantize_clamps_outside_the_edges(edges, x, expected):
    assert quantize(Quantizer(edges=(edges,), bins=3), [x]).tolist() == [expected]


def test_quantize_rejects_wrong_dimension():
    with pytest.raises(DataError, match='dimension mismatch'):
        quantize(Quantizer(edges=((0.5,),), bins=2), [0.1, 0.2])


def test_fit_quantizer_rejects_non_finite():
    with pytest.raises(DataError, match='non-finite'):
        fit_quantizer(np.array([[0.0], [np.nan]]), bins=2)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60), st.integers(2, 10),
       st.randoms(use_true_random=False))
def test_quantizer_ignores_sample_order(values, bins, random):
    shuffled = list(values)
    random.shuffle(shuffled)
    a = fit_quantizer(np.array(values).reshape(-1, 1), bins)
    b = fit_quantizer(np.array(shuffled).reshape(-1, 1), bins)
    assert a == b
    edges = a.edges[0]
    assert all(x < y for x, y in zip(edges, edges[1:]))
    assert 1 <= a.cells[0] <= bins


def test_symmetric_counts_give_uniform_marginal():
    model = fit_empirical_model(_one_class([0, 0, 1, 1]), [0], alpha=1e-12)
    np.testing.assert_allclose(model.marginal(0), [0.5, 0.5], atol=1e-12)


def test_perfect_dependence_gives_diagonal_joint():
    model = fit_empirical_model(_one_class([[0, 0], [1, 1]]), [0, 1], alpha=1e-12)
    np.testing.assert_allclose(model.pair(0, 1), [[0.5, 0.0], [0.0, 0.5]], atol=1e-12)


def test_weighted_counts_with_smoothing():
    ds = _one_class([[0, 0], [1, 0], [1, 1]], weights=[0.5, 0.25, 0.25], cells=(2, 2))
    model = fit_empirical_model(ds, [0, 1], alpha=0.01)
    expected = (np.array([[0.5, 0.0], [0.25, 0.25]]) + 0.01 / 4) / 1.01
    np.testing.assert_allclose(model.pair(0, 1), expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(model.marginal(0), [0.505 / 1.01, 0.505 / 1.01], atol=1e-12)
    np.testing.assert_allclose(model.pair(1, 0), expected.T)


def test_empty_class_has_no_training_mass():
    ds = WeightedDataset(symbols=np.array([[0], [1]]), labels=np.array([1, 1]), weights=np.array([0.5, 0.5]),
                         cells=(2,))
    with pytest.raises(DataError, match='no training mass'):
        fit_empirical_model(ds, [0], alpha=1.0, label=-1)


def test_weights_must_be_a_distribution():
    with pytest.raises(DataError, match='sum to 1'):
        WeightedDataset(symbols=np.array([[0]]), labels=np.array([1]), weights=np.array([0.9]), cells=(2,))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 40), st.floats(1e-3, 5.0))
def test_tables_are_positive_and_marginally_consistent(seed, n, alpha):
    rng = np.random.default_rng(seed)
    cells = (2, 3, 4)
    symbols = np.column_stack([rng.integers(0, c, size=n) for c in cells])
    weights = rng.random(n) + 1e-3
    ds = _one_class(symbols, weights / weights.sum(), cells)
    model = fit_empirical_model(ds, [0, 1, 2], alpha)
    for (i, j), table in model.pairwise.items():
        assert table.min() > 0
        assert abs(table.sum() - 1.0) < 1e-10
        np.testing.assert_allclose(table.sum(axis=1), model.marginal(i), atol=1e-10)
        np.testing.assert_allclose(table.sum(axis=0), model.marginal(j), atol=1e-10)


def test_duplicating_samples_at_half_weight_changes_nothing(rng):
    symbols = rng.integers(0, 3, size=(30, 3))
    weights = rng.random(30)
    weights /= weights.sum()
    once = fit_empirical_model(_one_class(symbols, weights, (3, 3, 3)), [0, 1, 2], alpha=0.5)
    twice = fit_empirical_model(
        _one_class(np.vstack([symbols, symbols]), np.concatenate([weights, weights]) / 2, (3, 3, 3)),
        [0, 1, 2], alpha=0.5)
    for key in once.pairwise:
        np.testing.assert_allclose(once.pairwise[key], twice.pairwise[key], atol=1e-12)


def test_mutual_information_closed_forms():
    assert mutual_information(np.outer([0.3, 0.7], [0.6, 0.4])) == pytest.approx(0.0, abs=1e-12)
    assert mutual_information(np.diag([0.5, 0.5])) == pytest.approx(math.log(2), abs=1e-12)


def test_mutual_information_matches_double_loop(rng):
    p = rng.random((3, 3)) + 0.1
    p /= p.sum()
    px, py = p.sum(axis=1), p.sum(axis=0)
    expected = sum(p[a, b] * math.log(p[a, b] / (px[a] * py[b])) for a in range(3) for b in range(3))
    assert mutual_information(p) == pytest.approx(expected, abs=1e-12)


def test_mutual_information_rejects_unnormalized_table():
    with pytest.raises(DataError, match='not normalized'):
        mutual_information(np.full((2, 2), 0.3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_mutual_information_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    table = rng.random((3, 4)) + 1e-6
    table /= table.sum()
    assert mutual_information(table) >= 0.0
    product_table = np.outer(table.sum(axis=1), table.sum(axis=0))
    assert mutual_information(product_table) == pytest.approx(0.0, abs=1e-9)


def test_kl_divergence_closed_forms():
    p = np.array([0.5, 0.5])
    assert kl_divergence(p, p) == 0.0
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert kl_divergence(p, np.array([0.25, 0.75])) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.143841, abs=1e-6)


def test_kl_divergence_is_asymmetric(rng):
    p = rng.random(4) + 0.1
    q = rng.random(4) + 0.1
    p, q = p / p.sum(), q / q.sum()
    brute = sum(p[k] * math.log(p[k] / q[k]) for k in range(4))
    assert kl_divergence(p, q) == pytest.approx(brute, abs=1e-12)
    assert kl_divergence(p, q) != pytest.approx(kl_divergence(q, p), abs=1e-9)


def test_kl_divergence_errors():
    with pytest.raises(DataError, match='shape mismatch'):
        kl_divergence(np.array([0.5, 0.5]), np.array([0.2, 0.3, 0.5]))
    with pytest.raises(DataError, match='strictly positive'):
        kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]))


def test_model_from_joint_uses_exact_marginals(rng):
    joint = rng.random((2, 3, 2)) + 0.1
    joint /= joint.sum()
    model = EmpiricalModel.from_joint(joint)
    np.testing.assert_allclose(model.pair(0, 2), joint.sum(axis=1))
    np.testing.assert_allclose(model.marginal(1), joint.sum(axis=(0, 2)))
