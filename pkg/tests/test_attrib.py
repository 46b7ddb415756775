import numpy as np
import pytest

from qpeptide.attrib import (
    aggregate_heatmap,
    attribute_dataset,
    compare_top_cells,
    integrated_gradients,
    integrated_gradients_features,
    shapley_value_sampling,
    shapley_value_sampling_inputs,
)
from qpeptide.baselines import RecurrentModel, RecurrentSpec
from qpeptide.model import HybridConfig, HybridModel


def test_ig_linear_model_exact():
    w = np.array([0.5, -2.0, 3.0])
    x = np.array([1.0, 2.0, -1.0])
    attr = integrated_gradients_features(lambda X: np.broadcast_to(w, X.shape), x, steps=1)
    np.testing.assert_allclose(attr, w * x)


def test_ig_square_midpoint():
    attr = integrated_gradients_features(lambda X: 2 * X, np.array([1.0]), steps=50)
    assert attr[0] == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("nn", [True, False])
def test_ig_completeness_hybrid(nn):
    m = HybridModel(HybridConfig(template_id=9, n_qubits=2, nn_controlled=nn, embedding_dim=4), seed=3)
    x = m.embed("ACDEFGHIK")
    attr = integrated_gradients(m, "ACDEFGHIK", steps=256)
    gap = m.scores_from_inputs(x) - m.scores_from_inputs(np.zeros_like(x))
    assert abs(attr.sum() - gap) <= 1e-3


def test_ig_completeness_recurrent():
    m = RecurrentModel(RecurrentSpec("LSTM", 1, 3, 4), seed=1)
    x = m.embed("ACDEFGHIK")
    attr = integrated_gradients(m, "ACDEFGHIK", steps=256)
    assert abs(attr.sum() - (m.scores_from_inputs(x) - m.scores_from_inputs(np.zeros_like(x)))) <= 1e-3


def test_svs_additive_model_exact():
    g = [np.sin, np.cos, np.exp, np.tanh]

    def score(X):
        return sum(g[i](X[:, i, 0]) for i in range(4))

    x = np.array([[0.3], [-1.2], [0.7], [2.0]])
    attr = shapley_value_sampling_inputs(score, x, m=3, seed=0)
    expected = [g[i](x[i, 0]) - g[i](0.0) for i in range(4)]
    np.testing.assert_allclose(attr, expected, atol=1e-6)


def test_svs_two_features_brute_force():
    def F(X):
        return X[:, 0, 0] * X[:, 1, 0] + 2 * X[:, 0, 0]

    x = np.array([[1.5], [-2.0]])
    f = lambda a, b: a * b + 2 * a  # noqa: E731
    phi0 = 0.5 * ((f(1.5, 0) - f(0, 0)) + (f(1.5, -2) - f(0, -2)))
    phi1 = 0.5 * ((f(0, -2) - f(0, 0)) + (f(1.5, -2) - f(1.5, 0)))
    attr = shapley_value_sampling_inputs(F, x, m=10_000, seed=1)
    # the two orderings give phi0 = 3 or 0, so the estimate's SD is 1.5 / sqrt(m)
    np.testing.assert_allclose(attr, [phi0, phi1], atol=4 * 1.5 / 100)
    assert attr.sum() == pytest.approx(phi0 + phi1)


def test_svs_efficiency_on_model():
    m = HybridModel(HybridConfig(n_qubits=2), seed=4)
    x = m.embed("ACDEFGHIK")
    attr = shapley_value_sampling(m, "ACDEFGHIK", m=5, seed=0)
    assert attr.sum() == pytest.approx(m.scores_from_inputs(x) - m.scores_from_inputs(np.zeros_like(x)), abs=1e-12)


def test_svs_symmetric_positions():
    def F(X):
        return np.tanh(X[:, 0, 0] + X[:, 1, 0]) + 0.1 * X[:, 2, 0]

    x = np.array([[0.8], [0.8], [1.0]])
    attr = np.mean([shapley_value_sampling_inputs(F, x, m=25, seed=s) for s in range(40)], axis=0)
    assert attr[0] == pytest.approx(attr[1], abs=0.02)


def test_zero_input_has_zero_attribution():
    m = HybridModel(HybridConfig(n_qubits=2), seed=5)
    zero = np.zeros((9, m.input_dim))
    np.testing.assert_allclose(integrated_gradients_features(m.input_gradients, zero, 16), 0.0)
    np.testing.assert_allclose(shapley_value_sampling_inputs(m.scores_from_inputs, zero, 4), 0.0)


def test_single_sequence_heatmap_support():
    hm = aggregate_heatmap([np.arange(1, 10, dtype=float)], ["ACDEFGHIK"], "IG", "t")
    assert np.count_nonzero(hm.values) == 9
    assert hm.cell("K", 8) == 1.0
    assert hm.frequencies.max() == 1.0
    assert hm.top_cells(1) == [("K", 8, 1.0)]


def test_heatmap_ignores_other_lengths_and_normalises():
    attrs = [np.ones(9), np.ones(9) * 3, np.ones(10)]
    hm = aggregate_heatmap(attrs, ["ACDEFGHIK", "ACDEFGHIY", "ACDEFGHIKL"], "SVS")
    assert hm.cell("A", 0) == pytest.approx(2 / 3)
    assert hm.cell("Y", 8) == 1.0
    assert hm.cell("K", 8) == pytest.approx(1 / 3)
    assert hm.frequencies[0, 0] == 1.0 and hm.counts[0, 0] == 2
    assert hm.to_table().count("\n") == 22
    assert hm.to_svg().startswith("<svg")


def test_compare_top_cells_flags_mismatch():
    a = aggregate_heatmap([np.array([1.0, -0.5, 0, 0, 0, 0, 0, 0, 0])], ["ACDEFGHIK"])
    b = aggregate_heatmap([np.array([1.0, 0.5, 0, 0, 0, 0, 0, 0, 0])], ["ACDEFGHIK"])
    out = compare_top_cells(a, b, k=2)
    assert out["mismatches"] == [["C", 1]]


def test_attribute_dataset_methods():
    m = RecurrentModel(RecurrentSpec("RNN", 1, 2, 3), seed=0)
    seqs, attrs = attribute_dataset(m, ["ACDEFGHIK", "ACDEFGHIKL"], "SVS", m=3)
    assert seqs == ["ACDEFGHIK"] and attrs[0].shape == (9,)
    with pytest.raises(ValueError):
        attribute_dataset(m, ["ACDEFGHIK"], "LIME")
