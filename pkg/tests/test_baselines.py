import numpy as np
import pytest

from conftest import model_gradient_error
from qpeptide.baselines import (
    CELLS,
    PRESETS,
    RecurrentModel,
    RecurrentSpec,
    cell_param_count,
    param_count,
    recurrent_forward,
)
from qpeptide.model import load_model, sigmoid

PEPTIDES = ["ACDEFGHIK", "YYLLPKDAW", "MNPQRSTV"]


def test_rnn_zero_weights_closed_form():
    m = RecurrentModel(RecurrentSpec("RNN", 1, 3, 4), seed=0)
    b = m.params["b0"].copy()
    for k in ("W0", "U0"):
        m.params[k][:] = 0.0
    expected = sigmoid(np.tanh(b) @ m.params["head_w"] + m.params["head_b"][0])
    assert recurrent_forward(m.spec, m.params, "ACDEFGHIK") == pytest.approx(expected)


def test_param_count_smallest_rnn():
    # embeddings 20*1, cell 1 + 1 + 1, head 1 + 1
    assert param_count(RecurrentSpec("RNN", 1, 1, 1)) == 25


def test_param_count_matches_tensors():
    for name, spec in PRESETS.items():
        assert RecurrentModel(spec).num_params == param_count(spec), name
    spec = RecurrentSpec("GRU", 2, 5, 7)
    assert RecurrentModel(spec).num_params == param_count(spec)


def test_cell_count_closed_form():
    assert cell_param_count("RNN", 10, 40) - cell_param_count("RNN", 10, 20) == (40 * 40 + 40 * 10 + 40) - (20 * 20 + 20 * 10 + 20)
    assert cell_param_count("LSTM", 10, 20) == 4 * cell_param_count("RNN", 10, 20)
    assert cell_param_count("GRU", 10, 20) == 3 * cell_param_count("RNN", 10, 20)


@pytest.mark.parametrize("cell", sorted(CELLS))
@pytest.mark.parametrize("layers", [1, 2])
def test_gradients_match_finite_differences(rng, cell, layers):
    m = RecurrentModel(RecurrentSpec(cell, layers, 3, 4), seed=int(rng.integers(100)))
    assert model_gradient_error(m, PEPTIDES, rng, coords_per_tensor=10) <= 1e-4


def test_lstm_zero_forget_bias_gradients(rng):
    m = RecurrentModel(RecurrentSpec("LSTM", 1, 3, 4), seed=3)
    m.params["b0"][4:8] = 0.0
    assert model_gradient_error(m, PEPTIDES, rng) <= 1e-4


def test_input_gradients(rng):
    m = RecurrentModel(RecurrentSpec("GRU", 1, 3, 4), seed=1)
    x = m.embed("ACDEFGHIK")
    g = m.input_gradients(x)
    e = np.zeros_like(x)
    e[3, 1] = 1e-6
    fd = (m.scores_from_inputs(x + e) - m.scores_from_inputs(x - e)) / 2e-6
    assert g[3, 1] == pytest.approx(fd, rel=1e-5)


def test_reversal_changes_score():
    m = RecurrentModel(RecurrentSpec("LSTM", 1, 4, 5), seed=2)
    a, b = m.predict_scores(["ACDEFGHIK", "ACDEFGHIK"[::-1]])
    assert abs(a - b) > 1e-8


def test_save_load(tmp_path):
    m = RecurrentModel(PRESETS["K4"], seed=5)
    m.save(tmp_path / "k4.npz")
    back, meta = load_model(tmp_path / "k4.npz")
    assert meta["param_count"] == param_count(PRESETS["K4"])
    np.testing.assert_array_equal(back.predict_scores(PEPTIDES), m.predict_scores(PEPTIDES))


def test_invalid_specs():
    with pytest.raises(ValueError):
        RecurrentSpec("TRANSFORMER")
    with pytest.raises(ValueError):
        RecurrentSpec("RNN", layers=3)
