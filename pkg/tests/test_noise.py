import numpy as np
import pytest

from conftest import random_circuit
from qpeptide.ansatz import AnsatzTemplate, SequenceCircuitSpec, build_sequence_circuit
from qpeptide.compiler import decompose
from qpeptide.model import HybridConfig, HybridModel
from qpeptide.noise import (
    NoiseModel,
    ZNEConfig,
    exact_expectations,
    extrapolate_to_zero,
    fold_cnots,
    noisy_expectations,
    shot_noise_f1_bounds,
    zne_estimate,
)
from qpeptide.simcore import Circuit, Gate


def _cnot_circuit():
    c = Circuit(3)
    for q in range(3):
        c.append(Gate("RY", q, theta=0.3 + q))
    for a, b in ((0, 1), (1, 2), (2, 0), (0, 2)):
        c.append(Gate("CNOT", b, a))
    return c


def test_fold_factor_one_is_identity():
    c = _cnot_circuit()
    assert fold_cnots(c, 1).gates == c.gates


def test_fold_factor_three_triples_cnots():
    assert fold_cnots(_cnot_circuit(), 3).two_qubit_count() == 12


def test_fold_rejects_even_factors():
    with pytest.raises(ValueError):
        fold_cnots(_cnot_circuit(), 2)
    with pytest.raises(ValueError):
        ZNEConfig((1, 2))


@pytest.mark.parametrize("tid", [8, 9, 14])
def test_folding_invariance(rng, tid):
    t = AnsatzTemplate(tid, 3)
    c = decompose(build_sequence_circuit(SequenceCircuitSpec(t, 9), rng.uniform(0, 6, (9, t.num_params))))
    base = exact_expectations(c)
    for f in (3, 5, 7):
        np.testing.assert_allclose(exact_expectations(fold_cnots(c, f)), base, atol=1e-10)


def test_noiseless_shots_close_to_exact(rng):
    c = random_circuit(rng, 3, 20)
    est = noisy_expectations(c, NoiseModel(0.0, 0.0, 2**14, seed=1))
    assert np.max(np.abs(est - exact_expectations(c))) <= 0.02


def test_full_depolarising_mixes():
    c = _cnot_circuit()
    est = noisy_expectations(c, NoiseModel(0.0, 1.0, 2**14, seed=2))
    assert np.max(np.abs(est)) <= 0.1


def test_noisy_expectations_seeded_and_bounded(rng):
    c = random_circuit(rng, 3, 25)
    nm = NoiseModel(0.01, 0.05, 2048, seed=5)
    a, b = noisy_expectations(c, nm), noisy_expectations(c, nm)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 1)


def test_trajectory_noise_matches_channel_on_one_qubit():
    p = 0.3
    c = Circuit(1, [Gate("RX", 0, theta=0.0)])
    est = noisy_expectations(c, NoiseModel(p, 0.0, 2**16, seed=3))
    # a kick is X or Y (flipping Z) with probability p/2
    assert est[0] == pytest.approx(1 - p, abs=0.015)


def test_linear_extrapolation_example():
    intercept, slope = extrapolate_to_zero([1, 3, 5, 7], np.array([[0.8], [0.6], [0.4], [0.2]]))
    assert intercept[0] == pytest.approx(0.9)
    assert slope[0] == pytest.approx(-0.1)


def test_extrapolation_needs_two_factors():
    with pytest.raises(ValueError):
        extrapolate_to_zero([1, 1], np.array([[0.1], [0.2]]))


def test_zero_noise_mitigation_agrees(rng):
    c = random_circuit(rng, 3, 15)
    shots = 2**12
    r = zne_estimate(c, NoiseModel(0.0, 0.0, shots, seed=4))
    exact = exact_expectations(c)
    assert np.max(np.abs(r.unmitigated - exact)) <= 4 / np.sqrt(shots)
    assert np.max(np.abs(r.mitigated - r.unmitigated)) <= 4 * 4 / np.sqrt(shots)
    assert len(r.rows(exact)) == 3 and "extrapolated" in r.rows(exact)[0]


def test_zne_clips_to_valid_range():
    c = _cnot_circuit()
    r = zne_estimate(c, NoiseModel(0.0, 0.2, 512, seed=0))
    assert np.all(np.abs(r.mitigated) <= 1)


def test_shot_bounds_basics():
    rng = np.random.default_rng(0)
    Z = rng.uniform(-1, 1, (40, 4))
    w = rng.normal(size=4)
    labels = (Z @ w + rng.normal(scale=0.5, size=40) > 0).astype(int)
    b = shot_noise_f1_bounds(Z, (w, 0.0), labels, 1024)
    assert b.delta == 0.03125
    assert b.vectors_evaluated == 16
    assert b.min_f1 <= b.base_f1 <= b.max_f1
    widths = [shot_noise_f1_bounds(Z, (w, 0.0), labels, s).width for s in (2**6, 2**10, 2**14, 2**40)]
    assert all(x >= y for x, y in zip(widths, widths[1:]))
    tiny = shot_noise_f1_bounds(Z, (w, 0.0), labels, 2**60)
    assert tiny.min_f1 == tiny.max_f1 == tiny.base_f1


def test_shot_bounds_reject_non_l1_model():
    m = HybridModel(HybridConfig(head="L2"))
    with pytest.raises(ValueError):
        shot_noise_f1_bounds(np.zeros((3, 2)), m, [0, 1, 0], 64)


def test_shot_bounds_accept_huge_shot_counts():
    b = shot_noise_f1_bounds(np.zeros((2, 2)), (np.ones(2), 0.1), [1, 0], 2**100)
    assert b.delta == pytest.approx(2.0**-50)
