import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_unitary, oracle_state, random_circuit
from qpeptide.simcore import (
    Circuit,
    Gate,
    QuantumState,
    SimulationError,
    apply_gate,
    apply_z_observable,
    backward,
    expectation_z,
    expectations_from_counts,
    expectations_z,
    gate_matrix,
    run,
    sample_counts,
)


def test_rx_pi_flips_with_phase():
    s = apply_gate(QuantumState(1), Gate("RX", 0, theta=np.pi))
    np.testing.assert_allclose(s.amps, [0, -1j], atol=1e-15)
    assert expectation_z(s, 0) == pytest.approx(-1.0)


def test_hadamard_on_zero():
    s = apply_gate(QuantumState(1), Gate("H", 0))
    np.testing.assert_allclose(s.amps, [2**-0.5, 2**-0.5])


def test_cz_phases_only_11():
    s = QuantumState(2, amps=[0, 0, 0, 1])
    apply_gate(s, Gate("CZ", 1, 0))
    np.testing.assert_allclose(s.amps, [0, 0, 0, -1])
    # |10> in (q1 q0) notation is index 2: qubit 1 set, qubit 0 clear
    s = QuantumState(2, amps=[0, 0, 1, 0])
    apply_gate(s, Gate("CZ", 1, 0))
    np.testing.assert_allclose(s.amps, [0, 0, 1, 0])


def test_qubit_zero_is_lsb():
    s = apply_gate(QuantumState(3), Gate("RX", 0, theta=np.pi))
    assert np.argmax(np.abs(s.amps)) == 1
    assert expectations_z(s).tolist() == pytest.approx([-1, 1, 1])


def test_basis_and_superposition_expectations():
    s = QuantumState(2)
    assert expectations_z(s).tolist() == [1.0, 1.0]
    apply_gate(s, Gate("H", 0))
    assert expectation_z(s, 0) == pytest.approx(0.0, abs=1e-15)
    assert expectation_z(s, 1) == pytest.approx(1.0)


def test_random_three_qubit_against_oracle(rng):
    c = random_circuit(rng, 3, 10)
    psi = oracle_state(c)
    z_oracle = [np.sum(np.abs(psi) ** 2 * (1 - 2 * ((np.arange(8) >> q) & 1))) for q in range(3)]
    np.testing.assert_allclose(expectations_z(run(c)), z_oracle, atol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_amplitudes_match_oracle(rng, n):
    for _ in range(10):
        c = random_circuit(rng, n, int(rng.integers(1, 51)))
        np.testing.assert_allclose(run(c).amps, oracle_state(c), atol=1e-10, rtol=0)


def test_gate_matrix_matches_controlled_definition():
    theta = 0.7
    m = gate_matrix(Gate("CRY", 1, 0, theta=theta))
    np.testing.assert_allclose(m[:2, :2], np.eye(2))
    np.testing.assert_allclose(m[2:, 2:], [[np.cos(0.35), -np.sin(0.35)], [np.sin(0.35), np.cos(0.35)]])


def test_both_control_orientations(rng):
    for kind in ("CNOT", "CRX", "CRY", "CRZ", "CZ"):
        for ctrl, tgt in ((0, 2), (2, 0), (1, 0)):
            theta = None if kind in ("CNOT", "CZ") else 1.1
            c = Circuit(3, [Gate("H", 0), Gate("RY", 1, theta=0.4), Gate("H", 2), Gate(kind, tgt, ctrl, theta)])
            np.testing.assert_allclose(run(c).amps, oracle_state(c), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 5), length=st.integers(0, 40))
def test_norm_preserved(seed, n, length):
    c = random_circuit(np.random.default_rng(seed), n, length)
    assert abs(run(c).norm() - 1.0) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4))
def test_gate_then_inverse_is_identity(seed, n):
    rng = np.random.default_rng(seed)
    prefix = random_circuit(rng, n, 8)
    start = run(prefix).amps.copy()
    for g in random_circuit(rng, n, 6).gates:
        s = QuantumState(n, amps=start)
        apply_gate(s, g)
        apply_gate(s, g.inverse())
        np.testing.assert_allclose(s.amps, start, atol=1e-10)


def test_circuit_inverse_undoes_circuit(rng):
    c = random_circuit(rng, 4, 30)
    s = run(c)
    run(c.inverse(), state=s)
    expected = np.zeros(16)
    expected[0] = 1
    np.testing.assert_allclose(s.amps, expected, atol=1e-10)


def test_batched_rows_match_single_runs(rng):
    c = random_circuit(rng, 3, 20, parametrised=True)
    P = c.num_params
    params = rng.uniform(-3, 3, (4, P))
    batched = run(c, params).amps
    for b in range(4):
        np.testing.assert_allclose(batched[b], oracle_state(c, params[b]), atol=1e-10)


def test_sampling_deterministic_state():
    counts = sample_counts(QuantumState(1), 1024, rng_seed=0)
    assert counts == {"0": 1024}


def test_sampling_plus_state_within_binomial_band():
    s = apply_gate(QuantumState(1), Gate("H", 0))
    inside = 0
    for seed in range(200):
        z = expectations_from_counts(sample_counts(s, 1024, seed), 1)[0]
        inside += abs(z) <= 0.094
    assert inside >= 198


def test_sampling_reproducible_and_bit_order(rng):
    c = random_circuit(rng, 3, 15)
    s = run(c)
    assert sample_counts(s, 500, 7) == sample_counts(s, 500, 7)
    one = apply_gate(QuantumState(3), Gate("RX", 0, theta=np.pi))
    assert sample_counts(one, 10, 0) == {"001": 10}


def test_sampling_converges_like_inverse_sqrt_shots(rng):
    c = random_circuit(rng, 3, 20)
    s = run(c)
    exact = expectations_z(s)
    for shots in (2**6, 2**10, 2**14):
        errs = [np.max(np.abs(expectations_from_counts(sample_counts(s, shots, k), 3) - exact)) for k in range(20)]
        assert np.median(errs) <= 3.0 / np.sqrt(shots)


def test_rx_gradient_is_minus_sin():
    c = Circuit(1, [Gate("RX", 0, param_id=0)])
    for theta, expected in ((0.0, 0.0), (np.pi / 2, -1.0), (1.3, -np.sin(1.3))):
        s = run(c, np.array([theta]))
        g = backward(c, np.array([theta]), apply_z_observable(s, [1.0]), s)
        assert g[0] == pytest.approx(expected, abs=1e-12)


def _fd_check(c, params, weights, h=1e-5):
    def f(p):
        return float(expectations_z(run(c, p)) @ weights)

    s = run(c, params)
    grad = backward(c, params, apply_z_observable(s, weights), s)
    fd = np.array([(f(params + h * e) - f(params - h * e)) / (2 * h) for e in np.eye(len(params))])
    scale = np.maximum(np.abs(fd), 1e-3)
    assert np.max(np.abs(grad - fd) / scale) <= 1e-4
    return grad


def test_adjoint_matches_finite_differences(rng):
    for _ in range(5):
        c = random_circuit(rng, 3, 24, parametrised=True)
        while c.num_params != 12:
            c = random_circuit(rng, 3, 24, parametrised=True)
        _fd_check(c, rng.uniform(-3, 3, 12), rng.normal(size=3))


def test_adjoint_batched_rows(rng):
    c = random_circuit(rng, 3, 15, parametrised=True)
    params = rng.uniform(-3, 3, (3, c.num_params))
    w = np.array([0.3, -1.0, 0.5])
    s = run(c, params)
    g = backward(c, params, apply_z_observable(s, np.tile(w, (3, 1))), s)
    for b in range(3):
        np.testing.assert_allclose(g[b], _fd_check(c, params[b], w), atol=1e-10)


def test_shared_parameter_accumulates():
    c = Circuit(2, [Gate("RY", 0, param_id=0), Gate("CRX", 1, 0, param_id=0)])
    p = np.array([0.9])
    s = run(c, p)
    w = np.array([1.0, 1.0])
    g = backward(c, p, apply_z_observable(s, w), s)[0]
    f = lambda t: expectations_z(run(c, np.array([t]))).sum()  # noqa: E731
    assert g == pytest.approx((f(0.9 + 1e-6) - f(0.9 - 1e-6)) / 2e-6, rel=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="FOO", target=0),
        dict(kind="CNOT", target=0),
        dict(kind="RX", target=0),
        dict(kind="CRX", target=1, control=1, theta=0.1),
        dict(kind="H", target=0, theta=0.3),
    ],
)
def test_invalid_gates_rejected(kwargs):
    with pytest.raises(SimulationError):
        Gate(**kwargs)


def test_circuit_checks_qubit_range():
    with pytest.raises(SimulationError):
        Circuit(2, [Gate("H", 2)])


def test_nonfinite_angle_rejected():
    with pytest.raises(SimulationError):
        run(Circuit(1, [Gate("RX", 0, theta=float("nan"))]))


def test_dense_oracle_is_unitary(rng):
    g = Gate("CRY", 0, 2, theta=0.3)
    u = dense_unitary(g, 3)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(8), atol=1e-12)
