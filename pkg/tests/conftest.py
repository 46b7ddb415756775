import numpy as np
import pytest

from qpeptide.simcore import Circuit, Gate

KINDS_1Q = ("H", "RX", "RY", "RZ")
KINDS_2Q = ("CNOT", "CZ", "CRX", "CRY", "CRZ")

_P0 = np.diag([1.0, 0.0]).astype(complex)
_P1 = np.diag([0.0, 1.0]).astype(complex)
_I2 = np.eye(2, dtype=complex)


def _embed(n, ops):
    """Kronecker product with qubit n-1 leftmost (qubit 0 is the LSB)."""
    out = np.ones((1, 1), dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, ops.get(q, _I2))
    return out


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]])
_Z = np.diag([1.0, -1.0]).astype(complex)


def local_matrix(kind, theta):
    """Textbook 2x2 matrices, written independently of the simulator."""
    if kind == "H":
        return (_X + _Z) / np.sqrt(2)
    if kind == "CNOT":
        return _X
    if kind == "CZ":
        return _Z
    pauli = {"X": _X, "Y": _Y, "Z": _Z}[kind[-1]]
    return np.cos(theta / 2) * _I2 - 1j * np.sin(theta / 2) * pauli


def dense_unitary(gate, n, theta=None):
    theta = gate.theta if theta is None else theta
    m = local_matrix(gate.kind, theta)
    if gate.control is None:
        return _embed(n, {gate.target: m})
    return _embed(n, {gate.control: _P0}) + _embed(n, {gate.control: _P1, gate.target: m})


def oracle_state(circuit, params=None):
    psi = np.zeros(1 << circuit.n, dtype=complex)
    psi[0] = 1.0
    for g in circuit.gates:
        theta = params[g.param_id] if (params is not None and g.param_id is not None) else g.theta
        psi = dense_unitary(g, circuit.n, theta) @ psi
    return psi


def random_circuit(rng, n, n_gates, parametrised=False):
    """Random circuit; bound angles, or one param id per rotation when ``parametrised``."""
    c = Circuit(n)
    pid = 0
    for _ in range(n_gates):
        two = n > 1 and rng.random() < 0.4
        kind = str(rng.choice(KINDS_2Q if two else KINDS_1Q))
        t = int(rng.integers(n))
        ctrl = None
        if two:
            ctrl = int(rng.choice([q for q in range(n) if q != t]))
        theta = None
        param_id = None
        if kind not in ("H", "CNOT", "CZ"):
            theta = float(rng.uniform(-2 * np.pi, 2 * np.pi))
            if parametrised:
                param_id = pid
                pid += 1
        c.append(Gate(kind, t, ctrl, theta, param_id))
    return c


def equal_up_to_phase(a, b, atol):
    k = int(np.argmax(np.abs(b)))
    if abs(b[k]) < 1e-12:
        return np.allclose(a, b, atol=atol)
    phase = a[k] / b[k]
    phase /= abs(phase)
    return np.max(np.abs(a - phase * b)) <= atol


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def model_gradient_error(model, peptides, rng, coords_per_tensor=None, h=1e-5, floor=1e-4):
    """Worst relative error of ``scores_and_pullback`` against central differences.

    The scalar checked is a random weighting of the scores. ``coords_per_tensor``
    limits how many coordinates of each tensor are probed (all when None).
    ``floor`` bounds the denominator so vanishing gradients compare absolutely.
    """
    weights = rng.normal(size=len(peptides))
    scores, pullback = model.scores_and_pullback(peptides)
    grads = pullback(weights)
    worst = 0.0
    for name, value in model.params.items():
        flat = value.reshape(-1)
        idx = np.arange(flat.size)
        if coords_per_tensor is not None and flat.size > coords_per_tensor:
            idx = rng.choice(flat.size, coords_per_tensor, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = model.predict_scores(peptides) @ weights
            flat[i] = old - h
            down = model.predict_scores(peptides) @ weights
            flat[i] = old
            fd = (up - down) / (2 * h)
            g = grads[name].reshape(-1)[i]
            err = abs(g - fd) / max(abs(fd), abs(g), floor)
            worst = max(worst, err)
    return worst
