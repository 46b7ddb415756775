"""Dense statevector simulation with adjoint gradients.

Qubit ``q`` is bit ``q`` of the basis-state index (qubit 0 is the least
significant bit). States may carry a leading batch axis; every gate then acts
on all batch rows at once, with per-row angles when parameters are batched.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

ROTATIONS = frozenset({"RX", "RY", "RZ"})
CONTROLLED_ROTATIONS = frozenset({"CRX", "CRY", "CRZ"})
FIXED_TWO_QUBIT = frozenset({"CZ", "CNOT"})
SINGLE_QUBIT = ROTATIONS | {"H"}
CONTROLLED = CONTROLLED_ROTATIONS | FIXED_TWO_QUBIT
PARAMETRISED = ROTATIONS | CONTROLLED_ROTATIONS
GATE_KINDS = SINGLE_QUBIT | CONTROLLED

MAX_QUBITS = 12


class SimulationError(ValueError):
    """Invalid gate, circuit or state."""


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int | None = None
    theta: float | None = None
    param_id: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        if (self.control is not None) != (self.kind in CONTROLLED):
            raise SimulationError(f"{self.kind}: control qubit required iff gate is controlled")
        if self.control is not None and self.control == self.target:
            raise SimulationError(f"{self.kind}: control and target coincide ({self.target})")
        if self.kind in PARAMETRISED:
            if self.theta is None and self.param_id is None:
                raise SimulationError(f"{self.kind} on qubit {self.target} has no angle")
        elif self.theta is not None or self.param_id is not None:
            raise SimulationError(f"{self.kind} takes no angle")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)

    @property
    def is_two_qubit(self) -> bool:
        return self.control is not None

    def inverse(self) -> Gate:
        if self.kind in PARAMETRISED:
            if self.theta is None:
                raise SimulationError("cannot invert an unbound parameterised gate")
            return Gate(self.kind, self.target, self.control, -self.theta)
        return self  # H, CZ, CNOT are self-inverse


@dataclass
class Circuit:
    n: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise SimulationError(f"qubit count {self.n} outside [1, {MAX_QUBITS}]")
        for g in self.gates:
            self._check(g)

    def _check(self, gate: Gate):
        for q in gate.qubits:
            if not 0 <= q < self.n:
                raise SimulationError(f"{gate.kind} acts on qubit {q}, circuit has {self.n}")

    def append(self, gate: Gate) -> None:
        self._check(gate)
        self.gates.append(gate)

    def extend(self, gates) -> None:
        for g in gates:
            self.append(g)

    @property
    def num_params(self) -> int:
        ids = {g.param_id for g in self.gates if g.param_id is not None}
        if not ids:
            return 0
        if ids != set(range(max(ids) + 1)):
            raise SimulationError("parameter ids are not a contiguous range starting at 0")
        return max(ids) + 1

    def bound_params(self) -> np.ndarray:
        """Parameter vector recovered from the gates' stored angles."""
        out = np.zeros(self.num_params)
        for g in self.gates:
            if g.param_id is not None:
                out[g.param_id] = g.theta if g.theta is not None else 0.0
        return out

    def inverse(self) -> Circuit:
        return Circuit(self.n, [g.inverse() for g in reversed(self.gates)])

    def two_qubit_count(self) -> int:
        return sum(g.is_two_qubit for g in self.gates)

    def __len__(self):
        return len(self.gates)


class QuantumState:
    """Statevector over ``n`` qubits, optionally batched.

    ``amps`` has shape ``(2**n,)`` or ``(batch, 2**n)``. Gate application
    mutates ``amps`` in place.
    """

    def __init__(self, n: int, batch: int | None = None, amps: np.ndarray | None = None):
        if not 1 <= n <= MAX_QUBITS:
            raise SimulationError(f"qubit count {n} outside [1, {MAX_QUBITS}]")
        self._n = n
        if amps is None:
            shape = (1 << n,) if batch is None else (batch, 1 << n)
            amps = np.zeros(shape, dtype=np.complex128)
            amps[..., 0] = 1.0
        else:
            amps = np.array(amps, dtype=np.complex128, order="C")
            if amps.shape[-1] != 1 << n or amps.ndim > 2:
                raise SimulationError(f"amplitude shape {amps.shape} does not match {n} qubits")
        self.amps = amps

    @property
    def n(self) -> int:
        return self._n

    @property
    def batched(self) -> bool:
        return self.amps.ndim == 2

    def copy(self) -> QuantumState:
        return QuantumState(self._n, amps=self.amps.copy())

    def norm(self) -> np.ndarray | float:
        return np.sum(np.abs(self.amps) ** 2, axis=-1)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def tensor(self) -> np.ndarray:
        """Writable view of shape (batch, 2, ..., 2); axis 1 is qubit n-1."""
        return self.amps.reshape((-1,) + (2,) * self._n)


@lru_cache(maxsize=None)
def _index(n: int, fixed: tuple[tuple[int, int], ...]) -> tuple:
    """Index tuple into ``QuantumState.tensor()`` pinning qubits to bits."""
    idx = [slice(None)] * (n + 1)
    for q, bit in fixed:
        idx[n - q] = bit
    return tuple(idx)


def _angles(theta, ndim: int) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    return t.reshape((-1,) + (1,) * (ndim - 1)) if t.ndim else t


def _rotate(psi: np.ndarray, n: int, kind: str, target: int, theta, pinned=()) -> None:
    i0 = _index(n, pinned + ((target, 0),))
    i1 = _index(n, pinned + ((target, 1),))
    a0 = psi[i0]
    a1 = psi[i1]
    t = _angles(theta, a0.ndim) / 2.0
    c, s = np.cos(t), np.sin(t)
    if kind.endswith("X"):
        n0 = c * a0 - 1j * s * a1
        n1 = -1j * s * a0 + c * a1
    elif kind.endswith("Y"):
        n0 = c * a0 - s * a1
        n1 = s * a0 + c * a1
    else:
        phase = c - 1j * s
        n0 = phase * a0
        n1 = np.conj(phase) * a1
    psi[i0] = n0
    psi[i1] = n1


def _apply(psi: np.ndarray, n: int, gate: Gate, theta) -> None:
    kind, t = gate.kind, gate.target
    if kind in ROTATIONS:
        _rotate(psi, n, kind, t, theta)
    elif kind == "H":
        i0, i1 = _index(n, ((t, 0),)), _index(n, ((t, 1),))
        a0 = psi[i0].copy()
        a1 = psi[i1]
        psi[i0] = (a0 + a1) / np.sqrt(2.0)
        psi[i1] = (a0 - a1) / np.sqrt(2.0)
    elif kind == "CZ":
        psi[_index(n, ((gate.control, 1), (t, 1)))] *= -1.0
    elif kind == "CNOT":
        i0 = _index(n, ((gate.control, 1), (t, 0)))
        i1 = _index(n, ((gate.control, 1), (t, 1)))
        a0 = psi[i0].copy()
        psi[i0] = psi[i1]
        psi[i1] = a0
    else:
        _rotate(psi, n, kind, t, theta, pinned=((gate.control, 1),))


def _resolve(gate: Gate, params) -> float | np.ndarray:
    if gate.kind not in PARAMETRISED:
        return None
    if params is not None and gate.param_id is not None:
        theta = params[..., gate.param_id]
    else:
        theta = gate.theta
    if theta is None:
        raise SimulationError(f"{gate.kind} on qubit {gate.target} has no angle")
    if not np.all(np.isfinite(theta)):
        raise SimulationError(f"{gate.kind} angle is not finite")
    return theta


def apply_gate(state: QuantumState, gate: Gate, theta=None) -> QuantumState:
    """Apply ``gate`` to ``state`` in place and return it.

    ``theta`` overrides the gate's stored angle; it may be a scalar or a
    per-batch-row vector.
    """
    for q in gate.qubits:
        if not 0 <= q < state.n:
            raise SimulationError(f"{gate.kind} acts on qubit {q}, state has {state.n}")
    if gate.kind in PARAMETRISED:
        if theta is None:
            theta = gate.theta
        if theta is None:
            raise SimulationError(f"{gate.kind} on qubit {gate.target} has no angle")
        if not np.all(np.isfinite(theta)):
            raise SimulationError(f"{gate.kind} angle is not finite")
    _apply(state.tensor(), state.n, gate, theta)
    return state


def _check_params(circuit: Circuit, params) -> np.ndarray | None:
    if params is None:
        return None
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != circuit.num_params:
        raise SimulationError(
            f"parameter vector has length {params.shape[-1]}, circuit expects {circuit.num_params}"
        )
    return params


def run(circuit: Circuit, params=None, state: QuantumState | None = None) -> QuantumState:
    """Evolve ``state`` (default ``|0...0>``) through ``circuit``.

    ``params`` of shape ``(P,)`` or ``(batch, P)`` replaces the stored angle of
    every gate carrying a ``param_id``.
    """
    params = _check_params(circuit, params)
    if state is None:
        batch = params.shape[0] if params is not None and params.ndim == 2 else None
        state = QuantumState(circuit.n, batch=batch)
    elif state.n != circuit.n:
        raise SimulationError(f"state has {state.n} qubits, circuit {circuit.n}")
    psi = state.tensor()
    for g in circuit.gates:
        _apply(psi, circuit.n, g, _resolve(g, params))
    return state


def expectation_z(state: QuantumState, qubit: int):
    """<Z_q> = P(q=0) - P(q=1); one value per batch row."""
    if not 0 <= qubit < state.n:
        raise SimulationError(f"qubit {qubit} out of range for {state.n} qubits")
    p = np.abs(state.tensor()) ** 2
    n = state.n
    z = p[_index(n, ((qubit, 0),))].reshape(p.shape[0], -1).sum(1) - p[
        _index(n, ((qubit, 1),))
    ].reshape(p.shape[0], -1).sum(1)
    return z if state.batched else float(z[0])


def expectations_z(state: QuantumState) -> np.ndarray:
    """All single-qubit Z expectations, shape ``(n,)`` or ``(batch, n)``."""
    p = (np.abs(state.amps) ** 2).reshape(-1, 1 << state.n)
    signs = _z_signs(state.n)
    z = p @ signs
    return z if state.batched else z[0]


@lru_cache(maxsize=None)
def _z_signs(n: int) -> np.ndarray:
    k = np.arange(1 << n)[:, None]
    bits = (k >> np.arange(n)[None, :]) & 1
    out = 1.0 - 2.0 * bits
    out.setflags(write=False)
    return out


def apply_z_observable(state: QuantumState, weights) -> np.ndarray:
    """Amplitudes of ``(sum_i w_i Z_i) |psi>``; weights shape ``(n,)`` or ``(batch, n)``."""
    w = np.asarray(weights, dtype=float).reshape(-1, state.n)
    diag = w @ _z_signs(state.n).T
    out = state.amps.reshape(-1, 1 << state.n) * diag
    return out if state.batched else out[0]


def sample_counts(state: QuantumState, shots: int, rng_seed: int) -> Counter:
    """Draw ``shots`` computational-basis outcomes.

    Keys are bitstrings with qubit ``n-1`` first. Sampling uses
    ``numpy.random.default_rng(rng_seed)``.
    """
    if shots < 1:
        raise SimulationError("shots must be at least 1")
    if state.batched:
        raise SimulationError("sample_counts expects an unbatched state")
    p = np.abs(state.amps) ** 2
    p = p / p.sum()
    rng = np.random.default_rng(rng_seed)
    draws = rng.multinomial(shots, p)
    return Counter({format(k, f"0{state.n}b"): int(c) for k, c in enumerate(draws) if c})


def expectations_from_counts(counts: Counter, n: int) -> np.ndarray:
    total = sum(counts.values())
    z = np.zeros(n)
    for bits, c in counts.items():
        for q in range(n):
            z[q] += c if bits[n - 1 - q] == "0" else -c
    return z / total


_GENERATOR = {"X": "RX", "Y": "RY", "Z": "RZ"}


def _apply_generator(psi: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    """Return (dU/dtheta) U^dagger applied to psi, i.e. -i/2 P (projected on control=1)."""
    out = np.zeros_like(psi)
    pinned = () if gate.control is None else ((gate.control, 1),)
    t = gate.target
    i0 = _index(n, pinned + ((t, 0),))
    i1 = _index(n, pinned + ((t, 1),))
    axis = gate.kind[-1]
    a0, a1 = psi[i0], psi[i1]
    if axis == "X":
        out[i0], out[i1] = a1, a0
    elif axis == "Y":
        out[i0], out[i1] = -1j * a1, 1j * a0
    else:
        out[i0], out[i1] = a0, -a1
    return -0.5j * out


def backward(circuit: Circuit, params, cotangent, state: QuantumState | None = None) -> np.ndarray:
    """Adjoint-mode gradient of a real scalar through ``circuit``.

    ``cotangent`` is the vector ``v`` such that the scalar's derivative with
    respect to each parameter is ``2 Re <v | d psi / d theta>``. For a loss of
    Z-expectations pass ``apply_z_observable(final_state, dloss_dz)``.

    ``state`` is the final state of ``run(circuit, params)``; recomputed when
    omitted. Returns an array shaped like ``params``.
    """
    params = _check_params(circuit, params)
    if params is None:
        raise SimulationError("backward needs a parameter vector")
    if state is None:
        state = run(circuit, params)
    n = circuit.n
    psi = state.amps.copy().reshape((-1,) + (2,) * n)
    lam = np.array(cotangent, dtype=np.complex128).reshape(psi.shape)
    if lam.shape != psi.shape:
        raise SimulationError("cotangent shape does not match the state")
    grads = np.zeros((psi.shape[0], params.shape[-1]))
    sum_axes = tuple(range(1, n + 1))
    for g in reversed(circuit.gates):
        theta = _resolve(g, params)
        if g.param_id is not None:
            mu = _apply_generator(psi, n, g)
            grads[:, g.param_id] += 2.0 * np.real(np.sum(np.conj(lam) * mu, axis=sum_axes))
        inv_theta = -theta if theta is not None else None
        _apply(psi, n, g, inv_theta)
        _apply(lam, n, g, inv_theta)
    return grads if params.ndim == 2 else grads[0]


def gate_matrix(gate: Gate, theta: float | None = None) -> np.ndarray:
    """Local unitary of a gate; 2x2, or 4x4 in (control, target) basis order."""
    if theta is None:
        theta = gate.theta
    if gate.kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    if gate.kind == "CZ":
        return np.diag([1, 1, 1, -1]).astype(complex)
    if gate.kind == "CNOT":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    axis = gate.kind[-1]
    if axis == "X":
        r = np.array([[c, -1j * s], [-1j * s, c]])
    elif axis == "Y":
        r = np.array([[c, -s], [s, c]], dtype=complex)
    else:
        r = np.diag([c - 1j * s, c + 1j * s])
    if gate.kind in ROTATIONS:
        return r
    out = np.eye(4, dtype=complex)
    out[2:, 2:] = r
    return out
