"""Shot-based depolarising emulation, CNOT-folding ZNE and shot-noise F1 bounds.

Noise is simulated with Pauli trajectories: every shot is its own pure-state
trajectory; after each gate, with probability ``p1`` (one-qubit gates) or
``p2`` (two-qubit gates), a uniformly random Pauli from the 4**k Paulis on the
touched qubits (identity included) is inserted, which realises the
depolarising channel of strength ``p``. Each trajectory is measured once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .compiler import decompose
from .model import sigmoid
from .simcore import Circuit, QuantumState, _apply, _index, _resolve, _z_signs, expectations_z, run
from .train import f1_score

DEFAULT_SHOTS = 2**10
_CHUNK_AMPLITUDES = 1 << 22


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 0.001
    p2: float = 0.01
    shots: int = DEFAULT_SHOTS
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
            raise ValueError("depolarising probabilities must lie in [0, 1]")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


@dataclass(frozen=True)
class ZNEConfig:
    fold_factors: tuple[int, ...] = (1, 3, 5, 7)

    def __post_init__(self):
        factors = tuple(sorted(set(int(f) for f in self.fold_factors) | {1}))
        if any(f < 1 or f % 2 == 0 for f in factors):
            raise ValueError(f"fold factors must be odd positive integers, got {self.fold_factors}")
        object.__setattr__(self, "fold_factors", factors)


def fold_cnots(circuit: Circuit, factor: int) -> Circuit:
    """Replace every CNOT by ``factor`` consecutive copies (``factor`` odd)."""
    if factor < 1 or factor % 2 == 0:
        raise ValueError(f"fold factor must be an odd positive integer, got {factor}")
    out = Circuit(circuit.n)
    for g in circuit.gates:
        out.extend([g] * factor if g.kind == "CNOT" else [g])
    return out


def _pauli_kick(psi: np.ndarray, n: int, qubit: int, codes: np.ndarray) -> None:
    """Apply X (1), Y (2) or Z (3) on ``qubit`` row-wise; 0 is identity. Global phases dropped."""
    z_rows = np.flatnonzero((codes == 2) | (codes == 3))
    if z_rows.size:
        sub = psi[z_rows]
        sub[_index(n, ((qubit, 1),))] *= -1.0
        psi[z_rows] = sub
    x_rows = np.flatnonzero((codes == 1) | (codes == 2))
    if x_rows.size:
        sub = psi[x_rows]
        i0, i1 = _index(n, ((qubit, 0),)), _index(n, ((qubit, 1),))
        a0 = sub[i0].copy()
        sub[i0] = sub[i1]
        sub[i1] = a0
        psi[x_rows] = sub


def _trajectories(circuit: Circuit, noise: NoiseModel, shots: int, rng: np.random.Generator) -> np.ndarray:
    n = circuit.n
    psi = QuantumState(n, batch=shots).tensor()
    for g in circuit.gates:
        _apply(psi, n, g, _resolve(g, None))
        p = noise.p2 if g.is_two_qubit else noise.p1
        if p <= 0.0:
            continue
        hit = np.flatnonzero(rng.random(shots) < p)
        if hit.size == 0:
            continue
        for q in g.qubits:
            codes = np.zeros(shots, dtype=np.int8)
            codes[hit] = rng.integers(0, 4, size=hit.size)
            _pauli_kick(psi, n, q, codes)
    probs = (np.abs(psi) ** 2).reshape(shots, -1)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(shots) * cdf[:, -1]
    outcomes = np.minimum((cdf < u[:, None]).sum(axis=1), (1 << n) - 1)
    return _z_signs(n)[outcomes].sum(axis=0)


def noisy_expectations(circuit: Circuit, noise: NoiseModel) -> np.ndarray:
    """Empirical <Z_i> from ``noise.shots`` noisy trajectories, one measurement each."""
    rng = np.random.default_rng(noise.seed)
    n = circuit.n
    if noise.p1 == 0.0 and noise.p2 == 0.0:
        probs = np.abs(run(circuit).amps) ** 2
        counts = rng.multinomial(noise.shots, probs / probs.sum())
        return (counts @ _z_signs(n)) / noise.shots
    chunk = max(1, _CHUNK_AMPLITUDES >> n)
    total = np.zeros(n)
    done = 0
    while done < noise.shots:
        m = min(chunk, noise.shots - done)
        total += _trajectories(circuit, noise, m, rng)
        done += m
    return total / noise.shots


@dataclass
class ZNEResult:
    factors: list[int]
    raw: np.ndarray  # (len(factors), n) noisy estimates per fold factor
    mitigated: np.ndarray  # (n,)
    slope: np.ndarray  # (n,)

    @property
    def unmitigated(self) -> np.ndarray:
        return self.raw[self.factors.index(1)]

    def rows(self, exact=None) -> list[dict]:
        out = []
        for q in range(self.raw.shape[1]):
            row = {"qubit": q, **{f"factor_{f}": float(self.raw[i, q]) for i, f in enumerate(self.factors)},
                   "extrapolated": float(self.mitigated[q])}
            if exact is not None:
                row["exact"] = float(exact[q])
            out.append(row)
        return out


def extrapolate_to_zero(factors, values) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares line through (factor, value) per column; returns (intercept, slope)."""
    x = np.asarray(factors, dtype=float)
    y = np.asarray(values, dtype=float)
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct fold factors to extrapolate")
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y.reshape(len(x), -1), rcond=None)
    intercept, slope = coef[0], coef[1]
    return intercept.reshape(y.shape[1:]), slope.reshape(y.shape[1:])


def zne_estimate(circuit: Circuit, noise: NoiseModel, cfg: ZNEConfig | None = None) -> ZNEResult:
    """Fold CNOTs by each factor, emulate, and extrapolate linearly to factor 0.

    Controlled rotations and CZ are decomposed to CNOTs first so folding is
    well defined. Each factor draws from its own seed stream.
    """
    cfg = cfg or ZNEConfig()
    if len(cfg.fold_factors) < 2:
        raise ValueError("need at least two distinct fold factors to extrapolate")
    base = decompose(circuit)
    raw = []
    for f in cfg.fold_factors:
        seed = int(np.random.SeedSequence([noise.seed, f]).generate_state(1)[0])
        sub = NoiseModel(noise.p1, noise.p2, noise.shots, seed)
        raw.append(noisy_expectations(fold_cnots(base, f), sub))
    raw = np.array(raw)
    intercept, slope = extrapolate_to_zero(cfg.fold_factors, raw)
    return ZNEResult(list(cfg.fold_factors), raw, np.clip(intercept, -1.0, 1.0), slope)


def exact_expectations(circuit: Circuit) -> np.ndarray:
    return expectations_z(run(circuit))


@dataclass
class ShotBounds:
    min_f1: float
    max_f1: float
    base_f1: float
    delta: float
    vectors_evaluated: int
    f1_per_vector: list[float] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.max_f1 - self.min_f1


def _l1_head(head):
    if hasattr(head, "params"):
        if head.config.head != "L1":
            raise ValueError("shot-noise bounds need an L1 head")
        return head.params["head_w"], float(head.params["head_b"][0])
    w, b = head
    return np.asarray(w, dtype=float), float(np.ravel(b)[0])


def shot_noise_f1_bounds(expectation_vectors, head, labels, shots: int) -> ShotBounds:
    """Best/worst F1 when every sequence's expectations shift by one of the (+-1/sqrt(shots))^n corners.

    ``head`` is an L1 hybrid model or a ``(weights, bias)`` pair.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    Z = np.asarray(expectation_vectors, dtype=float)
    w, b = _l1_head(head)
    if Z.ndim != 2 or Z.shape[1] != w.size:
        raise ValueError(f"expectation vectors must have shape (N, {w.size})")
    delta = 1.0 / math.sqrt(shots)
    base = f1_score(sigmoid(Z @ w + b) > 0.5, labels)
    f1s = []
    for signs in itertools.product((-1.0, 1.0), repeat=w.size):
        shifted = Z + delta * np.array(signs)
        f1s.append(f1_score(sigmoid(shifted @ w + b) > 0.5, labels))
    return ShotBounds(min(f1s), max(f1s), base, float(delta), len(f1s), f1s)
