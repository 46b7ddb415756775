"""Lowering to {CNOT, RX, RY, RZ, H} and two-qubit gate accounting.

All-to-all connectivity is assumed; there is no routing.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .simcore import GATE_KINDS, Circuit, Gate, SimulationError

NATIVE = frozenset({"CNOT", "RX", "RY", "RZ", "H"})


def _angle(g: Gate) -> float:
    if g.theta is None:
        raise SimulationError(f"{g.kind} has no bound angle; bind parameters before compiling")
    return g.theta


def _crz(c: int, t: int, theta: float) -> list[Gate]:
    return [Gate("RZ", t, theta=theta / 2), Gate("CNOT", t, c), Gate("RZ", t, theta=-theta / 2), Gate("CNOT", t, c)]


def decompose_gate(g: Gate) -> list[Gate]:
    if g.kind not in GATE_KINDS:
        raise SimulationError(f"unsupported gate {g.kind}")
    if g.kind in NATIVE:
        return [g]
    c, t = g.control, g.target
    if g.kind == "CZ":
        return [Gate("H", t), Gate("CNOT", t, c), Gate("H", t)]
    theta = _angle(g)
    if g.kind == "CRZ":
        return _crz(c, t, theta)
    if g.kind == "CRX":
        return [Gate("H", t), *_crz(c, t, theta), Gate("H", t)]
    # CRY: RX(pi/2) maps the Z generator onto Y by conjugation
    return [Gate("RX", t, theta=np.pi / 2), *_crz(c, t, theta), Gate("RX", t, theta=-np.pi / 2)]


def decompose(circuit: Circuit) -> Circuit:
    """Unitary-equivalent circuit whose only two-qubit gate is CNOT."""
    out = Circuit(circuit.n)
    for g in circuit.gates:
        out.extend(decompose_gate(g))
    return out


def fuse(circuit: Circuit, atol: float = 1e-12) -> Circuit:
    """Cancel adjacent H pairs and merge adjacent same-axis rotations on a qubit.

    Two-qubit gates are left untouched (folded CNOT runs must survive).
    """
    out: list[Gate | None] = []
    last: dict[int, int] = {}
    for g in circuit.gates:
        if g.control is None:
            j = last.get(g.target)
            prev = out[j] if j is not None else None
            if prev is not None and prev.control is None:
                if g.kind == "H" and prev.kind == "H":
                    out[j] = None
                    del last[g.target]
                    _restore(out, last, g.target)
                    continue
                if g.kind == prev.kind and g.kind in ("RX", "RY", "RZ"):
                    theta = _angle(prev) + _angle(g)
                    if abs(theta) < atol:
                        out[j] = None
                        del last[g.target]
                        _restore(out, last, g.target)
                    else:
                        out[j] = Gate(g.kind, g.target, theta=theta)
                    continue
        out.append(Gate(g.kind, g.target, g.control, g.theta) if g.param_id is not None else g)
        for q in g.qubits:
            last[q] = len(out) - 1
    return Circuit(circuit.n, [g for g in out if g is not None])


def _restore(out, last, q):
    for j in range(len(out) - 1, -1, -1):
        if out[j] is not None and q in out[j].qubits:
            last[q] = j
            return


@dataclass
class GateCountReport:
    pre_two_qubit: int
    post_two_qubit: int
    per_kind: dict = field(default_factory=dict)
    post_per_kind: dict = field(default_factory=dict)


def count_two_qubit(circuit: Circuit) -> GateCountReport:
    """Two-qubit gate totals before and after decomposition."""
    post = decompose(circuit)
    return GateCountReport(
        pre_two_qubit=circuit.two_qubit_count(),
        post_two_qubit=post.two_qubit_count(),
        per_kind=dict(sorted(Counter(g.kind for g in circuit.gates).items())),
        post_per_kind=dict(sorted(Counter(g.kind for g in post.gates).items())),
    )
