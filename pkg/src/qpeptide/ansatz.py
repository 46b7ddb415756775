"""Circuit templates 8, 9 and 14 and the per-peptide sequential circuit.

Layer definitions (one layer, ``n`` qubits):

* template 9:  H on every qubit, CZ on (0,1), ..., (n-2,n-1), RX on every qubit.
* template 14: RY on every qubit, CRX ring with descending controls
  (control i -> target i+1 mod n), RY on every qubit, CRX ring with ascending
  controls (control i -> target i-1 mod n). For n = 2 each ring is a single CRX.
* template 8:  RX on every qubit, RZ on every qubit, then a brick of CRX on
  adjacent pairs (even pairs, then odd pairs) with control i -> target i+1,
  followed by the mirrored brick with control i+1 -> target i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simcore import Circuit, Gate

TEMPLATE_IDS = (8, 9, 14)
MIN_PEPTIDE_LENGTH = 8
MAX_PEPTIDE_LENGTH = 15


class AnsatzError(ValueError):
    pass


def params_per_layer(template_id: int, n: int) -> int:
    if template_id == 9:
        return n
    if template_id == 14:
        return 2 * n + 2 * _ring_size(n)
    if template_id == 8:
        return 2 * n + 2 * (n - 1)
    raise AnsatzError(f"unknown template {template_id}")


def _ring_size(n: int) -> int:
    return 1 if n == 2 else n


@dataclass(frozen=True)
class AnsatzTemplate:
    id: int
    n: int
    layers: int = 1

    def __post_init__(self):
        if self.id not in TEMPLATE_IDS:
            raise AnsatzError(f"unknown template {self.id}; choose from {TEMPLATE_IDS}")
        if self.n < 2:
            raise AnsatzError("templates need at least 2 qubits")
        if self.layers < 1:
            raise AnsatzError("layers must be >= 1")

    @property
    def num_params(self) -> int:
        return self.layers * params_per_layer(self.id, self.n)


def _brick_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(0, n - 1, 2)] + [(i, i + 1) for i in range(1, n - 1, 2)]


def _layer(template_id: int, n: int) -> list[tuple[str, int, int | None, bool]]:
    """(kind, target, control, parameterised) tuples for one layer."""
    ops: list[tuple[str, int, int | None, bool]] = []
    qubits = range(n)
    if template_id == 9:
        ops += [("H", q, None, False) for q in qubits]
        ops += [("CZ", q + 1, q, False) for q in range(n - 1)]
        ops += [("RX", q, None, True) for q in qubits]
    elif template_id == 14:
        if n == 2:
            down, up = [(1, 0)], [(0, 1)]
        else:
            down = [(c, (c + 1) % n) for c in reversed(qubits)]
            up = [(c, (c - 1) % n) for c in qubits]
        ops += [("RY", q, None, True) for q in qubits]
        ops += [("CRX", t, c, True) for c, t in down]
        ops += [("RY", q, None, True) for q in qubits]
        ops += [("CRX", t, c, True) for c, t in up]
    else:
        pairs = _brick_pairs(n)
        ops += [("RX", q, None, True) for q in qubits]
        ops += [("RZ", q, None, True) for q in qubits]
        ops += [("CRX", b, a, True) for a, b in pairs]
        ops += [("CRX", a, b, True) for a, b in pairs]
    return ops


def block_gates(template: AnsatzTemplate, params, offset: int = 0) -> list[Gate]:
    """Gates of one block with angles ``params`` and ids starting at ``offset``."""
    params = np.asarray(params, dtype=float)
    if params.shape != (template.num_params,):
        raise AnsatzError(
            f"template {template.id} (n={template.n}, layers={template.layers}) needs "
            f"{template.num_params} parameters, got {params.shape}"
        )
    gates = []
    k = 0
    for _ in range(template.layers):
        for kind, target, control, parametrised in _layer(template.id, template.n):
            if parametrised:
                gates.append(Gate(kind, target, control, float(params[k]), offset + k))
                k += 1
            else:
                gates.append(Gate(kind, target, control))
    return gates


def build_block(template: AnsatzTemplate, params) -> Circuit:
    return Circuit(template.n, block_gates(template, params))


@dataclass(frozen=True)
class SequenceCircuitSpec:
    template: AnsatzTemplate
    peptide_length: int
    classifier: AnsatzTemplate | None = None

    def __post_init__(self):
        if not MIN_PEPTIDE_LENGTH <= self.peptide_length <= MAX_PEPTIDE_LENGTH:
            raise AnsatzError(
                f"peptide length {self.peptide_length} outside "
                f"[{MIN_PEPTIDE_LENGTH}, {MAX_PEPTIDE_LENGTH}]"
            )
        if self.classifier is not None and self.classifier.n != self.template.n:
            raise AnsatzError("classifier must act on the same qubits as the blocks")

    @property
    def num_params(self) -> int:
        extra = self.classifier.num_params if self.classifier is not None else 0
        return self.peptide_length * self.template.num_params + extra


def build_sequence_circuit(spec: SequenceCircuitSpec, all_params, classifier_params=None) -> Circuit:
    """Chain one block per residue, then the shared classifier block if configured.

    ``all_params`` holds one angle vector per position. Parameter ids run over
    positions in sequence order, then the classifier.
    """
    rows = [np.asarray(p, dtype=float) for p in all_params]
    if len(rows) != spec.peptide_length:
        raise AnsatzError(f"got {len(rows)} parameter vectors for length {spec.peptide_length}")
    d = spec.template.num_params
    circuit = Circuit(spec.template.n)
    for i, row in enumerate(rows):
        circuit.extend(block_gates(spec.template, row, offset=i * d))
    if spec.classifier is not None:
        if classifier_params is None:
            classifier_params = np.zeros(spec.classifier.num_params)
        circuit.extend(block_gates(spec.classifier, classifier_params, offset=len(rows) * d))
    elif classifier_params is not None:
        raise AnsatzError("classifier parameters given but no classifier configured")
    return circuit
