"""Integrated gradients, Shapley value sampling, and (residue x position) heatmaps.

Models expose per-position input features through ``embed(peptide)`` (an
``(L, F)`` array), batched scores through ``scores_from_inputs(X)`` and, for
integrated gradients, ``input_gradients(X)``. The baseline is the all-zero
input throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AMINO_ACIDS

HEATMAP_LENGTH = 9


def integrated_gradients_features(grad_fn, x, steps: int = 50) -> np.ndarray:
    """Per-feature IG from the zero baseline using the midpoint Riemann rule.

    ``grad_fn`` maps a batch of inputs ``(steps, *x.shape)`` to gradients of the
    same shape.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=float)
    alphas = (np.arange(steps) + 0.5) / steps
    path = alphas.reshape((-1,) + (1,) * x.ndim) * x[None]
    grads = np.asarray(grad_fn(path), dtype=float)
    return x * grads.mean(axis=0)


def integrated_gradients(model, peptide: str, steps: int = 50) -> np.ndarray:
    """Per-position IG attributions (sum over each position's input coordinates)."""
    if not hasattr(model, "input_gradients"):
        raise TypeError(
            f"{type(model).__name__} exposes no input gradients; use shapley_value_sampling instead"
        )
    x = model.embed(peptide)
    return integrated_gradients_features(model.input_gradients, x, steps).sum(axis=1)


def shapley_value_sampling_inputs(score_fn, x, m: int = 25, seed: int = 0) -> np.ndarray:
    """Monte Carlo Shapley values over the rows (positions) of ``x``.

    For each of ``m`` seeded permutations, positions are switched from the zero
    baseline to their actual value one at a time; each position is credited
    with the score change it causes.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    x = np.asarray(x, dtype=float)
    L = x.shape[0]
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(L) for _ in range(m)]
    batch = np.zeros((m, L + 1) + x.shape)
    for j, perm in enumerate(perms):
        for k in range(1, L + 1):
            batch[j, k] = batch[j, k - 1]
            batch[j, k, perm[k - 1]] = x[perm[k - 1]]
    scores = np.asarray(score_fn(batch.reshape((-1,) + x.shape)), dtype=float).reshape(m, L + 1)
    attr = np.zeros(L)
    for j, perm in enumerate(perms):
        attr[perm] += np.diff(scores[j])
    return attr / m


def shapley_value_sampling(model, peptide: str, m: int = 25, seed: int = 0) -> np.ndarray:
    return shapley_value_sampling_inputs(model.scores_from_inputs, model.embed(peptide), m, seed)


@dataclass
class AttributionMap:
    values: np.ndarray  # (20, 9), normalised to [-1, 1]
    frequencies: np.ndarray  # (20, 9), normalised to [0, 1]
    counts: np.ndarray  # (20, 9) raw occurrence counts
    method: str = ""
    model_id: str = ""
    raw_means: np.ndarray = field(default=None, repr=False)

    def cell(self, residue: str, position: int) -> float:
        return float(self.values[AMINO_ACIDS.index(residue), position])

    def top_cells(self, k: int = 3, sign: int = 0) -> list[tuple[str, int, float]]:
        """Largest cells by |value| (sign=0), or the most positive/negative ones."""
        flat = self.values.ravel()
        key = np.abs(flat) if sign == 0 else sign * flat
        order = np.argsort(-key, kind="stable")
        out = []
        for i in order[:k]:
            a, p = divmod(int(i), self.values.shape[1])
            out.append((AMINO_ACIDS[a], p, float(flat[i])))
        return out

    def to_table(self) -> str:
        head = f"# method: {self.method}  model: {self.model_id}  features: embedding inputs, zero baseline"
        lines = [head, "residue\t" + "\t".join(f"p{p}" for p in range(self.values.shape[1]))]
        for a, res in enumerate(AMINO_ACIDS):
            cells = [f"{self.values[a, p]:+.3f}/{self.frequencies[a, p]:.2f}" for p in range(self.values.shape[1])]
            lines.append(res + "\t" + "\t".join(cells))
        return "\n".join(lines) + "\n"

    def to_svg(self, cell: int = 28) -> str:
        rows, cols = self.values.shape
        left, top = 24, 20
        width, height = left + cols * cell + 4, top + rows * cell + 4
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'font-family="sans-serif" font-size="11">',
            f"<title>{self.method} attributions {self.model_id}</title>",
        ]
        for p in range(cols):
            parts.append(f'<text x="{left + p * cell + cell / 2}" y="{top - 6}" text-anchor="middle">{p}</text>')
        for a in range(rows):
            y = top + a * cell
            parts.append(f'<text x="{left - 6}" y="{y + cell * 0.65}" text-anchor="end">{AMINO_ACIDS[a]}</text>')
            for p in range(cols):
                x = left + p * cell
                parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="none" stroke="#ddd"/>')
                if self.counts[a, p] == 0:
                    continue
                v = float(self.values[a, p])
                m = abs(v)
                if v >= 0:
                    rgb = (round(255 * (1 - m)), round(255 - 115 * m), round(255 * (1 - m)))
                else:
                    rgb = (round(255 - 115 * m), round(255 * (1 - m)), round(255 * (1 - m)))
                opacity = max(float(self.frequencies[a, p]), 0.08)
                parts.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="rgb{rgb}" fill-opacity="{opacity:.3f}"/>'
                )
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def aggregate_heatmap(per_sequence_attributions, sequences, method: str = "", model_id: str = "") -> AttributionMap:
    """Mean attribution per (residue, position) over length-9 sequences, normalised."""
    sums = np.zeros((len(AMINO_ACIDS), HEATMAP_LENGTH))
    counts = np.zeros((len(AMINO_ACIDS), HEATMAP_LENGTH))
    used = 0
    for attr, seq in zip(per_sequence_attributions, sequences):
        if len(seq) != HEATMAP_LENGTH:
            continue
        attr = np.asarray(attr, dtype=float)
        for p, res in enumerate(seq):
            a = AMINO_ACIDS.index(res)
            sums[a, p] += attr[p]
            counts[a, p] += 1
        used += 1
    if used == 0:
        raise ValueError("no length-9 sequences to aggregate")
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    peak = np.abs(means).max()
    values = means / peak if peak > 0 else means
    return AttributionMap(values, counts / counts.max(), counts, method, model_id, means)


def compare_top_cells(a: AttributionMap, b: AttributionMap, k: int = 3) -> dict:
    """Sign agreement of ``a``'s top-k |value| cells with the same cells in ``b``."""
    rows = []
    for res, pos, v in a.top_cells(k):
        w = b.cell(res, pos)
        rows.append({"cell": [res, pos], "a": v, "b": w, "agree": bool(np.sign(v) == np.sign(w))})
    return {"cells": rows, "mismatches": [r["cell"] for r in rows if not r["agree"]]}


def attribute_dataset(model, sequences, method: str = "IG", steps: int = 50, m: int = 25, seed: int = 0):
    """Per-sequence attributions for every length-9 sequence in ``sequences``."""
    seqs = [s for s in sequences if len(s) == HEATMAP_LENGTH]
    out = []
    for i, s in enumerate(seqs):
        if method == "IG":
            out.append(integrated_gradients(model, s, steps))
        elif method == "SVS":
            out.append(shapley_value_sampling(model, s, m, seed + i))
        else:
            raise ValueError(f"unknown attribution method {method!r}")
    return seqs, out
