"""Small recurrent classifiers (RNN, GRU, LSTM) with backpropagation through time.

Each layer owns an input matrix ``W`` of shape (G*H, in), a recurrent matrix
``U`` of shape (G*H, H) and one bias of length G*H, where G is 1 (RNN),
3 (GRU, gate order r, z, n) or 4 (LSTM, gate order i, f, g, o). The final
hidden state of the top layer feeds an affine map and a sigmoid.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import AMINO_ACIDS
from .model import encode, group_by_length, sigmoid

CELLS = {"RNN": 1, "GRU": 3, "LSTM": 4}


@dataclass(frozen=True)
class RecurrentSpec:
    cell: str = "RNN"
    layers: int = 1
    input_dim: int = 10
    hidden_dim: int = 20

    def __post_init__(self):
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {sorted(CELLS)}, got {self.cell!r}")
        if not 1 <= self.layers <= 2:
            raise ValueError("layers must be 1 or 2")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("input_dim and hidden_dim must be >= 1")


# Baseline presets: (cell, layers, input, hidden).
PRESETS = {
    "K0": RecurrentSpec("RNN", 1, 1, 1),
    "K1": RecurrentSpec("RNN", 1, 10, 20),
    "K2": RecurrentSpec("GRU", 1, 10, 10),
    "K3": RecurrentSpec("LSTM", 1, 9, 9),
    "K4": RecurrentSpec("LSTM", 1, 3, 4),
    "K5": RecurrentSpec("RNN", 1, 5, 6),
    "K6": RecurrentSpec("GRU", 1, 4, 4),
    "C1": RecurrentSpec("RNN", 1, 50, 100),
}


def cell_param_count(cell: str, input_dim: int, hidden_dim: int) -> int:
    h = hidden_dim
    return CELLS[cell] * (h * h + h * input_dim + h)


def param_count(spec: RecurrentSpec) -> int:
    """Trainable scalars: embedding table, every layer, and the output head."""
    total = len(AMINO_ACIDS) * spec.input_dim
    for layer in range(spec.layers):
        total += cell_param_count(spec.cell, spec.input_dim if layer == 0 else spec.hidden_dim, spec.hidden_dim)
    return total + spec.hidden_dim + 1


def _layer_forward(cell, X, W, U, b):
    B, L, _ = X.shape
    H = U.shape[1]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.zeros((B, L, H))
    cache = []
    for t in range(L):
        x = X[:, t]
        if cell == "RNN":
            h_new = np.tanh(x @ W.T + h @ U.T + b)
            cache.append((x, h, h_new))
        elif cell == "GRU":
            ax = x @ W.T + b
            ah = h @ U[: 2 * H].T
            r = sigmoid(ax[:, :H] + ah[:, :H])
            z = sigmoid(ax[:, H : 2 * H] + ah[:, H:])
            hr = r * h
            n = np.tanh(ax[:, 2 * H :] + hr @ U[2 * H :].T)
            h_new = (1.0 - z) * n + z * h
            cache.append((x, h, r, z, n, hr))
        else:
            a = x @ W.T + h @ U.T + b
            i = sigmoid(a[:, :H])
            f = sigmoid(a[:, H : 2 * H])
            g = np.tanh(a[:, 2 * H : 3 * H])
            o = sigmoid(a[:, 3 * H :])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            cache.append((x, h, c, i, f, g, o, tc))
            c = c_new
        h = h_new
        hs[:, t] = h
    return hs, cache


def _layer_backward(cell, dhs, cache, W, U):
    B, L, H = dhs.shape
    dX = np.zeros((B, L, W.shape[1]))
    dW, dU, db = np.zeros_like(W), np.zeros_like(U), np.zeros(W.shape[0])
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(L)):
        dh = dhs[:, t] + dh_next
        if cell == "RNN":
            x, h_prev, h = cache[t]
            da = dh * (1.0 - h * h)
            dW += da.T @ x
            dU += da.T @ h_prev
            db += da.sum(0)
            dX[:, t] = da @ W
            dh_next = da @ U
        elif cell == "GRU":
            x, h_prev, r, z, n, hr = cache[t]
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z
            dan = dn * (1.0 - n * n)
            dhr = dan @ U[2 * H :]
            dU[2 * H :] += dan.T @ hr
            dr = dhr * h_prev
            dh_prev += dhr * r
            dar = dr * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            da = np.concatenate([dar, daz, dan], axis=1)
            dW += da.T @ x
            db += da.sum(0)
            dX[:, t] = da @ W
            drz = da[:, : 2 * H]
            dU[: 2 * H] += drz.T @ h_prev
            dh_next = dh_prev + drz @ U[: 2 * H]
        else:
            x, h_prev, c_prev, i, f, g, o, tc = cache[t]
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = np.concatenate(
                [dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f), dc * i * (1.0 - g * g), do * o * (1.0 - o)],
                axis=1,
            )
            dW += da.T @ x
            dU += da.T @ h_prev
            db += da.sum(0)
            dX[:, t] = da @ W
            dh_next = da @ U
            dc_next = dc * f
    return dX, dW, dU, db


class RecurrentModel:
    kind = "recurrent"

    def __init__(self, spec: RecurrentSpec | None = None, seed: int = 0, **kwargs):
        self.config = spec if spec is not None else RecurrentSpec(**kwargs)
        self.seed = seed
        self.reinitialize(np.random.default_rng(seed))

    @property
    def spec(self) -> RecurrentSpec:
        return self.config

    def reinitialize(self, rng: np.random.Generator) -> None:
        s = self.config
        G, H = CELLS[s.cell], s.hidden_dim
        bound = 1.0 / np.sqrt(H)
        p = {"embeddings": rng.standard_normal((len(AMINO_ACIDS), s.input_dim))}
        for layer in range(s.layers):
            fan_in = s.input_dim if layer == 0 else H
            p[f"W{layer}"] = rng.uniform(-bound, bound, (G * H, fan_in))
            p[f"U{layer}"] = rng.uniform(-bound, bound, (G * H, H))
            p[f"b{layer}"] = rng.uniform(-bound, bound, G * H)
        p["head_w"] = rng.uniform(-bound, bound, H)
        p["head_b"] = rng.uniform(-bound, bound, 1)
        self.params = p

    @property
    def num_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> RecurrentModel:
        other = RecurrentModel.__new__(RecurrentModel)
        other.config, other.seed = self.config, self.seed
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def _run(self, X):
        p, cell = self.params, self.config.cell
        caches = []
        h = X
        for layer in range(self.config.layers):
            h, cache = _layer_forward(cell, h, p[f"W{layer}"], p[f"U{layer}"], p[f"b{layer}"])
            caches.append((h, cache))
        last = h[:, -1]
        s = sigmoid(last @ p["head_w"] + p["head_b"][0])

        def pullback(ds, grads):
            dlogit = ds * s * (1.0 - s)
            grads["head_w"] = grads.get("head_w", 0.0) + last.T @ dlogit
            grads["head_b"] = grads.get("head_b", 0.0) + np.array([dlogit.sum()])
            dhs = np.zeros_like(h)
            dhs[:, -1] = dlogit[:, None] * p["head_w"][None, :]
            for layer in reversed(range(self.config.layers)):
                _, cache = caches[layer]
                dhs, dW, dU, db = _layer_backward(cell, dhs, cache, p[f"W{layer}"], p[f"U{layer}"])
                for name, g in ((f"W{layer}", dW), (f"U{layer}", dU), (f"b{layer}", db)):
                    grads[name] = grads.get(name, 0.0) + g
            return dhs

        return s, pullback

    def scores_and_pullback(self, peptides):
        tokens = [encode(p) for p in peptides]
        E = self.params["embeddings"]
        scores = np.zeros(len(tokens))
        parts = []
        for _, idx in group_by_length(tokens).items():
            tok = np.stack([tokens[i] for i in idx])
            s, pb = self._run(E[tok])
            scores[idx] = s
            parts.append((idx, tok, pb))

        def pullback(dscores):
            dscores = np.asarray(dscores, dtype=float)
            grads: dict[str, np.ndarray] = {}
            dE = np.zeros_like(E)
            for idx, tok, pb in parts:
                dX = pb(dscores[idx], grads)
                np.add.at(dE, tok.ravel(), dX.reshape(-1, dX.shape[-1]))
            grads["embeddings"] = dE
            return {k: np.asarray(grads.get(k, np.zeros_like(v)), dtype=float) for k, v in self.params.items()}

        return scores, pullback

    def predict_scores(self, peptides) -> np.ndarray:
        return self.scores_and_pullback(peptides)[0]

    def embed(self, peptide: str) -> np.ndarray:
        return self.params["embeddings"][encode(peptide)].copy()

    def scores_from_inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 2
        s, _ = self._run(X[None] if single else X)
        return s[0] if single else s

    def input_gradients(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 2
        s, pb = self._run(X[None] if single else X)
        g = pb(np.ones_like(s), {})
        return g[0] if single else g

    def describe(self) -> dict:
        return {"kind": self.kind, "config": asdict(self.config), "seed": self.seed,
                "param_count": param_count(self.config)}

    def save(self, path, extra: dict | None = None) -> None:
        meta = dict(self.describe(), **(extra or {}))
        np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)


def recurrent_forward(spec: RecurrentSpec, params: dict, peptide: str) -> float:
    model = RecurrentModel.__new__(RecurrentModel)
    model.config, model.seed, model.params = spec, None, params
    return float(model.predict_scores([peptide])[0])
