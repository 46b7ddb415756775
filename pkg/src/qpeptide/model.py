"""Hybrid sequential PQC model: embeddings -> controller -> circuit -> label head.

Parameters live in ``model.params`` (a dict of float arrays). Training code
drives a model through two calls:

* ``scores, pullback = model.scores_and_pullback(peptides)``
* ``grads = pullback(dloss_dscores)`` returning a dict keyed like ``params``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .ansatz import AnsatzTemplate, SequenceCircuitSpec, build_sequence_circuit
from .data import AMINO_ACIDS
from .simcore import apply_z_observable, backward, expectations_z, run

TOKEN_INDEX = {a: i for i, a in enumerate(AMINO_ACIDS)}
HEADS = ("L1", "L2", "L3")
TWO_PI = 2.0 * np.pi


class ModelError(ValueError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def encode(peptide: str) -> np.ndarray:
    if len(peptide) == 0:
        raise ModelError("empty peptide")
    try:
        return np.array([TOKEN_INDEX[a] for a in peptide], dtype=np.intp)
    except KeyError as exc:
        raise ModelError(f"unknown amino acid {exc.args[0]!r} in {peptide!r}") from None


def group_by_length(peptides) -> dict[int, np.ndarray]:
    groups: dict[int, list[int]] = {}
    for i, p in enumerate(peptides):
        groups.setdefault(len(p), []).append(i)
    return {L: np.array(idx) for L, idx in sorted(groups.items())}


def predicted_labels(scores) -> np.ndarray:
    return (np.asarray(scores) > 0.5).astype(int)


@dataclass(frozen=True)
class HybridConfig:
    template_id: int = 9
    n_qubits: int = 2
    layers: int = 1
    head: str = "L1"
    nn_controlled: bool = True
    embedding_dim: int = 10
    classifier: bool = False

    def __post_init__(self):
        if self.head not in HEADS:
            raise ModelError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.embedding_dim < 1:
            raise ModelError("embedding_dim must be >= 1")
        AnsatzTemplate(self.template_id, self.n_qubits, self.layers)


class HybridModel:
    kind = "hybrid"

    def __init__(self, config: HybridConfig | None = None, seed: int = 0, **kwargs):
        self.config = config if config is not None else HybridConfig(**kwargs)
        self.template = AnsatzTemplate(self.config.template_id, self.config.n_qubits, self.config.layers)
        self.classifier = self.template if self.config.classifier else None
        self._circuits: dict[int, object] = {}
        self.seed = seed
        self.reinitialize(np.random.default_rng(seed))

    # -- parameters -------------------------------------------------------

    @property
    def n(self) -> int:
        return self.config.n_qubits

    @property
    def d(self) -> int:
        return self.template.num_params

    @property
    def input_dim(self) -> int:
        return self.config.embedding_dim if self.config.nn_controlled else self.d

    def reinitialize(self, rng: np.random.Generator) -> None:
        cfg, d, n = self.config, self.d, self.n
        p: dict[str, np.ndarray] = {}
        if cfg.nn_controlled:
            D = cfg.embedding_dim
            bound = 1.0 / np.sqrt(D)
            p["embeddings"] = rng.standard_normal((len(AMINO_ACIDS), D))
            p["controller_w"] = rng.uniform(-bound, bound, (D, d))
            p["controller_b"] = rng.uniform(-bound, bound, d)
        else:
            p["direct"] = rng.uniform(0.0, TWO_PI, (len(AMINO_ACIDS), d))
        if self.classifier is not None:
            p["classifier"] = rng.uniform(0.0, TWO_PI, self.classifier.num_params)
        if cfg.head == "L1":
            bound = 1.0 / np.sqrt(n)
            p["head_w"] = rng.uniform(-bound, bound, n)
            p["head_b"] = rng.uniform(-bound, bound, 1)
        elif cfg.head == "L2":
            p["head_scale"] = np.ones(1)
            p["head_bias"] = np.zeros(1)
        self.params = p

    @property
    def num_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> HybridModel:
        other = HybridModel.__new__(HybridModel)
        other.config, other.template, other.classifier = self.config, self.template, self.classifier
        other._circuits, other.seed = self._circuits, self.seed
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    # -- forward / backward -----------------------------------------------

    def _circuit(self, length: int):
        if length not in self._circuits:
            spec = SequenceCircuitSpec(self.template, length, self.classifier)
            self._circuits[length] = build_sequence_circuit(spec, np.zeros((length, self.d)))
        return self._circuits[length]

    def _controller_sigmoid(self) -> np.ndarray:
        pre = self.params["embeddings"] @ self.params["controller_w"] + self.params["controller_b"]
        return sigmoid(pre)

    def angle_table(self) -> np.ndarray:
        """Per-amino-acid angle vectors, shape (20, d)."""
        if not self.config.nn_controlled:
            return self.params["direct"]
        return TWO_PI * self._controller_sigmoid()

    def _head(self, z):
        p, head = self.params, self.config.head
        if head == "L1":
            return sigmoid(z @ p["head_w"] + p["head_b"][0])
        if head == "L2":
            return sigmoid(p["head_scale"][0] * z[:, 0] + p["head_bias"][0])
        return 0.5 * (1.0 + z[:, 0])

    def _head_pullback(self, z, s, ds, grads):
        p, head = self.params, self.config.head
        dz = np.zeros_like(z)
        if head == "L1":
            dlogit = ds * s * (1.0 - s)
            grads["head_w"] = grads.get("head_w", 0.0) + z.T @ dlogit
            grads["head_b"] = grads.get("head_b", 0.0) + np.array([dlogit.sum()])
            dz = dlogit[:, None] * p["head_w"][None, :]
        elif head == "L2":
            dlogit = ds * s * (1.0 - s)
            grads["head_scale"] = grads.get("head_scale", 0.0) + np.array([dlogit @ z[:, 0]])
            grads["head_bias"] = grads.get("head_bias", 0.0) + np.array([dlogit.sum()])
            dz[:, 0] = dlogit * p["head_scale"][0]
        else:
            dz[:, 0] = 0.5 * ds
        return dz

    def _circuit_params(self, angles: np.ndarray) -> np.ndarray:
        B, L, d = angles.shape
        flat = angles.reshape(B, L * d)
        if self.classifier is None:
            return flat
        chi = np.broadcast_to(self.params["classifier"], (B, self.classifier.num_params))
        return np.concatenate([flat, chi], axis=1)

    def _run_angles(self, angles: np.ndarray):
        """Scores for a (B, L, d) angle batch, plus a pullback to angle grads."""
        B, L, d = angles.shape
        circuit = self._circuit(L)
        P = self._circuit_params(angles)
        state = run(circuit, P)
        z = expectations_z(state)
        s = self._head(z)

        def pullback(ds, grads):
            dz = self._head_pullback(z, s, ds, grads)
            v = apply_z_observable(state, dz)
            gP = backward(circuit, P, v, state=state)
            if self.classifier is not None:
                grads["classifier"] = grads.get("classifier", 0.0) + gP[:, L * d :].sum(0)
            return gP[:, : L * d].reshape(B, L, d)

        return s, pullback

    def scores_and_pullback(self, peptides):
        tokens = [encode(p) for p in peptides]
        nn = self.config.nn_controlled
        sig = self._controller_sigmoid() if nn else None
        table = TWO_PI * sig if nn else self.params["direct"]
        scores = np.zeros(len(tokens))
        parts = []
        for L, idx in group_by_length(tokens).items():
            tok = np.stack([tokens[i] for i in idx])
            s, pb = self._run_angles(table[tok])
            scores[idx] = s
            parts.append((idx, tok, pb))

        def pullback(dscores):
            dscores = np.asarray(dscores, dtype=float)
            grads: dict[str, np.ndarray] = {}
            dtable = np.zeros_like(table)
            for idx, tok, pb in parts:
                gang = pb(dscores[idx], grads)
                np.add.at(dtable, tok.ravel(), gang.reshape(-1, gang.shape[-1]))
            if nn:
                E, W = self.params["embeddings"], self.params["controller_w"]
                dpre = dtable * TWO_PI * sig * (1.0 - sig)
                grads["controller_w"] = E.T @ dpre
                grads["controller_b"] = dpre.sum(0)
                grads["embeddings"] = dpre @ W.T
            else:
                grads["direct"] = dtable
            return {k: np.asarray(grads[k], dtype=float).reshape(self.params[k].shape) for k in self.params}

        return scores, pullback

    def predict_scores(self, peptides) -> np.ndarray:
        return self.scores_and_pullback(peptides)[0]

    def circuit_for(self, peptide: str):
        """Bound circuit for one peptide (angles and classifier baked into the gates)."""
        tok = encode(peptide)
        spec = SequenceCircuitSpec(self.template, len(tok), self.classifier)
        chi = self.params.get("classifier")
        return build_sequence_circuit(spec, self.angle_table()[tok], chi)

    def scores_from_expectations(self, z) -> np.ndarray:
        """Apply the label head to measured <Z_i> vectors of shape (N, n)."""
        return self._head(np.atleast_2d(np.asarray(z, dtype=float)))

    # -- attribution inputs -----------------------------------------------

    def embed(self, peptide: str) -> np.ndarray:
        """Per-position input features: embeddings (NN mode) or angle rows (direct)."""
        tok = encode(peptide)
        if self.config.nn_controlled:
            return self.params["embeddings"][tok].copy()
        return self.params["direct"][tok].copy()

    def _inputs_to_angles(self, X):
        if not self.config.nn_controlled:
            return X, lambda g: g
        sig = sigmoid(X @ self.params["controller_w"] + self.params["controller_b"])
        W = self.params["controller_w"]
        return TWO_PI * sig, lambda g: (g * TWO_PI * sig * (1.0 - sig)) @ W.T

    def scores_from_inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 2
        X = X[None] if single else X
        angles, _ = self._inputs_to_angles(X)
        s, _ = self._run_angles(angles)
        return s[0] if single else s

    def input_gradients(self, X) -> np.ndarray:
        """d score / d input features, same shape as ``X``."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 2
        X = X[None] if single else X
        angles, to_inputs = self._inputs_to_angles(X)
        s, pb = self._run_angles(angles)
        g = to_inputs(pb(np.ones_like(s), {}))
        return g[0] if single else g

    # -- persistence ------------------------------------------------------

    def describe(self) -> dict:
        return {"kind": self.kind, "config": asdict(self.config), "seed": self.seed}

    def save(self, path, extra: dict | None = None) -> None:
        meta = dict(self.describe(), **(extra or {}))
        np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)


def controller_angles(model: HybridModel, token: str) -> np.ndarray:
    if token not in TOKEN_INDEX:
        raise ModelError(f"unknown amino acid {token!r}")
    return model.angle_table()[TOKEN_INDEX[token]].copy()


def forward(model, peptide: str) -> float:
    """Prediction score in [0, 1] for one peptide."""
    return float(model.predict_scores([peptide])[0])


def load_model(path):
    """Load a checkpoint written by ``save`` (hybrid or recurrent)."""
    from .baselines import RecurrentModel, RecurrentSpec

    with np.load(path, allow_pickle=False) as f:
        meta = json.loads(str(f["__meta__"]))
        params = {k: f[k].copy() for k in f.files if k != "__meta__"}
    if meta["kind"] == "hybrid":
        model = HybridModel(HybridConfig(**meta["config"]), seed=meta["seed"])
    elif meta["kind"] == "recurrent":
        model = RecurrentModel(RecurrentSpec(**meta["config"]), seed=meta["seed"])
    else:
        raise ModelError(f"unknown checkpoint kind {meta['kind']!r}")
    if set(params) != set(model.params):
        raise ModelError("checkpoint tensors do not match the model configuration")
    model.params = params
    return model, meta
