"""Binary cross-entropy training, early stopping, restarts and 5-fold cross-validation."""

from __future__ import annotations

import copy
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, FoldSplit, make_folds

log = logging.getLogger(__name__)

EPS = 1e-12


class NumericalError(RuntimeError):
    pass


def bce_loss(predictions, labels) -> float:
    """Mean binary cross-entropy in bits; scores clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(predictions, dtype=float), EPS, 1.0 - EPS)
    y = np.asarray(labels, dtype=float)
    if p.size == 0:
        raise ValueError("empty batch")
    if p.shape != y.shape:
        raise ValueError(f"{p.shape[0]} predictions but {y.shape[0]} labels")
    return float(-np.mean(y * np.log2(p) + (1.0 - y) * np.log2(1.0 - p)))


def bce_grad(predictions, labels) -> np.ndarray:
    p = np.clip(np.asarray(predictions, dtype=float), EPS, 1.0 - EPS)
    y = np.asarray(labels, dtype=float)
    return -(y / p - (1.0 - y) / (1.0 - p)) / (np.log(2.0) * p.size)


def f1_score(predictions, labels) -> float:
    """F1 of the positive (strong) class; 0 when precision and recall are both undefined or zero."""
    pred = np.asarray(predictions).astype(int)
    y = np.asarray(labels).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


@dataclass
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 10
    restarts: int = 5
    learning_rate: float = 0.01
    optimizer: str = "adam"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1 or self.restarts < 1:
            raise ValueError("batch_size, patience and restarts must be >= 1; max_epochs >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")


class Adam:
    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def restart_seed(seed: int, fold_id: int, restart: int) -> int:
    return int(np.random.SeedSequence([seed, fold_id, restart]).generate_state(1)[0])


@dataclass
class FoldResult:
    fold_id: int
    best_restart: int
    best_restart_seed: int
    validation_f1: float
    validation_loss: float
    test_f1: float
    restarts: list[dict] = field(default_factory=list)


@dataclass
class TrainResult:
    model: object
    fold: FoldResult
    history: list[list[float]]


def _evaluate(model, seqs, labels):
    scores = model.predict_scores(seqs)
    return bce_loss(scores, labels), f1_score(scores > 0.5, labels)


def _fit(model, seqs, labels, val_seqs, val_labels, cfg: TrainConfig, rng: np.random.Generator):
    """One restart: minibatch Adam with early stopping on validation loss."""
    opt = Adam(cfg.learning_rate)
    train_loss0 = bce_loss(model.predict_scores(seqs), labels)
    best_loss, _ = _evaluate(model, val_seqs, val_labels)
    best_params = {k: v.copy() for k, v in model.params.items()}
    history = [[0, train_loss0, best_loss]]
    stale = 0
    n = len(seqs)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = [seqs[i] for i in idx]
            scores, pullback = model.scores_and_pullback(batch)
            loss = bce_loss(scores, labels[idx])
            if not np.isfinite(loss) or not np.all(np.isfinite(scores)):
                raise NumericalError(f"non-finite loss at epoch {epoch} on batch {idx.tolist()}")
            grads = pullback(bce_grad(scores, labels[idx]))
            opt.step(model.params, grads)
            batch_losses.append(loss * len(idx))
        val_loss, _ = _evaluate(model, val_seqs, val_labels)
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        history.append([epoch, sum(batch_losses) / n, val_loss])
        if val_loss < best_loss:
            best_loss, stale = val_loss, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best_params
    return history


def train_model(model, dataset: Dataset, fold: FoldSplit, cfg: TrainConfig) -> TrainResult:
    """Train ``cfg.restarts`` initialisations and keep the best on validation.

    Selection uses validation F1, ties broken by lower validation loss; the test
    split is touched only once, after selection.
    """
    fold.check_disjoint()
    seqs = dataset.sequences
    labels = dataset.labels
    tr = [seqs[i] for i in fold.train]
    va = [seqs[i] for i in fold.validation]
    y_tr, y_va = labels[fold.train], labels[fold.validation]
    best = None
    records = []
    for r in range(cfg.restarts):
        seed = restart_seed(cfg.seed, fold.fold_id, r)
        rng = np.random.default_rng(seed)
        candidate = copy.deepcopy(model)
        candidate.reinitialize(rng)
        history = _fit(candidate, tr, y_tr, va, y_va, cfg, rng)
        val_loss, val_f1 = _evaluate(candidate, va, y_va)
        records.append({"restart": r, "seed": seed, "validation_f1": val_f1, "validation_loss": val_loss,
                        "epochs": history[-1][0]})
        log.info("fold %d restart %d seed %d: val F1 %.4f loss %.4f", fold.fold_id, r, seed, val_f1, val_loss)
        key = (val_f1, -val_loss)
        if best is None or key > best[0]:
            best = (key, r, seed, candidate, history)
    (_, r, seed, chosen, history) = best
    test_seqs = [seqs[i] for i in fold.test]
    test_f1 = f1_score(chosen.predict_scores(test_seqs) > 0.5, labels[fold.test])
    result = FoldResult(
        fold_id=fold.fold_id,
        best_restart=r,
        best_restart_seed=seed,
        validation_f1=records[r]["validation_f1"],
        validation_loss=records[r]["validation_loss"],
        test_f1=test_f1,
        restarts=records,
    )
    model.params = chosen.params
    return TrainResult(model=chosen, fold=result, history=history)


@dataclass
class CVResult:
    folds: list[FoldResult]
    mean_test_f1: float
    sd_test_f1: float
    mean_validation_f1: float
    sd_validation_f1: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def _fold_job(args):
    model, dataset, fold, cfg = args
    res = train_model(copy.deepcopy(model), dataset, fold, cfg)
    return res.fold


def cross_validate(model, dataset: Dataset, cfg: TrainConfig, k: int = 5, folds=None) -> CVResult:
    """Train on every fold and report population mean and SD of test F1."""
    if folds is None:
        folds = make_folds(dataset, k=k, seed=cfg.seed)
    if len(folds) < k:
        raise ValueError(f"need {k} folds, got {len(folds)}")
    jobs = [(model, dataset, f, cfg) for f in folds]
    workers = cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fold_job, jobs))
    else:
        results = [_fold_job(j) for j in jobs]
    test = np.array([r.test_f1 for r in results])
    val = np.array([r.validation_f1 for r in results])
    return CVResult(
        folds=results,
        mean_test_f1=float(test.mean()),
        sd_test_f1=float(test.std()),
        mean_validation_f1=float(val.mean()),
        sd_validation_f1=float(val.std()),
        seed=cfg.seed,
    )
