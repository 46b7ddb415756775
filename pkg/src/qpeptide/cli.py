"""Experiment runner: ``qpeptide <subcommand> --config run.yaml [--set section.key=value ...]``.

Precedence: ``--set`` overrides > config file > built-in defaults. Outputs go to
``<output.root>/<timestamp>-<tag>/`` with ``config.yaml``, ``results.json``,
``logs/`` and ``artifacts/``. Exit codes: 0 success, 2 config error, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .baselines import PRESETS as RECURRENT_PRESETS
from .baselines import RecurrentModel, RecurrentSpec
from .data import (
    DataError,
    class_statistics,
    downsample,
    format_statistics,
    load_dataset,
    make_folds,
    read_records,
    save_dataset,
)
from .model import HybridConfig, HybridModel, ModelError, load_model
from .train import NumericalError, TrainConfig, cross_validate, train_model

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
SUBCOMMANDS = (
    "prepare-data", "stats", "train", "cross-validate", "emulate",
    "mitigate", "gate-count", "shot-bounds", "attribute",
)

# Hybrid presets: (nn controller, template, layers, qubits, head)
HYBRID_PRESETS = {
    "Q1": (True, 8, 1, 4, "L1"),
    "Q2": (True, 9, 1, 8, "L1"),
    "Q3": (True, 8, 1, 8, "L1"),
    "Q4": (True, 9, 1, 2, "L2"),
    "Q5": (True, 9, 1, 2, "L1"),
    "Q6": (True, 9, 1, 4, "L2"),
    "Q7": (False, 14, 1, 2, "L1"),
    "Q8": (False, 14, 1, 2, "L2"),
    "Q9": (True, 9, 1, 2, "L3"),
    "Q10": (True, 9, 1, 4, "L1"),
}

log = logging.getLogger("qpeptide")


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(_Section):
    input: str | None = None
    dataset: str | None = None
    target_strong_fraction: float = Field(0.30, gt=0, lt=1)
    seed: int = 0
    fold: int = Field(0, ge=0)
    split: Literal["test", "validation", "train", "all"] = "test"
    max_sequences: int | None = Field(None, ge=1)


class ModelSection(_Section):
    preset: str | None = None
    kind: Literal["hybrid", "recurrent"] = "hybrid"
    template: Literal[8, 9, 14] = 9
    qubits: int = Field(2, ge=2, le=12)
    layers: int = Field(1, ge=1)
    head: Literal["L1", "L2", "L3"] = "L1"
    nn: bool = True
    embedding_dim: int = Field(10, ge=1)
    classifier: bool = False
    cell: Literal["RNN", "GRU", "LSTM"] = "RNN"
    input_dim: int = Field(10, ge=1)
    hidden_dim: int = Field(20, ge=1)
    checkpoint: str | None = None
    lengths: list[int] = Field(default_factory=lambda: [9])

    @model_validator(mode="after")
    def _preset_known(self):
        if self.preset is not None and self.preset not in HYBRID_PRESETS and self.preset not in RECURRENT_PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.kind == "recurrent" and self.layers > 2:
            raise ValueError("recurrent layers must be 1 or 2")
        return self


class TrainSection(_Section):
    batch_size: int = Field(16, ge=1)
    max_epochs: int = Field(200, ge=0)
    patience: int = Field(10, ge=1)
    restarts: int = Field(5, ge=1)
    learning_rate: float = Field(0.01, ge=0)
    optimizer: Literal["adam"] = "adam"
    seed: int = 0
    folds: int = Field(5, ge=2)


class NoiseSection(_Section):
    p1: float = Field(0.001, ge=0, le=1)
    p2: float = Field(0.01, ge=0, le=1)
    shots: int = Field(2**10, ge=1)
    seed: int = 0
    fold_factors: list[int] = Field(default_factory=lambda: [1, 3, 5, 7])
    shot_list: list[int] = Field(default_factory=lambda: [2**6, 2**10, 2**14])

    @model_validator(mode="after")
    def _odd_factors(self):
        if any(f < 1 or f % 2 == 0 for f in self.fold_factors):
            raise ValueError("fold_factors must be odd positive integers")
        if len(set(self.fold_factors) | {1}) < 2:
            raise ValueError("fold_factors need at least two distinct values")
        if any(s < 1 for s in self.shot_list):
            raise ValueError("shot_list entries must be >= 1")
        return self


class AttributionSection(_Section):
    method: Literal["IG", "SVS"] = "IG"
    steps: int = Field(50, ge=1)
    permutations: int = Field(25, ge=1)
    seed: int = 0


class OutputSection(_Section):
    root: str = "runs"
    tag: str = "run"


class ExperimentConfig(_Section):
    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    attribution: AttributionSection = Field(default_factory=AttributionSection)
    output: OutputSection = Field(default_factory=OutputSection)
    workers: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)


def _apply_override(tree: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {assignment!r}: {p} is not a section")
    node[parts[-1]] = yaml.safe_load(raw)


def load_config(path, overrides=()) -> tuple[ExperimentConfig, str]:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        tree = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(tree, dict):
        raise ConfigError("config must be a mapping of sections")
    for o in overrides:
        _apply_override(tree, o)
    try:
        cfg = ExperimentConfig.model_validate(tree)
    except ValidationError as exc:
        lines = [f"  {'.'.join(str(x) for x in e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid config:\n" + "\n".join(lines)) from None
    return cfg, text


def _require(cfg: ExperimentConfig, command: str) -> None:
    """Check that every file the subcommand reads exists, before any output is written."""
    needs = {
        "prepare-data": ["data.input"],
        "stats": ["data.dataset"],
        "train": ["data.dataset"],
        "cross-validate": ["data.dataset"],
        "emulate": ["data.dataset", "model.checkpoint"],
        "mitigate": ["data.dataset", "model.checkpoint"],
        "shot-bounds": ["data.dataset", "model.checkpoint"],
        "attribute": ["data.dataset", "model.checkpoint"],
        "gate-count": [],
    }[command]
    for dotted in needs:
        section, field = dotted.split(".")
        value = getattr(getattr(cfg, section), field)
        if value is None:
            raise ConfigError(f"{command} needs {dotted}")
        if not Path(value).exists():
            raise DataError(f"{dotted}: file {value} does not exist")


def build_model(section: ModelSection, seed: int = 0):
    if section.preset in HYBRID_PRESETS:
        nn, tid, layers, n, head = HYBRID_PRESETS[section.preset]
        cfg = HybridConfig(tid, n, layers, head, nn, section.embedding_dim, section.classifier)
        return HybridModel(cfg, seed=seed)
    if section.preset in RECURRENT_PRESETS:
        return RecurrentModel(RECURRENT_PRESETS[section.preset], seed=seed)
    if section.kind == "recurrent":
        return RecurrentModel(RecurrentSpec(section.cell, section.layers, section.input_dim, section.hidden_dim), seed)
    cfg = HybridConfig(section.template, section.qubits, section.layers, section.head, section.nn,
                       section.embedding_dim, section.classifier)
    return HybridModel(cfg, seed=seed)


def _model_info(model) -> dict:
    info = model.describe()
    info["num_params"] = model.num_params
    if model.kind == "recurrent":
        info["note"] = "parameter count is this artifact's own closed form; other implementations of the preset may count differently"
    return info


def _split_sequences(dataset, cfg: ExperimentConfig):
    d = cfg.data
    if d.split == "all":
        idx = np.arange(len(dataset))
    else:
        folds = make_folds(dataset, k=cfg.train.folds, seed=cfg.train.seed)
        if d.fold >= len(folds):
            raise ConfigError(f"data.fold {d.fold} out of range for {len(folds)} folds")
        idx = getattr(folds[d.fold], d.split)
    if d.max_sequences is not None:
        idx = idx[: d.max_sequences]
    return [dataset.sequences[i] for i in idx], dataset.labels[idx]


def _hybrid_checkpoint(cfg):
    model, meta = load_model(cfg.model.checkpoint)
    if model.kind != "hybrid":
        raise ConfigError("this subcommand needs a hybrid (quantum) checkpoint")
    return model, meta


def cmd_prepare_data(cfg, out: Path) -> dict:
    records, provenance = read_records(cfg.data.input)
    ds = downsample(records, cfg.data.target_strong_fraction, cfg.data.seed)
    ds = type(ds)(ds.records, {**provenance, **ds.provenance})
    save_dataset(ds, out / "artifacts" / "dataset.json")
    stats = class_statistics(ds)
    (out / "artifacts" / "stats.txt").write_text(format_statistics(stats))
    return {"input_records": len(records), "dataset_size": len(ds), "strong_fraction": ds.class_ratio,
            "statistics": stats}


def cmd_stats(cfg, out: Path) -> dict:
    ds = load_dataset(cfg.data.dataset)
    stats = class_statistics(ds)
    (out / "artifacts" / "stats.txt").write_text(format_statistics(stats))
    return {"statistics": stats}


def _train_config(cfg) -> TrainConfig:
    t = cfg.train
    return TrainConfig(t.batch_size, t.max_epochs, t.patience, t.restarts, t.learning_rate, t.optimizer,
                       t.seed, cfg.workers)


def cmd_train(cfg, out: Path) -> dict:
    ds = load_dataset(cfg.data.dataset)
    folds = make_folds(ds, k=cfg.train.folds, seed=cfg.train.seed)
    if cfg.data.fold >= len(folds):
        raise ConfigError(f"data.fold {cfg.data.fold} out of range")
    fold = folds[cfg.data.fold]
    model = build_model(cfg.model, cfg.train.seed)
    res = train_model(model, ds, fold, _train_config(cfg))
    res.model.save(out / "artifacts" / "model.npz", {"fold": fold.fold_id, "train_seed": cfg.train.seed})
    return {"model": _model_info(res.model), "fold": res.fold.__dict__, "history": res.history,
            "split_sizes": [len(fold.train), len(fold.validation), len(fold.test)]}


def cmd_cross_validate(cfg, out: Path) -> dict:
    ds = load_dataset(cfg.data.dataset)
    model = build_model(cfg.model, cfg.train.seed)
    cv = cross_validate(model, ds, _train_config(cfg), k=cfg.train.folds)
    return {"model": _model_info(model), "cross_validation": cv.to_dict(),
            "per_fold_test_f1": [f.test_f1 for f in cv.folds],
            "summary": f"{cv.mean_test_f1:.4f} +- {cv.sd_test_f1:.4f}"}


def cmd_emulate(cfg, out: Path) -> dict:
    from .noise import NoiseModel, exact_expectations, noisy_expectations
    from .train import f1_score

    model, _ = _hybrid_checkpoint(cfg)
    ds = load_dataset(cfg.data.dataset)
    seqs, labels = _split_sequences(ds, cfg)
    nz = cfg.noise
    exact, noisy = [], []
    for i, s in enumerate(seqs):
        c = model.circuit_for(s)
        exact.append(exact_expectations(c))
        noisy.append(noisy_expectations(c, NoiseModel(nz.p1, nz.p2, nz.shots, nz.seed + i)))
    exact, noisy = np.array(exact), np.array(noisy)
    f_exact = f1_score(model.scores_from_expectations(exact) > 0.5, labels)
    f_noisy = f1_score(model.scores_from_expectations(noisy) > 0.5, labels)
    np.savez(out / "artifacts" / "expectations.npz", exact=exact, noisy=noisy, labels=labels)
    return {"sequences": len(seqs), "f1_exact": f_exact, "f1_noisy": f_noisy}


def cmd_mitigate(cfg, out: Path) -> dict:
    from .noise import NoiseModel, ZNEConfig, exact_expectations, zne_estimate

    model, _ = _hybrid_checkpoint(cfg)
    ds = load_dataset(cfg.data.dataset)
    seqs, _ = _split_sequences(ds, cfg)
    nz = cfg.noise
    zcfg = ZNEConfig(tuple(nz.fold_factors))
    rows = []
    for i, s in enumerate(seqs):
        c = model.circuit_for(s)
        exact = exact_expectations(c)
        r = zne_estimate(c, NoiseModel(nz.p1, nz.p2, nz.shots, nz.seed + i), zcfg)
        for row in r.rows(exact):
            rows.append({"sequence": s, **row})
    header = list(rows[0].keys())
    lines = ["\t".join(header)] + ["\t".join(str(r[h]) for h in header) for r in rows]
    (out / "artifacts" / "mitigation.tsv").write_text("\n".join(lines) + "\n")
    return {"fold_factors": list(zcfg.fold_factors), "rows": rows}


def cmd_gate_count(cfg, out: Path) -> dict:
    from .ansatz import SequenceCircuitSpec, build_sequence_circuit
    from .compiler import count_two_qubit

    if cfg.model.checkpoint:
        model, _ = _hybrid_checkpoint(cfg)
    else:
        model = build_model(cfg.model, cfg.train.seed)
        if model.kind != "hybrid":
            raise ConfigError("gate-count needs a hybrid model configuration")
    reports = []
    for L in cfg.model.lengths:
        spec = SequenceCircuitSpec(model.template, L, model.classifier)
        circuit = build_sequence_circuit(spec, np.zeros((L, model.d)),
                                         model.params.get("classifier"))
        r = count_two_qubit(circuit)
        reports.append({"length": L, **r.__dict__})
    return {"model": _model_info(model), "reports": reports}


def cmd_shot_bounds(cfg, out: Path) -> dict:
    from .noise import exact_expectations, shot_noise_f1_bounds

    model, _ = _hybrid_checkpoint(cfg)
    ds = load_dataset(cfg.data.dataset)
    seqs, labels = _split_sequences(ds, cfg)
    Z = np.array([exact_expectations(model.circuit_for(s)) for s in seqs])
    rows = []
    for shots in cfg.noise.shot_list:
        b = shot_noise_f1_bounds(Z, model, labels, shots)
        rows.append({"shots": shots, "delta": b.delta, "min_f1": b.min_f1, "max_f1": b.max_f1,
                     "base_f1": b.base_f1, "vectors_evaluated": b.vectors_evaluated})
    return {"sequences": len(seqs), "bounds": rows}


def cmd_attribute(cfg, out: Path) -> dict:
    from .attrib import aggregate_heatmap, attribute_dataset

    model, meta = load_model(cfg.model.checkpoint)
    ds = load_dataset(cfg.data.dataset)
    seqs, _ = _split_sequences(ds, cfg)
    a = cfg.attribution
    used, attrs = attribute_dataset(model, seqs, a.method, a.steps, a.permutations, a.seed)
    model_id = Path(cfg.model.checkpoint).stem
    hm = aggregate_heatmap(attrs, used, a.method, model_id)
    (out / "artifacts" / f"heatmap_{a.method}.tsv").write_text(hm.to_table())
    (out / "artifacts" / f"heatmap_{a.method}.svg").write_text(hm.to_svg())
    return {"sequences": len(used), "method": a.method, "top_positive": hm.top_cells(5, sign=1),
            "top_negative": hm.top_cells(5, sign=-1), "values": hm.values.tolist(),
            "frequencies": hm.frequencies.tolist()}


COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "stats": cmd_stats,
    "train": cmd_train,
    "cross-validate": cmd_cross_validate,
    "emulate": cmd_emulate,
    "mitigate": cmd_mitigate,
    "gate-count": cmd_gate_count,
    "shot-bounds": cmd_shot_bounds,
    "attribute": cmd_attribute,
}


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def run(command: str, config_path=None, overrides=(), output_dir=None) -> tuple[int, Path | None]:
    """Execute one subcommand; returns (exit status, run directory or None)."""
    if command not in COMMANDS:
        print(f"unknown subcommand {command!r}; choose from {', '.join(SUBCOMMANDS)}", file=sys.stderr)
        return EXIT_CONFIG, None
    try:
        cfg, text = load_config(config_path, overrides)
        _require(cfg, command)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG, None
    except DataError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA, None

    if output_dir is None:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        output_dir = Path(cfg.output.root) / f"{stamp}-{cfg.output.tag}"
        k = 1
        while output_dir.exists():
            output_dir = Path(cfg.output.root) / f"{stamp}-{cfg.output.tag}-{k}"
            k += 1
    out = Path(output_dir)
    (out / "artifacts").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(exist_ok=True)
    handler = logging.FileHandler(out / "logs" / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    started = time.perf_counter()
    status = EXIT_OK
    try:
        log.info("qpeptide %s numpy %s command %s", __version__, np.__version__, command)
        echo = text + "".join(f"\n# --set {o}" for o in overrides)
        (out / "config.yaml").write_text(echo if echo.endswith("\n") else echo + "\n")
        with np.errstate(over="ignore", under="ignore"):
            result = COMMANDS[command](cfg, out)
        payload = {
            "command": command,
            "versions": {"qpeptide": __version__, "numpy": np.__version__},
            "config": cfg.model_dump(mode="json", exclude={"workers", "output"}),
            "config_text": text,
            "overrides": list(overrides),
            "result": result,
        }
        (out / "results.json").write_text(json.dumps(payload, indent=1, sort_keys=True, default=_jsonable) + "\n")
    except ConfigError as exc:
        status = EXIT_CONFIG
        log.error("%s", exc)
    except (DataError, ModelError, FileNotFoundError) as exc:
        status = EXIT_DATA
        log.error("%s", exc)
    except (NumericalError, FloatingPointError) as exc:
        status = EXIT_NUMERICAL
        log.error("%s", exc)
    finally:
        elapsed = time.perf_counter() - started
        log.info("wall time %.2f s, exit %d", elapsed, status)
        (out / "logs" / "timing.json").write_text(json.dumps({"wall_seconds": elapsed}) + "\n")
        root.removeHandler(handler)
        handler.close()
    if status != EXIT_OK:
        print((out / "logs" / "run.log").read_text(), file=sys.stderr)
        shutil.rmtree(out / "artifacts", ignore_errors=True)
        (out / "results.json").unlink(missing_ok=True)
    return status, out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qpeptide", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", "-c", help="YAML experiment config")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config field (repeatable)")
    parser.add_argument("--output-dir", help="exact run directory (default runs/<timestamp>-<tag>)")
    args = parser.parse_args(argv)
    status, out = run(args.command, args.config, args.overrides, args.output_dir)
    if status == EXIT_OK:
        print(out)
    return status


if __name__ == "__main__":
    sys.exit(main())
