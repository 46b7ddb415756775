"""Peptide records: ingestion, labelling, rebalancing, folds and class statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
MIN_LENGTH, MAX_LENGTH = 8, 15
PIC50_THRESHOLD = 8.0
UNIT_SCALE = {"M": 1.0, "molar": 1.0, "nM": 1e-9, "nanomolar": 1e-9}


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class PeptideRecord:
    sequence: str
    label: int
    ic50: float | None = None  # molar
    pic50: float | None = None

    def __post_init__(self):
        validate_sequence(self.sequence)
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")


def validate_sequence(seq: str, where: str = "") -> None:
    prefix = f"{where}: " if where else ""
    if not MIN_LENGTH <= len(seq) <= MAX_LENGTH:
        raise DataError(f"{prefix}sequence {seq!r} has length {len(seq)}, expected {MIN_LENGTH}-{MAX_LENGTH}")
    bad = sorted(set(seq) - set(AMINO_ACIDS))
    if bad:
        raise DataError(f"{prefix}sequence {seq!r} contains non-canonical residues {bad}")


@dataclass(frozen=True)
class Dataset:
    records: tuple[PeptideRecord, ...]
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def sequences(self) -> list[str]:
        return [r.sequence for r in self.records]

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=int)

    @property
    def class_ratio(self) -> float:
        return float(self.labels.mean()) if self.records else 0.0

    def subset(self, indices) -> Dataset:
        return Dataset(tuple(self.records[i] for i in indices), dict(self.provenance))


def pic50(ic50_molar: float) -> float:
    return -math.log10(ic50_molar)


def label_records(raw, units: str = "M") -> list[PeptideRecord]:
    """Label ``(sequence, ic50)`` pairs: strong (1) iff pIC50 >= 8.

    ``raw`` items may carry a third element, the source line number, used in
    error messages.
    """
    if units not in UNIT_SCALE:
        raise DataError(f"unknown IC50 units {units!r}; use one of {sorted(UNIT_SCALE)}")
    scale = UNIT_SCALE[units]
    out = []
    for i, item in enumerate(raw):
        seq, value = item[0], item[1]
        where = f"line {item[2]}" if len(item) > 2 else f"record {i}"
        validate_sequence(seq, where)
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise DataError(f"{where}: IC50 {value!r} is not a number") from None
        if not value > 0 or not math.isfinite(value):
            raise DataError(f"{where}: IC50 must be positive and finite, got {value}")
        # log10 of the value in its own units first, so 10 nM lands exactly on pIC50 = 8
        p = -math.log10(value) - math.log10(scale)
        label = int(round(p, 9) >= PIC50_THRESHOLD)
        out.append(PeptideRecord(seq, label, value * scale, p))
    return out


def read_records(path) -> tuple[list[PeptideRecord], dict]:
    """Parse a delimited file with a ``sequence`` column and ``ic50`` or ``label``.

    Lines starting with ``#`` are comments; ``# units: nM`` (or ``M``) declares
    IC50 units and is required when an ``ic50`` column is present.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    meta: dict[str, str] = {}
    body: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition(":")
            if sep:
                meta[key.strip().lower()] = value.strip()
            continue
        body.append((lineno, line))
    if not body:
        raise DataError(f"{path}: no header row")
    header_line = body[0][1]
    delimiter = "\t" if "\t" in header_line else ","
    rows = list(csv.reader(io.StringIO("\n".join(l for _, l in body)), delimiter=delimiter))
    header = [h.strip().lower() for h in rows[0]]
    if "sequence" not in header:
        raise DataError(f"{path}: header must contain a 'sequence' column")
    si = header.index("sequence")
    provenance = {"source": str(path), **{f"header_{k}": v for k, v in meta.items()}}
    if "ic50" in header:
        units = meta.get("units")
        if units is None:
            raise DataError(f"{path}: ic50 column present but no '# units:' header line")
        ci = header.index("ic50")
        raw = []
        for (lineno, _), row in zip(body[1:], rows[1:]):
            if len(row) <= max(si, ci):
                raise DataError(f"line {lineno}: expected at least {max(si, ci) + 1} columns")
            raw.append((row[si].strip().upper(), row[ci].strip(), lineno))
        provenance["filter"] = f"pIC50 >= {PIC50_THRESHOLD} is strong; units {units}"
        return label_records(raw, units), provenance
    if "label" in header:
        li = header.index("label")
        records = []
        for (lineno, _), row in zip(body[1:], rows[1:]):
            if len(row) <= max(si, li):
                raise DataError(f"line {lineno}: expected at least {max(si, li) + 1} columns")
            seq = row[si].strip().upper()
            validate_sequence(seq, f"line {lineno}")
            if row[li].strip() not in ("0", "1"):
                raise DataError(f"line {lineno}: label must be 0 or 1, got {row[li]!r}")
            records.append(PeptideRecord(seq, int(row[li])))
        provenance["filter"] = "pre-assigned labels"
        return records, provenance
    raise DataError(f"{path}: header needs an 'ic50' or 'label' column")


def downsample(records, target_strong_fraction: float = 0.30, seed: int = 0) -> Dataset:
    """Drop a seeded random subset of weak records until the strong fraction hits the target.

    The kept total is ``floor(strong / target)``; strong records are never removed
    and record order is preserved.
    """
    records = list(records)
    if not 0 < target_strong_fraction < 1:
        raise DataError("target strong fraction must lie in (0, 1)")
    strong = [i for i, r in enumerate(records) if r.label == 1]
    weak = [i for i, r in enumerate(records) if r.label == 0]
    s, w = len(strong), len(weak)
    if s == 0:
        raise DataError("no strong records to balance against")
    keep_weak = int(math.floor(s / target_strong_fraction + 1e-9)) - s
    if keep_weak > w:
        if s / (s + w) > target_strong_fraction + 1.0 / (s + w):
            raise DataError(
                f"strong fraction {s / (s + w):.3f} already exceeds target {target_strong_fraction}"
            )
        keep_weak = w
    rng = np.random.default_rng(seed)
    kept_weak = set(rng.choice(weak, size=keep_weak, replace=False).tolist()) if keep_weak < w else set(weak)
    kept = [r for i, r in enumerate(records) if r.label == 1 or i in kept_weak]
    provenance = {
        "downsample_target": target_strong_fraction,
        "downsample_seed": seed,
        "input_size": len(records),
        "input_strong": s,
    }
    return Dataset(tuple(kept), provenance)


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def check_disjoint(self) -> None:
        a, b, c = set(self.train.tolist()), set(self.validation.tolist()), set(self.test.tolist())
        if a & b or a & c or b & c:
            raise DataError(f"fold {self.fold_id}: train/validation/test overlap")
        if not (a and b and c):
            raise DataError(f"fold {self.fold_id}: empty split")


def make_folds(dataset: Dataset, k: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Stratified k-fold partition; fold i tests on half of partition i.

    Each class is shuffled and dealt round-robin into ``k`` partitions. Within
    partition ``i`` the strong-then-weak list is split by alternating position
    into validation and test; the remaining partitions form the training set.
    """
    if k < 2:
        raise DataError("need at least 2 folds")
    if len(dataset) < 10 * k:
        raise DataError(f"dataset of {len(dataset)} records is too small for {k} folds (need {10 * k})")
    labels = dataset.labels
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            parts[(offset + j) % k].append(int(i))
        offset += len(idx)
    folds = []
    for f in range(k):
        held = parts[f]
        val = np.sort(np.array(held[0::2], dtype=int))
        test = np.sort(np.array(held[1::2], dtype=int))
        train = np.sort(np.array([i for g in range(k) if g != f for i in parts[g]], dtype=int))
        split = FoldSplit(f, train, val, test)
        split.check_disjoint()
        folds.append(split)
    return folds


def class_statistics(dataset: Dataset) -> dict:
    """Per-class residue frequencies and the sequence-length histogram."""
    if len(dataset) == 0:
        raise DataError("empty dataset")
    freqs = {}
    for cls, name in ((0, "weak"), (1, "strong")):
        counts = Counter()
        for r in dataset.records:
            if r.label == cls:
                counts.update(r.sequence)
        total = sum(counts.values())
        freqs[name] = {a: (counts[a] / total if total else 0.0) for a in AMINO_ACIDS}
    lengths = Counter(len(r.sequence) for r in dataset.records)
    return {
        "size": len(dataset),
        "strong_fraction": dataset.class_ratio,
        "length_histogram": {L: lengths.get(L, 0) for L in range(MIN_LENGTH, MAX_LENGTH + 1)},
        "frequencies": freqs,
    }


def format_statistics(stats: dict) -> str:
    lines = [f"# records: {stats['size']}  strong fraction: {stats['strong_fraction']:.4f}", "", "length\tcount"]
    lines += [f"{L}\t{c}" for L, c in stats["length_histogram"].items()]
    lines += ["", "residue\tweak\tstrong"]
    fw, fs = stats["frequencies"]["weak"], stats["frequencies"]["strong"]
    lines += [f"{a}\t{fw[a]:.4f}\t{fs[a]:.4f}" for a in AMINO_ACIDS]
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path) -> None:
    payload = {
        "provenance": dataset.provenance,
        "records": [
            {"sequence": r.sequence, "label": r.label, "ic50": r.ic50, "pic50": r.pic50}
            for r in dataset.records
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load dataset {path}: {exc}") from None
    records = []
    for i, r in enumerate(payload["records"]):
        validate_sequence(r["sequence"], f"record {i}")
        records.append(PeptideRecord(r["sequence"], int(r["label"]), r.get("ic50"), r.get("pic50")))
    return Dataset(tuple(records), payload.get("provenance", {}))


def synthetic_rule_dataset(size: int = 500, seed: int = 0, lengths=(9,), residue: str = "Y") -> Dataset:
    """Balanced dataset labelled strong iff the final residue is ``residue``.

    ``residue`` never appears elsewhere in a sequence, so the rule is exactly
    recoverable from the last position.
    """
    rng = np.random.default_rng(seed)
    others = [a for a in AMINO_ACIDS if a != residue]
    records = []
    for i in range(size):
        L = int(rng.choice(lengths))
        body = "".join(rng.choice(others, size=L - 1))
        label = int(i % 2 == 0)
        last = residue if label else str(rng.choice(others))
        records.append(PeptideRecord(body + last, label))
    order = rng.permutation(size)
    return Dataset(tuple(records[i] for i in order), {"source": f"synthetic rule: strong iff final residue {residue}", "seed": seed})
