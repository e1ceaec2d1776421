"""Inference traces: the canonical data model plus file I/O, splitting and balancing.

A trace is a sequence of per-sample outcomes from a small on-device model
(full softmax vector) and a large remote model (a correctness bit), with
optional raw feature vectors for gating before the on-device inference.
The on-disk format is JSON Lines, one record per line::

    {"id": "r0", "label": 3, "sml_probs": [...], "sml_pred": 3,
     "lml_correct": true, "features": [...]}

`sml_pred` and `features` are optional on input; everything else is required.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

PROB_SUM_TOL = 1e-6


class TraceFormatError(ValueError):
    """A trace file or record violates the trace schema."""


class ComplexityLabel(Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


@dataclass(frozen=True)
class TraceRecord:
    """One sample: ground truth, small-model softmax, large-model correctness.

    `sml_probs` is stored renormalized so downstream sums are exact;
    `sml_pred` always equals the argmax (ties resolved to the smallest index).
    """

    id: str
    label: int
    sml_probs: np.ndarray
    sml_pred: int
    lml_correct: bool
    features: np.ndarray | None = None

    @property
    def confidence(self) -> float:
        return float(self.sml_probs[self.sml_pred])


@dataclass
class Trace:
    """An immutable, homogeneous list of records (same K, same feature dim)."""

    records: list[TraceRecord]
    num_classes: int
    feature_dim: int | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @classmethod
    def from_records(cls, records: list[TraceRecord]) -> "Trace":
        if not records:
            raise TraceFormatError("trace must contain at least one record")
        k = len(records[0].sml_probs)
        dims = {len(r.features) for r in records if r.features is not None}
        if len(dims) > 1:
            raise TraceFormatError(f"inconsistent feature dimensions: {sorted(dims)}")
        for r in records:
            if len(r.sml_probs) != k:
                raise TraceFormatError(
                    f"record {r.id!r}: expected {k} classes, got {len(r.sml_probs)}"
                )
        d = dims.pop() if dims and all(r.features is not None for r in records) else None
        return cls(records=records, num_classes=k, feature_dim=d)

    # Cached dense views; evaluators work on these instead of per-record loops.

    @cached_property
    def probs(self) -> np.ndarray:
        m = np.stack([r.sml_probs for r in self.records])
        m.flags.writeable = False
        return m

    @cached_property
    def labels(self) -> np.ndarray:
        a = np.array([r.label for r in self.records], dtype=np.int64)
        a.flags.writeable = False
        return a

    @cached_property
    def preds(self) -> np.ndarray:
        a = np.array([r.sml_pred for r in self.records], dtype=np.int64)
        a.flags.writeable = False
        return a

    @cached_property
    def lml_ok(self) -> np.ndarray:
        a = np.array([r.lml_correct for r in self.records], dtype=bool)
        a.flags.writeable = False
        return a

    @cached_property
    def confidences(self) -> np.ndarray:
        a = self.probs.max(axis=1)
        a.flags.writeable = False
        return a

    @cached_property
    def features(self) -> np.ndarray | None:
        if self.feature_dim is None:
            return None
        m = np.stack([r.features for r in self.records])
        m.flags.writeable = False
        return m

    @property
    def sml_accuracy(self) -> float:
        return float(np.mean(self.preds == self.labels))

    @property
    def lml_accuracy(self) -> float:
        return float(np.mean(self.lml_ok))

    def subset(self, indices) -> "Trace":
        recs = [self.records[i] for i in indices]
        return Trace(recs, self.num_classes, self.feature_dim)


def gate_label(record: TraceRecord) -> ComplexityLabel:
    """Complex iff the small model got this sample wrong."""
    if record.sml_pred != record.label:
        return ComplexityLabel.COMPLEX
    return ComplexityLabel.SIMPLE


def complexity_mask(trace: Trace) -> np.ndarray:
    """Boolean vector, True where the sample is complex."""
    return trace.preds != trace.labels


def _parse_record(obj: dict, line_no: int) -> TraceRecord:
    def fail(msg: str):
        raise TraceFormatError(f"{msg} at line {line_no}")

    if not isinstance(obj, dict):
        fail("record is not a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, str):
        fail("missing or non-string 'id'")
    label = obj.get("label")
    if not isinstance(label, int) or isinstance(label, bool):
        fail("missing or non-integer 'label'")
    raw = obj.get("sml_probs")
    if not isinstance(raw, list) or len(raw) < 2:
        fail("'sml_probs' must be a list of at least 2 numbers")
    probs = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(probs)):
        fail("non-finite probability")
    if probs.min() < -PROB_SUM_TOL or probs.max() > 1.0 + PROB_SUM_TOL:
        fail("probability range violation")
    total = float(probs.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        fail(f"probability sum violation (sum={total:.8f})")
    if not 0 <= label < len(probs):
        fail(f"label {label} outside [0, {len(probs)})")
    lml = obj.get("lml_correct")
    if not isinstance(lml, bool):
        fail("missing or non-boolean 'lml_correct'")

    # Renormalize after validation so downstream sums are exact.
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    argmax = int(np.argmax(probs))
    pred = obj.get("sml_pred")
    if pred is None:
        pred = argmax
    else:
        if not isinstance(pred, int) or isinstance(pred, bool):
            fail("non-integer 'sml_pred'")
        if pred != argmax:
            fail(f"'sml_pred'={pred} does not match argmax {argmax}")

    features = None
    if obj.get("features") is not None:
        feats = obj["features"]
        if not isinstance(feats, list) or not feats:
            fail("'features' must be a non-empty list of numbers")
        features = np.asarray(feats, dtype=np.float64)
        if not np.all(np.isfinite(features)):
            fail("non-finite feature value")
        features.flags.writeable = False

    probs.flags.writeable = False
    return TraceRecord(
        id=rid, label=label, sml_probs=probs, sml_pred=int(pred),
        lml_correct=lml, features=features,
    )


def load_trace(path: str | Path) -> Trace:
    """Load and validate a JSON-Lines trace file.

    Raises TraceFormatError with the offending line number on any schema
    violation; FileNotFoundError if the path does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trace file not found: {path}")
    records: list[TraceRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"malformed JSON at line {line_no}: {exc.msg}") from exc
            rec = _parse_record(obj, line_no)
            if records and len(rec.sml_probs) != len(records[0].sml_probs):
                raise TraceFormatError(
                    f"inconsistent class count at line {line_no}: "
                    f"expected {len(records[0].sml_probs)}, got {len(rec.sml_probs)}"
                )
            if records and rec.features is not None and records[0].features is not None \
                    and len(rec.features) != len(records[0].features):
                raise TraceFormatError(
                    f"inconsistent feature dimension at line {line_no}: "
                    f"expected {len(records[0].features)}, got {len(rec.features)}"
                )
            records.append(rec)
    return Trace.from_records(records)


def save_trace(trace: Trace, path: str | Path) -> None:
    """Write a trace in the JSON-Lines format (UTF-8, LF line endings)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for r in trace:
            obj = {
                "id": r.id,
                "label": int(r.label),
                "sml_probs": [float(p) for p in r.sml_probs],
                "sml_pred": int(r.sml_pred),
                "lml_correct": bool(r.lml_correct),
            }
            if r.features is not None:
                obj["features"] = [float(x) for x in r.features]
            fh.write(json.dumps(obj) + "\n")


def split_trace(trace: Trace, train_fraction: float, seed: int) -> tuple[Trace, Trace]:
    """Seeded shuffle then prefix split into (train, eval) of sizes (⌊n·f⌋, n−⌊n·f⌋)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(trace)
    if n < 2:
        raise ValueError("cannot split a trace with fewer than 2 records")
    n_train = int(np.floor(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise ValueError(
            f"split of {n} records at fraction {train_fraction} leaves an empty half"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return trace.subset(perm[:n_train]), trace.subset(perm[n_train:])


def downsample_balance(records: list[TraceRecord], seed: int) -> list[TraceRecord]:
    """Subsample the majority complexity class down to the minority count.

    Uniform without replacement; the combined result is reshuffled so class
    order carries no signal. Deterministic given the seed.
    """
    simple = [r for r in records if gate_label(r) is ComplexityLabel.SIMPLE]
    complex_ = [r for r in records if gate_label(r) is ComplexityLabel.COMPLEX]
    if not simple or not complex_:
        raise ValueError(
            f"both complexity classes required (simple={len(simple)}, complex={len(complex_)})"
        )
    rng = np.random.default_rng(seed)
    minority = min(len(simple), len(complex_))
    majority = simple if len(simple) > len(complex_) else complex_
    other = complex_ if majority is simple else simple
    keep_idx = rng.choice(len(majority), size=minority, replace=False)
    balanced = [majority[i] for i in keep_idx] + other
    order = rng.permutation(len(balanced))
    return [balanced[i] for i in order]
