"""Accept-locally vs offload decision policies.

Six families:

* ``ft``:      accept locally iff max softmax >= theta (boundary accepts,
               so theta=0 never offloads and theta=1 offloads everything
               that is not exactly one-hot).
* ``cft``:     the same rule on temperature-scaled probabilities.
* ``gate:post``: a learned gate on the softmax vector, run after the
               on-device inference; offload iff score >= 0.5.
* ``gate:pre``:  a learned gate on raw feature vectors, run instead of the
               on-device inference for offloaded samples.
* ``full-offload`` / ``never-offload``: constant baselines.

CLI string syntax: ``ft:0.55``, ``cft:0.5@T=1.8``, ``gate:post:model.json``,
``gate:pre:lr``, ``full-offload``, ``never-offload``. ``ft`` / ``cft``
without a threshold request per-sweep re-optimization.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .calibration import apply_temperature
from .learners import (
    GateHyper,
    GateModel,
    fit_standardizer,
    gate_predict_scores,
    train_linear_svm,
    train_logistic,
    train_random_forest,
)
from .trace import ComplexityLabel, Trace, TraceRecord, downsample_balance, gate_label, split_trace

GATE_SCORE_THRESHOLD = 0.5


class Decision(Enum):
    ACCEPT_LOCAL = "accept"
    OFFLOAD = "offload"


class PolicyFamily(Enum):
    FT = "ft"
    CFT = "cft"
    POST_GATE = "gate:post"
    PRE_GATE = "gate:pre"
    FULL_OFFLOAD = "full-offload"
    NEVER_OFFLOAD = "never-offload"


@dataclass(frozen=True)
class PolicySpec:
    """A fully-built policy. theta=None on ft/cft marks a threshold that a
    sweep re-optimizes per cost point; decide() refuses to run one."""

    family: PolicyFamily
    theta: float | None = None
    temperature: float | None = None
    gate: GateModel | None = None
    gate_threshold: float = GATE_SCORE_THRESHOLD
    name: str | None = None

    def __post_init__(self):
        fam = self.family
        if self.theta is not None and not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")
        if self.temperature is not None and self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if fam in (PolicyFamily.POST_GATE, PolicyFamily.PRE_GATE) and self.gate is None:
            raise ValueError(f"{fam.value} requires a trained gate model")

    def require_resolved(self) -> None:
        if self.family in (PolicyFamily.FT, PolicyFamily.CFT) and self.theta is None:
            raise ValueError(f"{self.label}: threshold not resolved")
        if self.family is PolicyFamily.CFT and self.temperature is None:
            raise ValueError(f"{self.label}: temperature not resolved")

    @property
    def label(self) -> str:
        return self.name if self.name else self.family.value

    def describe(self) -> dict:
        out = {"family": self.family.value, "label": self.label}
        if self.theta is not None:
            out["theta"] = self.theta
        if self.temperature is not None:
            out["temperature"] = self.temperature
        if self.gate is not None:
            out["gate_kind"] = self.gate.kind
            out["gate_threshold"] = self.gate_threshold
        return out


def decide(policy: PolicySpec, record: TraceRecord) -> Decision:
    """Route one record. Pure; see decide_batch for the vectorized twin."""
    policy.require_resolved()
    fam = policy.family
    if fam is PolicyFamily.FULL_OFFLOAD:
        return Decision.OFFLOAD
    if fam is PolicyFamily.NEVER_OFFLOAD:
        return Decision.ACCEPT_LOCAL
    if fam is PolicyFamily.FT:
        conf = float(np.max(record.sml_probs))
        return Decision.ACCEPT_LOCAL if conf >= policy.theta else Decision.OFFLOAD
    if fam is PolicyFamily.CFT:
        conf = float(np.max(apply_temperature(record.sml_probs, policy.temperature)))
        return Decision.ACCEPT_LOCAL if conf >= policy.theta else Decision.OFFLOAD
    if fam is PolicyFamily.POST_GATE:
        x = record.sml_probs
    else:
        if record.features is None:
            raise ValueError(f"pre-gate policy needs features, record {record.id!r} has none")
        x = record.features
    score = float(gate_predict_scores(policy.gate, np.asarray(x)[None, :])[0])
    return Decision.OFFLOAD if score >= policy.gate_threshold else Decision.ACCEPT_LOCAL


def decide_batch(policy: PolicySpec, trace: Trace) -> np.ndarray:
    """Offload mask for a whole trace; record-wise identical to decide()."""
    policy.require_resolved()
    fam = policy.family
    n = len(trace)
    if fam is PolicyFamily.FULL_OFFLOAD:
        return np.ones(n, dtype=bool)
    if fam is PolicyFamily.NEVER_OFFLOAD:
        return np.zeros(n, dtype=bool)
    if fam is PolicyFamily.FT:
        return trace.confidences < policy.theta
    if fam is PolicyFamily.CFT:
        conf = apply_temperature(trace.probs, policy.temperature).max(axis=1)
        return conf < policy.theta
    if fam is PolicyFamily.POST_GATE:
        scores = gate_predict_scores(policy.gate, trace.probs)
    else:
        if trace.features is None:
            raise ValueError("pre-gate policy needs a trace where every record has features")
        scores = gate_predict_scores(policy.gate, trace.features)
    return scores >= policy.gate_threshold


# ---------------------------------------------------------------------------
# gate construction


@dataclass
class GateBuildResult:
    policy: PolicySpec
    gate: GateModel
    holdout_accuracy: float
    train_size: int
    holdout_size: int
    class_counts: dict


_TRAINERS = {
    "lr": train_logistic,
    "svm": train_linear_svm,
    "rf": train_random_forest,
}


def _build_gate(train: Trace, hyper: GateHyper, seed: int, stage: str) -> GateBuildResult:
    hyper.validate()
    n_complex = sum(1 for r in train if gate_label(r) is ComplexityLabel.COMPLEX)
    n_simple = len(train) - n_complex
    if n_complex == 0 or n_simple == 0:
        raise ValueError(
            f"gate training needs both classes (simple={n_simple}, complex={n_complex})"
        )
    balanced = downsample_balance(train.records, seed)
    gate_train, gate_holdout = split_trace(Trace.from_records(balanced), 0.8, seed)

    def matrix(t: Trace) -> np.ndarray:
        if stage == "post":
            return t.probs
        if t.features is None:
            raise ValueError("pre-gate training needs features on every record")
        return t.features

    X_train = matrix(gate_train)
    X_hold = matrix(gate_holdout)
    y_train = complexity_targets(gate_train)
    y_hold = complexity_targets(gate_holdout)

    scaler = fit_standardizer(X_train)
    model = _TRAINERS[hyper.kind](scaler.transform(X_train), y_train, hyper, seed)
    gate = GateModel(
        kind=hyper.kind,
        scaler=scaler,
        linear=None if hyper.kind == "rf" else model,
        forest=model if hyper.kind == "rf" else None,
        hyper=hyper,
        stage=stage,
    )
    scores = gate_predict_scores(gate, X_hold)
    predicted = (scores >= GATE_SCORE_THRESHOLD).astype(np.float64)
    holdout_acc = float(np.mean(predicted == y_hold))
    gate.metrics = {
        "holdout_accuracy": holdout_acc,
        "train_size": len(gate_train),
        "holdout_size": len(gate_holdout),
    }
    family = PolicyFamily.POST_GATE if stage == "post" else PolicyFamily.PRE_GATE
    policy = PolicySpec(family=family, gate=gate, name=f"gate:{stage}:{hyper.kind}")
    return GateBuildResult(
        policy=policy,
        gate=gate,
        holdout_accuracy=holdout_acc,
        train_size=len(gate_train),
        holdout_size=len(gate_holdout),
        class_counts={"simple": n_simple, "complex": n_complex},
    )


def complexity_targets(trace: Trace) -> np.ndarray:
    """0/1 targets for gate training; complex samples are class 1."""
    return (trace.preds != trace.labels).astype(np.float64)


def build_post_gate(train: Trace, hyper: GateHyper, seed: int = 0) -> GateBuildResult:
    """Balance, split 80:20, standardize softmax vectors, train, score holdout."""
    return _build_gate(train, hyper, seed, stage="post")


def build_pre_gate(train: Trace, hyper: GateHyper, seed: int = 0) -> GateBuildResult:
    """Same pipeline on raw feature vectors (gating before on-device inference)."""
    if train.features is None:
        raise ValueError("pre-gate training needs a trace where every record has features")
    return _build_gate(train, hyper, seed, stage="pre")


# ---------------------------------------------------------------------------
# CLI policy syntax


@dataclass(frozen=True)
class PolicyRequest:
    """A parsed policy string; gates and auto thresholds resolve later."""

    family: PolicyFamily
    raw: str
    theta: float | None = None       # None on ft/cft means re-optimize per sweep
    temperature: float | None = None  # None on cft means use the fitted temperature
    gate_stage: str | None = None
    gate_source: str | None = None   # learner kind (lr|svm|rf) or a model path


def parse_policy(text: str) -> PolicyRequest:
    spec = text.strip()
    if spec == "full-offload":
        return PolicyRequest(PolicyFamily.FULL_OFFLOAD, spec)
    if spec == "never-offload":
        return PolicyRequest(PolicyFamily.NEVER_OFFLOAD, spec)
    if spec == "ft" or spec.startswith("ft:"):
        theta = None
        if spec != "ft":
            theta = _parse_theta(spec[3:], spec)
        return PolicyRequest(PolicyFamily.FT, spec, theta=theta)
    if spec == "cft" or spec.startswith("cft:"):
        theta = None
        temperature = None
        rest = spec[4:] if spec != "cft" else ""
        if "@" in rest:
            theta_part, t_part = rest.split("@", 1)
            if not t_part.startswith("T="):
                raise ValueError(f"bad policy {text!r}: expected @T=<value>")
            temperature = _parse_positive(t_part[2:], spec)
            rest = theta_part
        if rest:
            theta = _parse_theta(rest, spec)
        return PolicyRequest(PolicyFamily.CFT, spec, theta=theta, temperature=temperature)
    if spec.startswith("gate:"):
        parts = spec.split(":", 2)
        if len(parts) != 3 or parts[1] not in ("pre", "post") or not parts[2]:
            raise ValueError(
                f"bad policy {text!r}: expected gate:<pre|post>:<lr|svm|rf|model.json>"
            )
        stage, source = parts[1], parts[2]
        family = PolicyFamily.POST_GATE if stage == "post" else PolicyFamily.PRE_GATE
        return PolicyRequest(family, spec, gate_stage=stage, gate_source=source)
    raise ValueError(f"unrecognized policy {text!r}")


def _parse_theta(s: str, spec: str) -> float:
    try:
        theta = float(s)
    except ValueError as exc:
        raise ValueError(f"bad policy {spec!r}: {s!r} is not a number") from exc
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"bad policy {spec!r}: theta must be in [0, 1]")
    return theta


def _parse_positive(s: str, spec: str) -> float:
    try:
        value = float(s)
    except ValueError as exc:
        raise ValueError(f"bad policy {spec!r}: {s!r} is not a number") from exc
    if value <= 0:
        raise ValueError(f"bad policy {spec!r}: temperature must be positive")
    return value
