"""Synthetic trace generation with known accuracy, calibration and distortion.

Construction, per record: the top softmax mass p1 = 1/K + (1-1/K)*q with
q ~ Beta(q_alpha, q_beta), correctness drawn Bernoulli(p1), and the
remaining mass spread over the other classes by a flat Dirichlet. When the
prediction is wrong, the true label is drawn categorically from those tail
masses, so the undistorted vector is calibrated entry-wise:
P(label = j | vector) = vector_j for every class, not just the top one.
(A uniform wrong-label draw would leave the tail miscalibrated and bias the
NLL-optimal temperature noticeably above 1.)

An argmax-preserving power distortion p_i <- p_i^c / sum_j p_j^c then
inflates confidence without touching accuracy, so temperature scaling with
T = c must undo it exactly. Defaults give expected small-model accuracy
0.1 + 0.9 * E[Beta(5, 1)] = 0.85 and large-model accuracy 0.995.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace import Trace, TraceRecord

# Rejection cap for the Dirichlet fill; effectively never reached with the
# default Beta(5, 1) confidence prior.
_MAX_FILL_ROUNDS = 1000


@dataclass(frozen=True)
class SynthConfig:
    n: int
    seed: int
    num_classes: int = 10
    q_alpha: float = 5.0
    q_beta: float = 1.0
    lml_acc: float = 0.995
    overconfidence: float = 2.0
    feature_dim: int | None = None
    noise_scale: float = 1.0
    feature_shift: float = 14.0

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.q_alpha <= 0 or self.q_beta <= 0:
            raise ValueError("Beta shape parameters must be positive")
        if not 0.0 < self.lml_acc <= 1.0:
            raise ValueError("lml_acc must be in (0, 1]")
        if self.overconfidence < 1.0:
            raise ValueError("overconfidence exponent must be >= 1")
        if self.feature_dim is not None and self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1 when set")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")


def _fill_other_mass(rng: np.random.Generator, p1: np.ndarray, k: int) -> np.ndarray:
    """Flat Dirichlet split of the non-top mass, conditioned on staying below p1.

    Without the condition a low-confidence row could put more than p1 on a
    single other class and move the argmax off the predicted class; offending
    rows are redrawn until every entry is strictly below p1.
    """
    n = len(p1)
    gam = rng.gamma(1.0, 1.0, size=(n, k - 1))
    fill = gam / gam.sum(axis=1, keepdims=True)
    for _ in range(_MAX_FILL_ROUNDS):
        bad = np.flatnonzero(fill.max(axis=1) * (1.0 - p1) >= p1)
        if bad.size == 0:
            return fill
        gam = rng.gamma(1.0, 1.0, size=(bad.size, k - 1))
        fill[bad] = gam / gam.sum(axis=1, keepdims=True)
    # Uniform fallback: strictly below p1 whenever p1 > 1/K.
    fill[bad] = 1.0 / (k - 1)
    return fill


def generate(config: SynthConfig) -> Trace:
    """Generate a trace; byte-identical for identical configs."""
    config.validate()
    n, k = config.n, config.num_classes
    rng = np.random.default_rng(config.seed)

    preds = rng.integers(0, k, size=n)
    q = rng.beta(config.q_alpha, config.q_beta, size=n)
    p1 = 1.0 / k + (1.0 - 1.0 / k) * q
    correct = rng.random(n) < p1
    fill = _fill_other_mass(rng, p1, k)
    # Incorrect records: the true label lands on an off-prediction class with
    # probability proportional to the mass placed there (full calibration).
    pick = (np.cumsum(fill, axis=1) < rng.random(n)[:, None]).sum(axis=1)
    pick = np.minimum(pick, k - 2)
    lml_ok = rng.random(n) < config.lml_acc

    probs = np.empty((n, k))
    cols = np.arange(k)
    others = np.argsort(cols[None, :] == preds[:, None], axis=1, kind="stable")[:, : k - 1]
    rows = np.arange(n)[:, None]
    probs[rows, others] = fill * (1.0 - p1)[:, None]
    probs[np.arange(n), preds] = p1
    labels = np.where(correct, preds, others[np.arange(n), pick])

    # Power distortion: order-preserving, so accuracy is untouched while the
    # max probability inflates for c > 1.
    c = config.overconfidence
    distorted = probs**c
    distorted /= distorted.sum(axis=1, keepdims=True)

    # Feature model: noisy class blobs plus a fixed "difficulty" direction.
    # Hard (low-p1, likely-complex) samples drift along that direction and are
    # noisier, so both linear and tree gates have signal to learn. Noise scale
    # alone would leave linear gates at chance (zero mean separation).
    features = None
    if config.feature_dim is not None:
        d = config.feature_dim
        class_means = rng.standard_normal((k, d))
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        noise = rng.standard_normal((n, d))
        sigma = config.noise_scale * (1.0 + (1.0 - p1))
        features = (
            class_means[labels]
            + np.outer((1.0 - p1) * config.feature_shift, direction)
            + noise * sigma[:, None]
        )

    records = []
    width = len(str(n - 1))
    for i in range(n):
        p = distorted[i]
        p.flags.writeable = False
        f = None
        if features is not None:
            f = features[i]
            f.flags.writeable = False
        records.append(
            TraceRecord(
                id=f"synth-{i:0{width}d}",
                label=int(labels[i]),
                sml_probs=p,
                sml_pred=int(preds[i]),
                lml_correct=bool(lml_ok[i]),
                features=f,
            )
        )
    return Trace.from_records(records)
