"""Temperature scaling, reliability binning and expected calibration error.

The toolkit ingests probabilities rather than logits, so logits are
recovered as log(p); temperature scaling on log-probabilities is equivalent
up to the additive constant the softmax ignores. The temperature is fitted
by minimizing negative log-likelihood (golden-section over log T); ECE is
reported, never optimized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trace import Trace

EPS = 1e-12
T_MIN = 0.05
T_MAX = 10.0
GOLDEN_TOL = 1e-4  # absolute tolerance in log T

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def apply_temperature(probs: np.ndarray, temperature: float) -> np.ndarray:
    """Rescale a probability vector (or row-matrix) by temperature T.

    Computes softmax(log(p) / T) with the log clamped at EPS; T = 1 returns
    the input unchanged, making it an exact fixed point. Preserves the argmax
    for every T > 0.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    p = np.asarray(probs, dtype=np.float64)
    if temperature == 1.0:
        return p.copy()
    z = np.log(np.maximum(p, EPS)) / temperature
    z -= z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_probs(trace: Trace) -> np.ndarray:
    return np.log(np.maximum(trace.probs, EPS))


def _nll_from_logp(logp: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    z = logp / temperature
    # -log softmax(z)_y = logsumexp(z) - z_y
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def negative_log_likelihood(trace: Trace, temperature: float) -> float:
    """Mean -log p(label) after temperature scaling, clamped at EPS."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    scaled = apply_temperature(trace.probs, temperature)
    picked = np.maximum(scaled[np.arange(len(trace)), trace.labels], EPS)
    return float(np.mean(-np.log(picked)))


@dataclass
class ReliabilityBins:
    """Equal-width confidence bins: bin m covers (m/M, (m+1)/M], bin 0 includes 0."""

    num_bins: int
    counts: np.ndarray
    mean_confidence: np.ndarray
    mean_accuracy: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.num_bins + 1) / self.num_bins

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def reliability(trace: Trace, num_bins: int = 10, temperature: float = 1.0) -> ReliabilityBins:
    """Bin temperature-scaled confidences against small-model correctness.

    Accuracy uses the stored prediction; the argmax is invariant under
    temperature so no re-argmax is needed. Empty bins report 0 means.
    """
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    conf = apply_temperature(trace.probs, temperature).max(axis=1)
    correct = (trace.preds == trace.labels).astype(np.float64)
    edges = np.arange(num_bins + 1) / num_bins
    # right-closed intervals; anything at or below 0 joins bin 0
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, num_bins - 1)
    counts = np.bincount(idx, minlength=num_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=num_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=num_bins)
    occupied = counts > 0
    mean_conf = np.zeros(num_bins)
    mean_acc = np.zeros(num_bins)
    mean_conf[occupied] = conf_sum[occupied] / counts[occupied]
    mean_acc[occupied] = acc_sum[occupied] / counts[occupied]
    return ReliabilityBins(num_bins, counts, mean_conf, mean_acc)


def ece(bins: ReliabilityBins) -> float:
    """Count-weighted mean absolute gap between bin accuracy and confidence."""
    total = bins.total
    if total == 0:
        raise ValueError("cannot compute ECE over zero records")
    weights = bins.counts / total
    return float(np.sum(weights * np.abs(bins.mean_accuracy - bins.mean_confidence)))


@dataclass
class CalibrationResult:
    temperature: float
    ece_before: float
    ece_after: float
    nll_before: float
    nll_after: float
    num_bins: int = 10

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "ece_before": self.ece_before,
            "ece_after": self.ece_after,
            "nll_before": self.nll_before,
            "nll_after": self.nll_after,
            "num_bins": self.num_bins,
        }


def fit_temperature(fit_trace: Trace, num_bins: int = 10) -> CalibrationResult:
    """Fit T* = argmin NLL over [0.05, 10] by golden-section search on log T.

    The search endpoints and T = 1 are evaluated explicitly, so the fitted
    NLL can never exceed the uncalibrated one. Deterministic: no RNG.
    """
    logp = _log_probs(fit_trace)
    labels = fit_trace.labels

    def f(x: float) -> float:
        return _nll_from_logp(logp, labels, math.exp(x))

    lo, hi = math.log(T_MIN), math.log(T_MAX)
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > GOLDEN_TOL:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x_star = (a + b) / 2.0

    candidates = [x_star, 0.0, lo, hi]
    values = [f(x) for x in candidates]
    best = candidates[int(np.argmin(values))]
    t_star = math.exp(best)

    nll_before = _nll_from_logp(logp, labels, 1.0)
    nll_after = _nll_from_logp(logp, labels, t_star)
    ece_before = ece(reliability(fit_trace, num_bins, temperature=1.0))
    ece_after = ece(reliability(fit_trace, num_bins, temperature=t_star))
    return CalibrationResult(
        temperature=t_star,
        ece_before=ece_before,
        ece_after=ece_after,
        nll_before=nll_before,
        nll_after=nll_after,
        num_bins=num_bins,
    )
