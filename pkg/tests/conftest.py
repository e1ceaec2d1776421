import numpy as np
import pytest

from higate.trace import Trace, TraceRecord


def mk_record(rid, label, probs, lml=True, features=None):
    probs = np.asarray(probs, dtype=np.float64)
    probs = probs / probs.sum()
    return TraceRecord(
        id=str(rid),
        label=int(label),
        sml_probs=probs,
        sml_pred=int(np.argmax(probs)),
        lml_correct=bool(lml),
        features=None if features is None else np.asarray(features, dtype=np.float64),
    )


def mk_trace(rows):
    """rows: iterable of (label, probs[, lml[, features]]) tuples."""
    records = []
    for i, row in enumerate(rows):
        label, probs = row[0], row[1]
        lml = row[2] if len(row) > 2 else True
        features = row[3] if len(row) > 3 else None
        records.append(mk_record(f"r{i}", label, probs, lml, features))
    return Trace.from_records(records)


def separable_trace(n=2000, num_classes=10, seed=0, lml_acc=0.995):
    """Trace where confidence linearly separates complexity.

    Every prediction is class 0; simple records put 0.75..0.95 there with the
    true label 0, complex ones 0.30..0.50 with the true label elsewhere. The
    coordinate-0 mass is the confidence, so a linear gate can read it off.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        is_complex = rng.random() < 0.3
        conf = rng.uniform(0.30, 0.50) if is_complex else rng.uniform(0.75, 0.95)
        probs = np.full(num_classes, (1.0 - conf) / (num_classes - 1))
        probs[0] = conf
        label = int(rng.integers(1, num_classes)) if is_complex else 0
        records.append(mk_record(f"s{i}", label, probs, lml=bool(rng.random() < lml_acc)))
    return Trace.from_records(records)


@pytest.fixture(scope="session")
def calibrated_trace():
    from higate.synth import SynthConfig, generate

    return generate(SynthConfig(n=10000, seed=5, overconfidence=1.0))


@pytest.fixture(scope="session")
def overconfident_trace():
    from higate.synth import SynthConfig, generate

    return generate(SynthConfig(n=10000, seed=5, overconfidence=2.0))


@pytest.fixture(scope="session")
def featured_trace():
    from higate.synth import SynthConfig, generate

    return generate(SynthConfig(n=10000, seed=1, overconfidence=2.0, feature_dim=8))
