"""Deterministic from-scratch binary classifiers used as offload gates.

Three learner families: logistic regression (full-batch gradient descent),
linear SVM (per-sample subgradient descent with 1/(lambda*t) steps), and a
random forest of Gini-split CART trees. Class 1 is the complex class
throughout; scores are P(complex)-like values in [0, 1]. Training is
bit-reproducible given (data, hyper, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS = 1e-12


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self.mean):
            raise ValueError(
                f"dimension mismatch: standardizer has {len(self.mean)} features, "
                f"input has {x.shape[-1]}"
            )
        return (x - self.mean) / self.std

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


def fit_standardizer(X: np.ndarray) -> Standardizer:
    """Per-feature mean/std (population); zero-variance features get std 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a non-empty 2-D matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Standardizer(mean=mean, std=std)


# ---------------------------------------------------------------------------
# hyperparameters


@dataclass(frozen=True)
class GateHyper:
    """Gate learner settings. Defaults are deliberately small and fixed so
    every training run is reproducible in seconds on a desk machine."""

    kind: str = "lr"  # lr | svm | rf
    l2_lambda: float = 1e-4
    learning_rate: float = 0.1
    epochs: int | None = None  # None resolves to 500 (lr) or 20 (svm)
    num_trees: int = 100
    max_depth: int | None = 12
    min_leaf: int = 2
    features_per_split: int | None = None  # None resolves to floor(sqrt(d))
    bootstrap: bool = True

    def validate(self) -> None:
        if self.kind not in ("lr", "svm", "rf"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.l2_lambda <= 0 or self.learning_rate <= 0:
            raise ValueError("l2_lambda and learning_rate must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.num_trees < 1 or self.min_leaf < 1:
            raise ValueError("num_trees and min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 when set")

    @property
    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return 500 if self.kind == "lr" else 20


# ---------------------------------------------------------------------------
# linear models


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    kind: str  # logistic | svm


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def logistic_loss(X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                  bias: float, l2_lambda: float) -> float:
    """Mean cross-entropy plus (lambda/2)*||w||^2; the bias is unregularized."""
    p = _sigmoid(X @ weights + bias)
    ce = -np.mean(y * np.log(np.maximum(p, EPS)) + (1 - y) * np.log(np.maximum(1 - p, EPS)))
    return float(ce + 0.5 * l2_lambda * np.dot(weights, weights))


def logistic_gradient(X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                      bias: float, l2_lambda: float) -> tuple[np.ndarray, float]:
    n = len(y)
    p = _sigmoid(X @ weights + bias)
    grad_w = X.T @ (p - y) / n + l2_lambda * weights
    grad_b = float(np.mean(p - y))
    return grad_w, grad_b


def _check_binary(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    classes = np.unique(y)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise ValueError("labels must be 0/1")
    if len(classes) < 2:
        raise ValueError("training data contains a single class")
    return y


def train_logistic(X: np.ndarray, y: np.ndarray, hyper: GateHyper,
                   seed: int = 0, history: list | None = None) -> LinearModel:
    """Full-batch gradient descent from zero initialization.

    Deterministic regardless of seed (kept for interface symmetry). When
    `history` is given, the regularized loss is appended once per epoch.
    """
    hyper.validate()
    X = np.asarray(X, dtype=np.float64)
    y = _check_binary(y)
    w = np.zeros(X.shape[1])
    b = 0.0
    lr = hyper.learning_rate
    for _ in range(hyper.resolved_epochs):
        grad_w, grad_b = logistic_gradient(X, y, w, b, hyper.l2_lambda)
        w = w - lr * grad_w
        b = b - lr * grad_b
        if history is not None:
            history.append(logistic_loss(X, y, w, b, hyper.l2_lambda))
    return LinearModel(weights=w, bias=b, kind="logistic")


def train_linear_svm(X: np.ndarray, y: np.ndarray, hyper: GateHyper,
                     seed: int = 0) -> LinearModel:
    """Hinge-loss subgradient descent with step 1/(lambda*t).

    Visits samples in a seeded shuffle per epoch; when a sample's margin is
    at least 1 only the L2 shrinkage applies.
    """
    hyper.validate()
    X = np.asarray(X, dtype=np.float64)
    y = _check_binary(y)
    ypm = 2.0 * y - 1.0
    n, d = X.shape
    rng = np.random.default_rng(seed)
    lam = hyper.l2_lambda
    w = np.zeros(d)
    b = 0.0
    t = 0
    for _ in range(hyper.resolved_epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = ypm[i] * (X[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * ypm[i] * X[i]
                b += eta * ypm[i]
    return LinearModel(weights=w, bias=b, kind="svm")


# ---------------------------------------------------------------------------
# random forest


@dataclass
class DecisionTree:
    """Flat-array binary CART tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # complex-class fraction of the node's training samples

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                return self.value[idx]
            cols = np.where(active, feat, 0)
            go_left = X[np.arange(len(X)), cols] <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(active, nxt, idx)


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    num_features: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.num_features:
            raise ValueError(
                f"dimension mismatch: forest expects {self.num_features} features, "
                f"input has {X.shape[1]}"
            )
        scores = np.zeros(len(X))
        for tree in self.trees:
            scores += tree.predict(X)
        return scores / len(self.trees)


def _best_split(values: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best Gini split on one feature, or None. O(n log n) prefix scan."""
    n = len(y)
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sy = y[order]
    cum1 = np.cumsum(sy)
    total1 = cum1[-1]
    splits = np.arange(min_leaf, n - min_leaf + 1)  # left sizes
    if len(splits) == 0:
        return None
    valid = sv[splits - 1] < sv[np.minimum(splits, n - 1)]
    valid &= splits < n  # left must leave a non-empty right side
    splits = splits[valid]
    if len(splits) == 0:
        return None
    nl = splits.astype(np.float64)
    nr = n - nl
    l1 = cum1[splits - 1]
    r1 = total1 - l1
    gini_l = 1.0 - (l1 / nl) ** 2 - ((nl - l1) / nl) ** 2
    gini_r = 1.0 - (r1 / nr) ** 2 - ((nr - r1) / nr) ** 2
    weighted = (nl * gini_l + nr * gini_r) / n
    best = int(np.argmin(weighted))
    pos = splits[best]
    threshold = (sv[pos - 1] + sv[pos]) / 2.0
    return float(weighted[best]), threshold


def _grow_tree(X: np.ndarray, y: np.ndarray, hyper: GateHyper,
               rng: np.random.Generator) -> DecisionTree:
    d = X.shape[1]
    m = hyper.features_per_split or max(1, int(np.sqrt(d)))
    m = min(m, d)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def build(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        frac = float(y[idx].mean())
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(frac)

        if frac in (0.0, 1.0) or len(idx) < 2 * hyper.min_leaf:
            return node
        if hyper.max_depth is not None and depth >= hyper.max_depth:
            return node

        cand = rng.choice(d, size=m, replace=False)
        best = None  # (weighted gini, feature, threshold)
        for f in cand:
            found = _best_split(X[idx, f], y[idx], hyper.min_leaf)
            if found is None:
                continue
            score, thr = found
            if best is None or score < best[0]:
                best = (score, int(f), thr)
        # Zero-improvement splits are allowed (children are strictly smaller,
        # so recursion terminates); only a node with no valid split is a leaf.
        if best is None:
            return node
        _, f, thr = best
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
    )


def train_random_forest(X: np.ndarray, y: np.ndarray, hyper: GateHyper,
                        seed: int = 0) -> ForestModel:
    """Bagged Gini CART trees; per-tree RNG derives from (seed, tree index)."""
    hyper.validate()
    X = np.asarray(X, dtype=np.float64)
    y = _check_binary(y)
    n = len(y)
    trees = []
    for t in range(hyper.num_trees):
        rng = np.random.default_rng((seed, t))
        if hyper.bootstrap:
            sample = rng.integers(0, n, size=n)
        else:
            sample = np.arange(n)
        trees.append(_grow_tree(X[sample], y[sample], hyper, rng))
    return ForestModel(trees=trees, num_features=X.shape[1])


# ---------------------------------------------------------------------------
# scoring and persistence


@dataclass
class GateModel:
    """A trained gate: learner plus its standardizer and provenance."""

    kind: str
    scaler: Standardizer
    linear: LinearModel | None = None
    forest: ForestModel | None = None
    hyper: GateHyper = field(default_factory=GateHyper)
    stage: str | None = None  # pre | post, informational
    metrics: dict = field(default_factory=dict)

    @property
    def model(self):
        return self.forest if self.kind == "rf" else self.linear


def predict_score(model, scaler: Standardizer, x: np.ndarray) -> float:
    """Score one input in [0, 1]; higher means more likely complex."""
    return float(predict_scores(model, scaler, np.asarray(x, dtype=np.float64)[None, :])[0])


def predict_scores(model, scaler: Standardizer, X: np.ndarray) -> np.ndarray:
    Xs = scaler.transform(X)
    if isinstance(model, LinearModel):
        if Xs.shape[1] != len(model.weights):
            raise ValueError(
                f"dimension mismatch: model has {len(model.weights)} weights, "
                f"input has {Xs.shape[1]}"
            )
        return _sigmoid(Xs @ model.weights + model.bias)
    if isinstance(model, ForestModel):
        return model.predict(Xs)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def gate_predict_scores(gate: GateModel, X: np.ndarray) -> np.ndarray:
    return predict_scores(gate.model, gate.scaler, X)


def _tree_to_dict(tree: DecisionTree) -> dict:
    nodes = []
    for i in range(len(tree.feature)):
        leaf = tree.feature[i] < 0
        nodes.append({
            "feature": None if leaf else int(tree.feature[i]),
            "threshold": None if leaf else float(tree.threshold[i]),
            "left": int(tree.left[i]),
            "right": int(tree.right[i]),
            "fraction": float(tree.value[i]),
        })
    return {"nodes": nodes}


def _tree_from_dict(obj: dict) -> DecisionTree:
    nodes = obj["nodes"]
    feature = np.array([-1 if n["feature"] is None else n["feature"] for n in nodes], dtype=np.int64)
    threshold = np.array(
        [np.nan if n["threshold"] is None else n["threshold"] for n in nodes], dtype=np.float64
    )
    return DecisionTree(
        feature=feature,
        threshold=threshold,
        left=np.array([n["left"] for n in nodes], dtype=np.int64),
        right=np.array([n["right"] for n in nodes], dtype=np.int64),
        value=np.array([n["fraction"] for n in nodes], dtype=np.float64),
    )


def gate_to_dict(gate: GateModel) -> dict:
    doc = {
        "kind": gate.kind,
        "stage": gate.stage,
        "hyper": {
            "kind": gate.hyper.kind,
            "l2_lambda": gate.hyper.l2_lambda,
            "learning_rate": gate.hyper.learning_rate,
            "epochs": gate.hyper.resolved_epochs,
            "num_trees": gate.hyper.num_trees,
            "max_depth": gate.hyper.max_depth,
            "min_leaf": gate.hyper.min_leaf,
            "features_per_split": gate.hyper.features_per_split,
            "bootstrap": gate.hyper.bootstrap,
        },
        "standardizer": {
            "mean": [float(v) for v in gate.scaler.mean],
            "std": [float(v) for v in gate.scaler.std],
        },
        "metrics": gate.metrics,
    }
    if gate.kind == "rf":
        doc["forest"] = {"trees": [_tree_to_dict(t) for t in gate.forest.trees]}
    else:
        doc["linear"] = {
            "weights": [float(w) for w in gate.linear.weights],
            "bias": float(gate.linear.bias),
            "kind": gate.linear.kind,
        }
    return doc


def gate_from_dict(doc: dict) -> GateModel:
    hyper = GateHyper(
        kind=doc["hyper"]["kind"],
        l2_lambda=doc["hyper"]["l2_lambda"],
        learning_rate=doc["hyper"]["learning_rate"],
        epochs=doc["hyper"]["epochs"],
        num_trees=doc["hyper"]["num_trees"],
        max_depth=doc["hyper"]["max_depth"],
        min_leaf=doc["hyper"]["min_leaf"],
        features_per_split=doc["hyper"]["features_per_split"],
        bootstrap=doc["hyper"]["bootstrap"],
    )
    scaler = Standardizer(
        mean=np.asarray(doc["standardizer"]["mean"], dtype=np.float64),
        std=np.asarray(doc["standardizer"]["std"], dtype=np.float64),
    )
    linear = forest = None
    if doc["kind"] == "rf":
        forest = ForestModel(
            trees=[_tree_from_dict(t) for t in doc["forest"]["trees"]],
            num_features=len(scaler.mean),
        )
    else:
        linear = LinearModel(
            weights=np.asarray(doc["linear"]["weights"], dtype=np.float64),
            bias=float(doc["linear"]["bias"]),
            kind=doc["linear"]["kind"],
        )
    return GateModel(kind=doc["kind"], scaler=scaler, linear=linear, forest=forest,
                     hyper=hyper, stage=doc.get("stage"), metrics=doc.get("metrics", {}))


def save_gate_model(gate: GateModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(gate_to_dict(gate), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_gate_model(path: str | Path) -> GateModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"gate model file not found: {path}")
    return gate_from_dict(json.loads(path.read_text(encoding="utf-8")))
