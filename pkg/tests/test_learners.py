import json

import numpy as np
import pytest

from higate.learners import (
    GateHyper,
    GateModel,
    fit_standardizer,
    gate_to_dict,
    load_gate_model,
    logistic_gradient,
    logistic_loss,
    predict_score,
    predict_scores,
    save_gate_model,
    train_linear_svm,
    train_logistic,
    train_random_forest,
)


class TestStandardizer:
    def test_two_point_population_std(self):
        scaler = fit_standardizer(np.array([[1.0], [3.0]]))
        assert scaler.mean[0] == 2.0
        assert scaler.std[0] == 1.0
        assert scaler.transform(np.array([1.0]))[0] == -1.0

    def test_constant_column_passes_through_centered(self):
        X = np.array([[2.0, 1.0], [2.0, 3.0], [2.0, 5.0]])
        scaler = fit_standardizer(X)
        assert scaler.std[0] == 1.0
        out = scaler.transform(X)
        assert np.allclose(out[:, 0], 0.0)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 4)) * 3 + 1
        scaler = fit_standardizer(X)
        assert np.max(np.abs(scaler.inverse(scaler.transform(X)) - X)) <= 1e-9

    def test_fitted_moments(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((100, 3)) * np.array([2.0, 0.5, 7.0]) + 4
        out = fit_standardizer(X).transform(X)
        assert np.max(np.abs(out.mean(axis=0))) <= 1e-9
        assert np.max(np.abs(out.std(axis=0) - 1.0)) <= 1e-6

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_standardizer(np.empty((0, 3)))

    def test_dimension_mismatch(self):
        scaler = fit_standardizer(np.array([[1.0, 2.0]]))
        with pytest.raises(ValueError, match="dimension mismatch"):
            scaler.transform(np.array([1.0, 2.0, 3.0]))


class TestLogistic:
    def test_separable_1d(self):
        X = np.array([[-1.0], [1.0], [-1.0], [1.0]])
        y = np.array([0.0, 1.0, 0.0, 1.0])
        model = train_logistic(X, y, GateHyper(kind="lr"))
        assert model.weights[0] > 0
        preds = predict_scores(model, fit_standardizer(X), X) >= 0.5
        # standardizer here is identity-ish (mean 0, std 1)
        assert np.array_equal(preds, y.astype(bool))
        assert logistic_loss(X, y, model.weights, model.bias, 1e-4) < np.log(2)

    def test_label_flip_negates_weights(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((40, 3))
        y = (rng.random(40) < 0.5).astype(float)
        hyper = GateHyper(kind="lr", epochs=200)
        m1 = train_logistic(X, y, hyper)
        m2 = train_logistic(X, 1.0 - y, hyper)
        assert np.max(np.abs(m1.weights + m2.weights)) <= 1e-6
        assert abs(m1.bias + m2.bias) <= 1e-6

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((5, 3))
        y = np.array([0.0, 1.0, 1.0, 0.0, 1.0])
        w = rng.standard_normal(3) * 0.5
        b = 0.3
        lam = 1e-3
        grad_w, grad_b = logistic_gradient(X, y, w, b, lam)
        h = 1e-5
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            num = (logistic_loss(X, y, w + e, b, lam) - logistic_loss(X, y, w - e, b, lam)) / (2 * h)
            assert abs(num - grad_w[j]) <= 1e-5 * max(1.0, abs(grad_w[j]))
        num_b = (logistic_loss(X, y, w, b + h, lam) - logistic_loss(X, y, w, b - h, lam)) / (2 * h)
        assert abs(num_b - grad_b) <= 1e-5 * max(1.0, abs(grad_b))

    def test_loss_monotone_nonincreasing(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((60, 4))
        w_true = np.array([1.0, -2.0, 0.5, 0.0])
        y = (X @ w_true + 0.1 * rng.standard_normal(60) > 0).astype(float)
        history: list = []
        train_logistic(X, y, GateHyper(kind="lr", epochs=300), history=history)
        diffs = np.diff(history)
        assert np.all(diffs <= 1e-12)

    def test_single_class_rejected(self):
        X = np.zeros((4, 2))
        with pytest.raises(ValueError, match="single class"):
            train_logistic(X, np.ones(4), GateHyper(kind="lr"))

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((30, 3))
        y = (rng.random(30) < 0.5).astype(float)
        m1 = train_logistic(X, y, GateHyper(kind="lr"))
        m2 = train_logistic(X, y, GateHyper(kind="lr"))
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.bias == m2.bias


class TestLinearSvm:
    def test_separable_blobs(self):
        rng = np.random.default_rng(6)
        X_train = np.vstack([
            rng.standard_normal((50, 2)) * 0.3 + [-2.0, 0.0],
            rng.standard_normal((50, 2)) * 0.3 + [2.0, 0.0],
        ])
        y_train = np.repeat([0.0, 1.0], 50)
        X_test = np.vstack([
            rng.standard_normal((30, 2)) * 0.3 + [-2.0, 0.0],
            rng.standard_normal((30, 2)) * 0.3 + [2.0, 0.0],
        ])
        y_test = np.repeat([0.0, 1.0], 30)
        scaler = fit_standardizer(X_train)
        model = train_linear_svm(scaler.transform(X_train), y_train,
                                 GateHyper(kind="svm"), seed=0)
        preds = predict_scores(model, scaler, X_test) >= 0.5
        assert np.mean(preds == y_test.astype(bool)) == 1.0

    def test_flat_hinge_region_only_shrinks(self):
        # after one epoch on this data every margin exceeds 1, so the second
        # epoch's hinge subgradient is zero: w shrinks by prod(1 - 1/t) and
        # the bias stays put.
        X = np.array([[2.0], [-2.0]])
        y01 = np.array([1.0, 0.0])
        one = train_linear_svm(X, y01, GateHyper(kind="svm", epochs=1), seed=3)
        margins = (2 * y01 - 1) * (X @ one.weights + one.bias)
        assert np.all(margins >= 1.0)
        two = train_linear_svm(X, y01, GateHyper(kind="svm", epochs=2), seed=3)
        shrink = (1 - 1 / 3) * (1 - 1 / 4)  # t = 3, 4 during the second epoch
        assert np.allclose(two.weights, one.weights * shrink, rtol=0, atol=1e-12)
        assert two.bias == one.bias

    def test_same_seed_identical_bytes(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((40, 3))
        y = (rng.random(40) < 0.5).astype(float)
        m1 = train_linear_svm(X, y, GateHyper(kind="svm"), seed=9)
        m2 = train_linear_svm(X, y, GateHyper(kind="svm"), seed=9)
        assert m1.weights.tobytes() == m2.weights.tobytes()
        assert m1.bias == m2.bias

    def test_different_seed_differs(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((40, 3))
        y = (rng.random(40) < 0.5).astype(float)
        m1 = train_linear_svm(X, y, GateHyper(kind="svm"), seed=1)
        m2 = train_linear_svm(X, y, GateHyper(kind="svm"), seed=2)
        assert not np.array_equal(m1.weights, m2.weights)


class TestRandomForest:
    def test_single_tree_memorizes_consistent_data(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((50, 4))
        y = (rng.random(50) < 0.5).astype(float)
        hyper = GateHyper(kind="rf", num_trees=1, max_depth=None, min_leaf=1,
                          bootstrap=False, features_per_split=4)
        forest = train_random_forest(X, y, hyper, seed=0)
        assert np.array_equal(forest.predict(X) >= 0.5, y.astype(bool))
        assert np.mean((forest.predict(X) >= 0.5) == y.astype(bool)) == 1.0

    def test_constant_features_single_leaf_majority(self):
        X = np.ones((10, 3))
        y = np.array([1.0] * 7 + [0.0] * 3)
        hyper = GateHyper(kind="rf", num_trees=5, bootstrap=False)
        forest = train_random_forest(X, y, hyper, seed=0)
        for tree in forest.trees:
            assert len(tree.feature) == 1
            assert tree.feature[0] == -1
        assert forest.predict(X[:2])[0] == pytest.approx(0.7)

    def test_same_seed_identical(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((60, 5))
        y = (X[:, 0] > 0).astype(float)
        hyper = GateHyper(kind="rf", num_trees=10)
        f1 = train_random_forest(X, y, hyper, seed=3)
        f2 = train_random_forest(X, y, hyper, seed=3)
        for t1, t2 in zip(f1.trees, f2.trees):
            assert np.array_equal(t1.feature, t2.feature)
            assert t1.threshold.tobytes() == t2.threshold.tobytes()

    def test_forest_score_is_mean_of_tree_scores(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((80, 4))
        y = (X[:, 1] + 0.3 * rng.standard_normal(80) > 0).astype(float)
        forest = train_random_forest(X, y, GateHyper(kind="rf", num_trees=7), seed=1)
        probe = rng.standard_normal((12, 4))
        per_tree = np.stack([tree.predict(probe) for tree in forest.trees])
        assert np.max(np.abs(per_tree.mean(axis=0) - forest.predict(probe))) <= 1e-12

    def test_leaf_fractions_bounded(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((100, 3))
        y = (rng.random(100) < 0.4).astype(float)
        forest = train_random_forest(X, y, GateHyper(kind="rf", num_trees=20), seed=2)
        for tree in forest.trees:
            assert np.all(tree.value >= 0.0)
            assert np.all(tree.value <= 1.0)
            assert np.all(tree.feature < 3)


class TestPredictScore:
    def test_zero_linear_model_scores_half(self):
        from higate.learners import LinearModel, Standardizer

        model = LinearModel(weights=np.zeros(3), bias=0.0, kind="logistic")
        scaler = Standardizer(mean=np.zeros(3), std=np.ones(3))
        assert predict_score(model, scaler, np.array([4.0, -1.0, 0.2])) == 0.5

    def test_two_tree_mean(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((20, 2))
        y = np.array([0.0, 1.0] * 10)
        # one-leaf trees with fractions 1 and 0 via degenerate training sets
        from higate.learners import DecisionTree, ForestModel, Standardizer

        leaf = lambda frac: DecisionTree(
            feature=np.array([-1]), threshold=np.array([np.nan]),
            left=np.array([-1]), right=np.array([-1]), value=np.array([frac]),
        )
        forest = ForestModel(trees=[leaf(1.0), leaf(0.0)], num_features=2)
        scaler = Standardizer(mean=np.zeros(2), std=np.ones(2))
        assert predict_score(forest, scaler, X[0]) == 0.5

    def test_sigmoid_saturation(self):
        from higate.learners import LinearModel, Standardizer

        model = LinearModel(weights=np.array([1.0]), bias=0.0, kind="logistic")
        scaler = Standardizer(mean=np.zeros(1), std=np.ones(1))
        assert predict_score(model, scaler, np.array([100.0])) >= 1.0 - 1e-9

    def test_scores_in_unit_interval(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((50, 3))
        y = (rng.random(50) < 0.5).astype(float)
        scaler = fit_standardizer(X)
        Xs = scaler.transform(X)
        probe = rng.standard_normal((200, 3)) * 10
        for model in (
            train_logistic(Xs, y, GateHyper(kind="lr")),
            train_linear_svm(Xs, y, GateHyper(kind="svm"), seed=0),
            train_random_forest(Xs, y, GateHyper(kind="rf", num_trees=10), seed=0),
        ):
            scores = predict_scores(model, scaler, probe)
            assert np.all(scores >= 0.0)
            assert np.all(scores <= 1.0)

    def test_dimension_mismatch(self):
        from higate.learners import LinearModel, Standardizer

        model = LinearModel(weights=np.ones(2), bias=0.0, kind="svm")
        scaler = Standardizer(mean=np.zeros(3), std=np.ones(3))
        with pytest.raises(ValueError, match="dimension mismatch"):
            predict_score(model, scaler, np.array([1.0, 2.0, 3.0]))


class TestSerialization:
    def _gate(self, kind, seed=0):
        rng = np.random.default_rng(20)
        X = rng.standard_normal((60, 4))
        y = (X[:, 0] > 0).astype(float)
        scaler = fit_standardizer(X)
        Xs = scaler.transform(X)
        hyper = GateHyper(kind=kind, num_trees=5)
        trainer = {"lr": train_logistic, "svm": train_linear_svm,
                   "rf": train_random_forest}[kind]
        model = trainer(Xs, y, hyper, seed)
        return GateModel(
            kind=kind, scaler=scaler,
            linear=None if kind == "rf" else model,
            forest=model if kind == "rf" else None,
            hyper=hyper, stage="post",
        ), X

    @pytest.mark.parametrize("kind", ["lr", "svm", "rf"])
    def test_json_round_trip_preserves_scores(self, kind, tmp_path):
        gate, X = self._gate(kind)
        path = tmp_path / "gate.json"
        save_gate_model(gate, path)
        loaded = load_gate_model(path)
        from higate.learners import gate_predict_scores

        assert np.array_equal(gate_predict_scores(gate, X), gate_predict_scores(loaded, X))
        assert loaded.kind == kind
        assert loaded.stage == "post"

    def test_document_is_valid_json_single_doc(self, tmp_path):
        gate, _ = self._gate("rf")
        path = tmp_path / "gate.json"
        save_gate_model(gate, path)
        doc = json.loads(path.read_text())
        assert doc["kind"] == "rf"
        assert "standardizer" in doc
        assert "trees" in doc["forest"]
        node = doc["forest"]["trees"][0]["nodes"][0]
        assert set(node) == {"feature", "threshold", "left", "right", "fraction"}

    def test_training_bit_reproducible_via_serialization(self):
        for kind in ("lr", "svm", "rf"):
            g1, _ = self._gate(kind, seed=7)
            g2, _ = self._gate(kind, seed=7)
            assert json.dumps(gate_to_dict(g1), sort_keys=True) == \
                json.dumps(gate_to_dict(g2), sort_keys=True)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_gate_model(tmp_path / "missing.json")
