import itertools

import numpy as np
import pytest

from vpr_uncertainty.errors import EmptyTrainingSet, LengthMismatch, SingleClassTraining
from vpr_uncertainty.fusion import (ACCEPT, REJECT, SVMConfig, SVMModel, classification_accuracy,
                                    fit_scaler, load_model, save_model, svm_decide,
                                    svm_decide_batch, svm_objective, train_linear_svm)


def grid_minimum(x, y, lam, lo=-6.0, hi=6.0, n=21):
    grid = np.linspace(lo, hi, n)
    return min(svm_objective(np.array([w1, w2]), b, x, y, lam)
               for w1, w2, b in itertools.product(grid, grid, grid))


def clusters(rng, n=100, spread=0.05):
    pos = rng.normal([0.1, 0.1], spread, (n, 2))
    neg = rng.normal([0.9, 0.9], spread, (n, 2))
    return np.vstack([pos, neg]), np.r_[np.ones(n), -np.ones(n)]


class TestScaler:
    def test_basic(self):
        sc = fit_scaler([2.0, 4.0])
        np.testing.assert_array_equal(sc.transform([[2.0], [4.0], [3.0]]).ravel(), [0, 1, 0.5])

    def test_constant_feature(self):
        sc = fit_scaler([[5.0], [5.0], [5.0]])
        np.testing.assert_array_equal(sc.transform([[5.0], [7.0]]).ravel(), [0, 0])

    def test_no_clipping(self):
        assert fit_scaler([2.0, 4.0]).transform([[6.0]])[0, 0] == 2.0

    def test_empty(self):
        with pytest.raises(EmptyTrainingSet):
            fit_scaler([])


class TestSVM:
    def test_separable_clusters(self, rng):
        x, y = clusters(rng)
        # hand-picked separating line x1 + x2 = 1 separates every point
        assert np.all(np.sign(1.0 - x.sum(axis=1)) == y)
        model = train_linear_svm(x, y)
        decisions = svm_decide_batch(model, x)
        assert classification_accuracy(decisions, y) == 1.0

    def test_deterministic(self, rng):
        x, y = clusters(rng, spread=0.3)
        a = train_linear_svm(x, y, SVMConfig(seed=5))
        b = train_linear_svm(x, y, SVMConfig(seed=5))
        assert a.weights.tobytes() == b.weights.tobytes() and a.bias == b.bias

    def test_uninformative_feature_gets_smaller_weight(self, rng):
        f1 = rng.uniform(0, 1, 300)
        y = np.where(f1 + rng.normal(0, 0.1, 300) < 0.5, 1.0, -1.0)
        x = np.column_stack([f1, np.full(300, 0.5)])
        cfg = SVMConfig(l1_strength=0.0)
        model = train_linear_svm(x, y, cfg)
        assert abs(model.weights[1]) <= abs(model.weights[0])
        # oracle: best grid point also puts more weight on feature 1
        grid = np.linspace(-6, 6, 21)
        best = min(itertools.product(grid, grid, grid),
                   key=lambda p: svm_objective(np.array(p[:2]), p[2], x, y, 0.0))
        assert abs(best[1]) <= abs(best[0])

    @pytest.mark.parametrize("spread,lam", [(0.15, 1e-4), (0.3, 1e-4), (0.3, 1e-2), (0.5, 0.0)])
    def test_objective_close_to_grid_minimum(self, rng, spread, lam):
        x, y = clusters(rng, n=80, spread=spread)
        x = np.clip(x, 0, 1)
        model = train_linear_svm(x, y, SVMConfig(l1_strength=lam))
        grid_min = grid_minimum(x, y, lam)
        assert model.objective <= 1.05 * grid_min + 1e-12
        assert model.objective == pytest.approx(
            svm_objective(model.weights, model.bias, x, y, lam))

    def test_single_class(self):
        with pytest.raises(SingleClassTraining):
            train_linear_svm([[0.1, 0.2], [0.3, 0.4]], [1, 1])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            train_linear_svm([[0.1, 0.2]], [1, -1])


class TestDecide:
    model = SVMModel(np.array([-1.0, -1.0]), 1.0)

    def test_sign(self):
        assert svm_decide(self.model, [0.0, 0.0]) == ACCEPT
        assert svm_decide(self.model, [1.0, 1.0]) == REJECT

    def test_tie_rejects(self):
        assert svm_decide(self.model, [0.5, 0.5]) == REJECT


class TestAccuracy:
    def test_all_correct(self):
        assert classification_accuracy([ACCEPT, REJECT], [True, False]) == 1.0

    def test_half(self):
        assert classification_accuracy([ACCEPT, ACCEPT], [1, -1]) == 0.5

    def test_empty(self):
        with pytest.raises(LengthMismatch):
            classification_accuracy([], [])


def test_model_round_trip(tmp_path, rng):
    x, y = clusters(rng, spread=0.3)
    raw = x * 40 + 3
    scaler = fit_scaler(raw)
    model = train_linear_svm(scaler.transform(raw), y)
    save_model(tmp_path / "m.json", model, scaler, ["sue", "gv"])
    model2, scaler2, names = load_model(tmp_path / "m.json")
    assert names == ["sue", "gv"]
    assert svm_decide_batch(model2, scaler2.transform(raw)) == svm_decide_batch(
        model, scaler.transform(raw))


def test_common_rescaling_leaves_decisions(rng):
    x, y = clusters(rng, spread=0.3)
    decisions = []
    for c in (1.0, 250.0):
        sc = fit_scaler(x * c)
        model = train_linear_svm(sc.transform(x * c), y)
        decisions.append(svm_decide_batch(model, sc.transform(x * c)))
    assert decisions[0] == decisions[1]
