import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from oracles import central_gradient, relative_error
from mvfusion.errors import DegenerateError, DimensionError, LabelError
from mvfusion.svm import (
    SvmConfig,
    SvmModel,
    augment,
    grad_wrt_input,
    grad_wrt_weights,
    objective,
    predict,
    train_binary,
    train_multiclass,
)

L1 = SvmConfig(loss="hinge_l1", weight_decay=0.0)
L2 = SvmConfig(loss="hinge_l2", weight_decay=0.0)


def loop_objective(w, data, t, c, squared):
    total = 0.5 * sum(v * v for v in w)
    for n in range(data.shape[1]):
        score = sum(w[i] * data[i, n] for i in range(len(w)))
        slack = max(1.0 - score * t[n], 0.0)
        total += c * (slack**2 if squared else slack)
    return total


def blobs(rng, n_per_class, shift=1.0):
    x = np.hstack([
        rng.standard_normal((2, n_per_class)) + shift,
        rng.standard_normal((2, n_per_class)) - shift,
    ])
    t = np.concatenate([np.ones(n_per_class), -np.ones(n_per_class)])
    return x, t


class TestObjective:
    @pytest.mark.parametrize("cfg", [L1, L2])
    def test_zero_weights(self, cfg, rng):
        assert objective(np.zeros(3), rng.standard_normal((3, 4)), [1, -1, 1, 1], cfg) == 4.0

    @pytest.mark.parametrize("cfg", [L1, L2])
    def test_separable_pair(self, cfg):
        assert objective([10.0], [[1.0, -1.0]], [1, -1], cfg) == 50.0

    @pytest.mark.parametrize("cfg,squared", [(L1, False), (L2, True)])
    def test_matches_loop(self, cfg, squared, rng):
        w, data = rng.standard_normal(4), rng.standard_normal((4, 9))
        t = rng.choice([-1.0, 1.0], 9)
        cfg2 = SvmConfig(loss=cfg.loss, c_penalty=2.5)
        assert objective(w, data, t, cfg2) == pytest.approx(loop_objective(w, data, t, 2.5, squared), rel=1e-12)

    def test_errors(self, rng):
        with pytest.raises(DimensionError):
            objective(np.zeros(2), rng.standard_normal((3, 4)), np.ones(4), L2)
        with pytest.raises(LabelError):
            objective(np.zeros(3), rng.standard_normal((3, 2)), [1, 0], L2)


class TestGradients:
    @pytest.mark.parametrize("cfg", [L1, L2])
    def test_satisfied_margin(self, cfg):
        np.testing.assert_array_equal(grad_wrt_input([2.0, 0.0], [1.0, 5.0], 1, cfg), 0.0)

    @pytest.mark.parametrize("loss", ["hinge_l1", "hinge_l2"])
    def test_zero_penalty(self, loss):
        cfg = SvmConfig(loss=loss, c_penalty=0.0)
        np.testing.assert_array_equal(grad_wrt_input([1.0, -2.0], [0.1, 0.1], -1, cfg), 0.0)

    @pytest.mark.parametrize("loss", ["hinge_l1", "hinge_l2"])
    def test_input_gradient_finite_differences(self, loss, rng):
        cfg = SvmConfig(loss=loss, c_penalty=1.7)
        w = rng.standard_normal(5)
        m = 0.05 * rng.standard_normal(5)  # margin well below 1
        for t in (1.0, -1.0):
            f = lambda mm: objective(w, mm[:, None], [t], cfg)  # noqa: E731
            assert relative_error(grad_wrt_input(w, m, t, cfg), central_gradient(f, m)) < 1e-5

    def test_weight_gradient_at_zero(self, rng):
        data, t = rng.standard_normal((3, 6)), rng.choice([-1.0, 1.0], 6)
        cfg = SvmConfig(c_penalty=0.7)
        np.testing.assert_allclose(grad_wrt_weights(np.zeros(3), data, t, cfg), -2 * 0.7 * data @ t)

    def test_weight_gradient_regularizer_only(self):
        w = np.array([3.0, 0.0])
        data = np.array([[1.0, -1.0], [0.2, 0.3]])
        np.testing.assert_array_equal(grad_wrt_weights(w, data, [1, -1], L2), w)

    @pytest.mark.parametrize("loss", ["hinge_l1", "hinge_l2"])
    def test_weight_gradient_finite_differences(self, loss, rng):
        cfg = SvmConfig(loss=loss, c_penalty=0.9, weight_decay=5e-4)
        data, t = rng.standard_normal((4, 12)), rng.choice([-1.0, 1.0], 12)
        w = 0.3 * rng.standard_normal(4)
        f = lambda ww: objective(ww, data, t, cfg) + 0.5 * cfg.weight_decay * ww @ ww  # noqa: E731
        assert relative_error(grad_wrt_weights(w, data, t, cfg), central_gradient(f, w)) < 1e-5

    @pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6])
    def test_behaviour_at_margin(self, eps):
        w = np.array([0.6, 0.8])  # unit norm
        m_inside = w * (1 - eps)  # margin 1 - eps
        m_outside = w * (1 + eps)
        c = 2.0
        g2 = grad_wrt_input(w, m_inside, 1, SvmConfig(c_penalty=c))
        g1 = grad_wrt_input(w, m_inside, 1, SvmConfig(loss="hinge_l1", c_penalty=c))
        assert np.linalg.norm(g2) == pytest.approx(2 * c * eps, rel=1e-6)
        assert np.linalg.norm(g1) == pytest.approx(c, rel=1e-12)
        for loss in ("hinge_l1", "hinge_l2"):
            np.testing.assert_array_equal(grad_wrt_input(w, m_outside, 1, SvmConfig(loss=loss)), 0)


class TestTrainBinary:
    def test_separable_1d(self):
        x, t = np.array([[-2.0, 2.0]]), np.array([-1.0, 1.0])
        fit = train_binary(x, t, SvmConfig())
        scores = fit.weights @ augment(x)
        assert np.all(np.sign(scores) == t)
        assert objective(fit.weights, augment(x), t, SvmConfig()) < 2.0

    def test_duplicated_data_with_half_penalty(self, rng):
        x, t = blobs(rng, 30)
        base = SvmConfig(c_penalty=1.0, batch_size=10_000, max_epochs=40, weight_decay=0.0)
        half = SvmConfig(c_penalty=0.5, batch_size=10_000, max_epochs=40, weight_decay=0.0)
        a = train_binary(x, t, base)
        b = train_binary(np.hstack([x, x]), np.concatenate([t, t]), half)
        assert len(a.history) == len(b.history)
        for ra, rb in zip(a.history, b.history):
            assert abs(ra.objective - rb.objective) <= 1e-6 * max(1.0, abs(ra.objective))

    def test_gaussian_blobs_held_out(self):
        rng = np.random.default_rng(3)
        bayes = norm.cdf(np.sqrt(2))
        assert bayes == pytest.approx(0.921, abs=1e-3)
        x, t = blobs(rng, 2000)
        xt, tt = blobs(rng, 2000)
        fit = train_binary(x, t, SvmConfig(seed=1))
        acc = np.mean(np.sign(fit.weights @ augment(xt)) == tt)
        assert acc >= 0.90

    def test_single_class(self, rng):
        with pytest.raises(DegenerateError):
            train_binary(rng.standard_normal((2, 5)), np.ones(5), SvmConfig())

    def test_history_and_finiteness(self, rng):
        x, t = blobs(rng, 100)
        fit = train_binary(x, t, SvmConfig(max_epochs=30))
        assert np.all(np.isfinite(fit.weights))
        best = [r.best for r in fit.history]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
        assert objective(fit.weights, augment(x), t, SvmConfig()) == pytest.approx(best[-1])

    def test_lr_decays_bounded(self, rng):
        x, t = blobs(rng, 50)
        cfg = SvmConfig(max_epochs=200, patience_epochs=2, max_lr_decays=2)
        lrs = sorted({r.lr for r in train_binary(x, t, cfg).history}, reverse=True)
        assert len(lrs) <= 3
        for a, b in zip(lrs, lrs[1:]):
            assert b == pytest.approx(a * 0.1)

    def test_full_batch_descent(self, rng):
        x, t = blobs(rng, 40)
        cfg = SvmConfig(batch_size=10_000, momentum=0.0, weight_decay=0.0, lr_initial=0.05,
                        max_epochs=60, patience_epochs=100)
        obj = [r.objective for r in train_binary(x, t, cfg).history]
        assert all(b <= a + 1e-12 for a, b in zip(obj, obj[1:]))

    def test_deterministic(self, rng):
        x, t = blobs(rng, 64)
        a = train_binary(x, t, SvmConfig(seed=9, max_epochs=10))
        b = train_binary(x, t, SvmConfig(seed=9, max_epochs=10))
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_validation_monitor(self, rng):
        x, t = blobs(rng, 100)
        xv, tv = blobs(rng, 50)
        fit = train_binary(x, t, SvmConfig(max_epochs=50, patience_epochs=3), validation=(xv, tv))
        assert 1 <= len(fit.history) <= 50


class TestMulticlass:
    def test_well_separated_blobs(self):
        rng = np.random.default_rng(4)
        means = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
        x = np.hstack([m[:, None] + rng.standard_normal((2, 100)) for m in means])
        y = np.repeat(np.arange(3), 100)
        model = train_multiclass(x, y, SvmConfig())
        assert np.mean(predict(model, x)[0] == y) >= 0.99

    def test_two_classes_match_binary_heads(self, rng):
        x, t = blobs(rng, 50, shift=4.0)
        y = (t < 0).astype(int)
        model = train_multiclass(x, y, SvmConfig())
        labels, scores = predict(model, x)
        np.testing.assert_array_equal(labels, y)
        # both heads separate the data on their own
        np.testing.assert_array_equal(scores[0] > 0, y == 0)
        np.testing.assert_array_equal(scores[1] > 0, y == 1)

    def test_missing_class(self, rng):
        with pytest.raises(DegenerateError):
            train_multiclass(rng.standard_normal((2, 6)), [0, 1, 0, 1, 0, 1], SvmConfig(), class_count=3)

    def test_serialization(self, rng, tmp_path):
        x, t = blobs(rng, 20)
        model = train_multiclass(x, (t > 0).astype(int), SvmConfig(max_epochs=5))
        model.save(tmp_path / "m.svmm")
        assert (tmp_path / "m.svmm").read_bytes()[:6] == b"SVMM1\x00"
        back = SvmModel.load(tmp_path / "m.svmm")
        assert back.weights.tobytes() == model.weights.tobytes()
        assert back.loss == model.loss
        hist = model.history_csv().splitlines()
        assert hist[0] == "class,epoch,objective,lr"
        assert len(hist) == 1 + sum(len(h) for h in model.training_history)


class TestPredict:
    def model(self, rows):
        rows = np.asarray(rows, dtype=float)
        # zero feature weights, scores come from the bias column
        return SvmModel(np.hstack([np.zeros((rows.size, 1)), rows[:, None]]), "hinge_l2")

    def test_argmax(self):
        labels, scores = predict(self.model([3, 1, -2]), np.zeros((1, 1)))
        assert labels[0] == 0
        np.testing.assert_array_equal(scores[:, 0], [3, 1, -2])

    def test_tie_goes_to_smallest_index(self):
        assert predict(self.model([1, 1, 0]), np.zeros((1, 1)))[0][0] == 0
        assert predict(self.model([0, 2, 2]), np.zeros((1, 1)))[0][0] == 1

    def test_dimension_check(self):
        with pytest.raises(DimensionError):
            predict(self.model([1, 2]), np.zeros((3, 1)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        model = SvmModel(rng.standard_normal((4, 3)), "hinge_l2")
        data = rng.standard_normal((2, 20))
        scaled = SvmModel(model.weights * scale, "hinge_l2")
        np.testing.assert_array_equal(predict(model, data)[0], predict(scaled, data)[0])
