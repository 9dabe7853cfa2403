import numpy as np
import pytest

from crowdcdro.core import RobustLossSpec, get_transform
from crowdcdro.nets import (
    Optimizer,
    SoftmaxNet,
    load_checkpoint,
    nominal_batch_loss_grad,
    onehot,
    robust_batch_loss_grad,
    save_checkpoint,
)

from oracle_utils import finite_difference_grads


def spec(transform="clipped-log", epsilon=0.1):
    return RobustLossSpec(transform=get_transform(transform), p=1.0, kappa=1.0, epsilon=epsilon)


class TestPredict:
    def test_zero_weights_uniform(self):
        net = SoftmaxNet("linear", (3, 4), [np.zeros((3, 4)), np.zeros(4)])
        probs = net.predict_proba(np.ones((2, 3)))
        assert np.allclose(probs, 0.25)

    def test_huge_logits_stable(self):
        net = SoftmaxNet("linear", (1, 2), [np.array([[1000.0, 0.0]]), np.zeros(2)])
        probs = net.predict_proba([[1.0]])
        assert np.isfinite(probs).all()
        assert probs[0, 0] == pytest.approx(1.0)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        net = SoftmaxNet.init("mlp", 5, 3, hidden=7, rng=rng)
        probs = net.predict_proba(rng.standard_normal((40, 5)))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        net = SoftmaxNet.init("linear", 4, 2, rng=0)
        with pytest.raises(ValueError):
            net.predict_proba(np.ones((2, 3)))

    def test_deterministic(self):
        net = SoftmaxNet.init("mlp", 4, 3, rng=5)
        X = np.random.default_rng(1).standard_normal((10, 4))
        assert np.array_equal(net.predict_proba(X), net.predict_proba(X))


class TestGradients:
    @pytest.mark.parametrize("arch", ["linear", "mlp"])
    @pytest.mark.parametrize("transform", ["linear", "clipped-log"])
    def test_robust_gradient_matches_finite_differences(self, arch, transform):
        rng = np.random.default_rng(42)
        net = SoftmaxNet.init(arch, 5, 3, hidden=6, rng=rng, scale=0.4)
        X = rng.standard_normal((5, 5))
        refs = onehot(rng.integers(0, 3, 5), 3)
        s = spec(transform)
        for gamma in (0.0, 0.4, 3.0):
            _, grads = robust_batch_loss_grad(net, X, refs, s, gamma)

            def loss():
                return robust_batch_loss_grad(net, X, refs, s, gamma)[0]

            fd = finite_difference_grads(loss, net.params)
            for g, f in zip(grads, fd):
                denom = np.maximum(np.maximum(np.abs(g), np.abs(f)), 1e-8)
                assert (np.abs(g - f) / denom).max() < 1e-4

    def test_nominal_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(43)
        net = SoftmaxNet.init("mlp", 4, 3, hidden=5, rng=rng, scale=0.4)
        X = rng.standard_normal((6, 4))
        refs = rng.dirichlet(np.ones(3), size=6)
        t = get_transform("clipped-log")
        _, grads = nominal_batch_loss_grad(net, X, refs, t)

        def loss():
            return nominal_batch_loss_grad(net, X, refs, t)[0]

        fd = finite_difference_grads(loss, net.params)
        for g, f in zip(grads, fd):
            denom = np.maximum(np.maximum(np.abs(g), np.abs(f)), 1e-8)
            assert (np.abs(g - f) / denom).max() < 1e-4

    def test_large_gamma_equals_nominal(self):
        rng = np.random.default_rng(44)
        net = SoftmaxNet.init("linear", 4, 3, rng=rng)
        X = rng.standard_normal((8, 4))
        refs = onehot(rng.integers(0, 3, 8), 3)
        s = spec("clipped-log", epsilon=0.1)
        robust_loss, robust_grads = robust_batch_loss_grad(net, X, refs, s, 100.0)
        nominal_loss, nominal_grads = nominal_batch_loss_grad(net, X, refs, s.transform)
        assert robust_loss == pytest.approx(nominal_loss + 100.0 * 0.1)
        for a, b in zip(robust_grads, nominal_grads):
            assert np.allclose(a, b)

    def test_empty_batch(self):
        net = SoftmaxNet.init("linear", 4, 3, rng=0)
        loss, grads = robust_batch_loss_grad(
            net, np.zeros((0, 4)), np.zeros((0, 3)), spec(), 0.5
        )
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads)

    def test_negative_gamma_rejected(self):
        net = SoftmaxNet.init("linear", 4, 3, rng=0)
        with pytest.raises(ValueError):
            robust_batch_loss_grad(net, np.ones((1, 4)), onehot([0], 3), spec(), -1.0)

    def test_loss_decreases_over_steps(self):
        rng = np.random.default_rng(45)
        net = SoftmaxNet.init("mlp", 6, 3, hidden=8, rng=rng)
        X = rng.standard_normal((64, 6))
        refs = onehot(rng.integers(0, 3, 64), 3)
        s = spec("clipped-log", epsilon=0.1)
        opt = Optimizer("adam", lr=5e-3)
        start, _ = robust_batch_loss_grad(net, X, refs, s, 0.5)
        for _ in range(200):
            _, grads = robust_batch_loss_grad(net, X, refs, s, 0.5)
            opt.step(net.params, grads)
        end, _ = robust_batch_loss_grad(net, X, refs, s, 0.5)
        assert start - end >= 1e-4


class TestOptimizer:
    def test_sgd_analytic_step(self):
        # f(w) = w**2 from w=1 with lr 0.1: w -> 1 - 0.1 * 2 = 0.8
        params = [np.array([1.0])]
        Optimizer("sgd", lr=0.1).step(params, [np.array([2.0])])
        assert params[0][0] == pytest.approx(0.8)

    def test_zero_lr_identity(self):
        params = [np.array([1.0, -2.0])]
        Optimizer("adam", lr=0.0).step(params, [np.array([5.0, 5.0])])
        assert np.array_equal(params[0], [1.0, -2.0])

    def test_adam_step_magnitude_approaches_lr(self):
        params = [np.array([0.0])]
        opt = Optimizer("adam", lr=0.01)
        grad = [np.array([3.0])]
        prev = params[0].copy()
        for _ in range(2000):
            prev = params[0].copy()
            opt.step(params, grad)
        assert abs(params[0][0] - prev[0]) == pytest.approx(0.01, rel=1e-3)

    def test_momentum_accumulates(self):
        params = [np.array([0.0])]
        opt = Optimizer("momentum", lr=0.1, momentum=0.9)
        opt.step(params, [np.array([1.0])])
        first = params[0][0]
        opt.step(params, [np.array([1.0])])
        assert params[0][0] == pytest.approx(first - 0.1 * 1.9)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Optimizer("adagrad")


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = SoftmaxNet.init("mlp", 5, 4, hidden=6, rng=3)
        path = tmp_path / "model.npz"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        assert loaded.arch == "mlp"
        assert loaded.dims == (5, 6, 4)
        X = np.random.default_rng(0).standard_normal((7, 5))
        assert np.array_equal(net.predict_proba(X), loaded.predict_proba(X))
