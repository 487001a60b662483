import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import finite_difference_grads, max_rel_error, naive_bce, naive_forward, random_config
from widthlab.data import Dataset
from widthlab.net import (
    InitDist,
    LossKind,
    NetState,
    dloss,
    forward,
    forward_batch,
    from_weights,
    gradients,
    gradients_xy,
    init_network,
    loss,
)


class TestInit:
    def test_deterministic(self):
        a = init_network(1, 8, 3, 0.1, 0.5, 42)
        b = init_network(1, 8, 3, 0.1, 0.5, 42)
        for x, y in zip(a.weights.arrays(), b.weights.arrays()):
            np.testing.assert_array_equal(x, y)

    @pytest.mark.parametrize("dist", list(InitDist))
    def test_unit_variance(self, dist):
        net = init_network(0, 4096, 2, 0.1, 1.0, 3, dist)
        assert 0.9 <= np.var(net.hat_a) <= 1.1

    def test_uniform_support(self):
        net = init_network(0, 1000, 2, 0.1, 1.0, 3, InitDist.SYMMETRIC_UNIFORM)
        assert np.max(np.abs(net.hat_w)) <= np.sqrt(3.0)

    def test_shallow_has_no_hidden(self):
        assert init_network(0, 4, 2, 0.1, 1.0, 0).hat_v == ()

    def test_snapshot_frozen(self):
        net = init_network(1, 4, 2, 0.1, 1.0, 0)
        with pytest.raises(ValueError):
            net.init.a[0] = 3.0
        net.weights.a[0] += 1.0
        assert net.increments().a[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("kw", [dict(d=0), dict(sigma=0.0), dict(alpha=1.0), dict(alpha=0.0)])
    def test_rejects(self, kw):
        args = dict(H=0, d=4, d0=2, alpha=0.1, sigma=1.0, seed=0) | kw
        with pytest.raises(ValueError):
            init_network(**args)

    def test_json_checkpoint(self, tmp_path):
        net = init_network(2, 3, 2, 0.2, 0.7, 1)
        net.weights.w[0, 0] += 0.5
        net.save(tmp_path / "net.json")
        back = NetState.load(tmp_path / "net.json")
        for x, y in zip(back.weights.arrays() + back.init.arrays(), net.weights.arrays() + net.init.arrays()):
            np.testing.assert_array_equal(x, y)
        assert (back.sigma, back.alpha) == (net.sigma, net.alpha)


class TestForward:
    def test_single_unit(self):
        net = from_weights([2.0], [[1.0, 0.0]], sigma=1.0, alpha=0.1)
        assert forward(net, np.array([1.0, 0.0]))[0] == pytest.approx(2.0)
        assert forward(net, np.array([-1.0, 0.0]))[0] == pytest.approx(-0.2)

    def test_zero_input(self):
        net = init_network(2, 5, 3, 0.1, 0.9, 0)
        assert forward(net, np.zeros(3))[0] == 0.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            net, X, _ = random_config(rng)
            f, _ = forward_batch(net, X)
            want = [naive_forward(net.hat_a, net.hat_v, net.hat_w, net.sigma, net.alpha, x) for x in X]
            np.testing.assert_allclose(f, want, rtol=1e-12, atol=1e-14)

    def test_preacts_recompose_output(self):
        rng = np.random.default_rng(42)
        net = init_network(2, 6, 3, 0.2, 0.8, rng)
        x = rng.standard_normal(3)
        f, pre = forward(net, x)
        top = np.where(pre[-1] >= 0, pre[-1], net.alpha * pre[-1])
        assert f == pytest.approx(net.sigma**3 * top @ net.hat_a, rel=1e-14)

    @settings(max_examples=30)
    @given(st.floats(0.1, 10.0), st.integers(0, 2**16))
    def test_input_homogeneity(self, c, seed):
        rng = np.random.default_rng(seed)
        net = init_network(0, 5, 3, 0.1, 1.0, rng)
        x = rng.standard_normal(3)
        scaled = from_weights(net.hat_a, c * net.hat_w, sigma=net.sigma, alpha=net.alpha)
        np.testing.assert_allclose(forward(scaled, x)[0], forward(net, c * x)[0], rtol=1e-12)

    def test_weight_homogeneity(self):
        rng = np.random.default_rng(42)
        net = init_network(2, 4, 3, 0.1, 1.0, rng)
        x = rng.standard_normal(3)
        c = 1.7
        scaled = from_weights(c * net.hat_a, c * net.hat_w, [c * m for m in net.hat_v], sigma=1.0, alpha=0.1)
        np.testing.assert_allclose(forward(scaled, x)[0], c**4 * forward(net, x)[0], rtol=1e-12)


class TestLoss:
    def test_values(self):
        assert loss(LossKind.BCE, 0, 0.0) == pytest.approx(np.log(2.0))
        assert dloss(LossKind.BCE, 1, 0.0) == pytest.approx(-0.5)
        g = dloss(LossKind.BCE, 0, 40.0)
        assert 1 - 1e-15 < g <= 1

    def test_no_overflow(self):
        with np.errstate(over="raise", invalid="raise"):
            assert np.isfinite(loss(LossKind.BCE, 1, -800.0))
            assert np.isfinite(dloss(LossKind.BCE, 0, -800.0))

    @given(st.sampled_from([0, 1]), st.floats(-30, 30))
    def test_matches_oracle(self, y, z):
        assert loss(LossKind.BCE, y, z) == pytest.approx(naive_bce(y, z), rel=1e-12, abs=1e-14)
        dz = 1e-6
        fd = (naive_bce(y, z + dz) - naive_bce(y, z - dz)) / (2 * dz)
        assert dloss(LossKind.BCE, y, z) == pytest.approx(fd, abs=1e-7)


class TestGradients:
    def test_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(8):
            net, X, y = random_config(rng)
            g, _ = gradients_xy(net, X, y)
            assert max_rel_error(g, finite_difference_grads(net, X, y)) <= 1e-5

    def test_symmetric_pair_cancels(self):
        net = from_weights([1.0, -1.0], [[1.0], [1.0]], sigma=1.0, alpha=0.1)
        x = np.array([[0.5], [0.5]])
        ds = Dataset(x, np.array([0, 1]))
        assert forward(net, x[0])[0] == 0.0
        np.testing.assert_allclose(gradients(net, ds).a, 0.0, atol=1e-15)

    def test_output_gradient_formula(self):
        rng = np.random.default_rng(42)
        net = init_network(0, 7, 3, 0.1, 0.3, rng)
        X = rng.standard_normal((5, 3))
        y = np.array([0, 1, 1, 0, 1.0])
        g, f = gradients_xy(net, X, y)
        U = X @ net.hat_w.T
        phi = np.where(U >= 0, U, 0.1 * U)
        want = net.sigma * np.mean((1 / (1 + np.exp(-f)) - y)[:, None] * phi, axis=0)
        np.testing.assert_allclose(g.a, want, rtol=1e-12)

    def test_batch_selection(self):
        rng = np.random.default_rng(42)
        net = init_network(1, 4, 2, 0.1, 0.5, rng)
        ds = Dataset(rng.standard_normal((6, 2)), np.array([0, 1, 0, 1, 1, 0]))
        g = gradients(net, ds, [1, 2])
        g2, _ = gradients_xy(net, ds.inputs[[1, 2]], ds.labels[[1, 2]])
        np.testing.assert_array_equal(g.w, g2.w)
        with pytest.raises(ValueError):
            gradients(net, ds, [])
