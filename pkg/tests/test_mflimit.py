from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from widthlab.data import gen_synthetic
from widthlab.experiments import commutation_gap
from widthlab.mflimit import (
    ParticleMeasure,
    kernel_dynamics,
    measure_of,
    transition_step,
    wasserstein2,
)
from widthlab.net import from_weights, init_network


def brute_w2(A, B):
    d = A.shape[0]
    best = min(sum(np.sum((A[i] - B[p[i]]) ** 2) for i in range(d)) for p in permutations(range(d)))
    return np.sqrt(best / d)


class TestMeasure:
    def test_of_net(self):
        net = from_weights([1.0, -2.0], [[0.5, 0.1], [0.3, 0.2]], sigma=1.0, alpha=0.1)
        mu = measure_of(net)
        np.testing.assert_array_equal(mu.atoms, [[1.0, 0.5, 0.1], [-2.0, 0.3, 0.2]])

    def test_permutation_gives_same_multiset(self):
        rng = np.random.default_rng(42)
        net = init_network(0, 6, 2, 0.1, 1.0, rng)
        perm = rng.permutation(6)
        other = from_weights(net.hat_a[perm], net.hat_w[perm], sigma=1.0, alpha=0.1)
        assert wasserstein2(measure_of(net), measure_of(other)) == 0.0

    def test_deep_rejected(self):
        with pytest.raises(ValueError):
            measure_of(init_network(1, 2, 2, 0.1, 1.0, 0))

    def test_invalid_atoms(self):
        with pytest.raises(ValueError):
            ParticleMeasure(np.array([[np.inf, 0.0]]))
        with pytest.raises(ValueError):
            ParticleMeasure(np.zeros((0, 3)))


class TestTransition:
    def test_zero_rate_identity(self):
        rng = np.random.default_rng(42)
        mu = ParticleMeasure(rng.standard_normal((5, 4)))
        ds = gen_synthetic(8, 3, 1.0, 0)
        np.testing.assert_array_equal(transition_step(mu, 0.0, 1.0, ds, 0.1).atoms, mu.atoms)

    def test_single_atom_hand_value(self):
        mu = ParticleMeasure(np.array([[0.0, 1.0, 0.0]]))
        eta, sig = 0.3, 2.0
        out = transition_step(mu, eta, sig, OnePoint(np.array([1.0, 0.0]), 1.0), 0.1)
        # f = 0 so the loss slope is logistic(0) - 1 = -1/2, and phi(1) = 1
        assert out.atoms[0, 0] == pytest.approx(eta * sig / 2)
        np.testing.assert_array_equal(out.atoms[0, 1:], [1.0, 0.0])

    @pytest.mark.parametrize("d", [1, 2, 8, 64])
    def test_commutes_with_gd(self, d):
        assert commutation_gap(d, 42) <= 1e-12


class OnePoint:
    """Just enough of a dataset for a single labelled point (Dataset needs both classes)."""

    def __init__(self, x, y):
        self.inputs = x[None, :]
        self.labels = np.array([y])
        self.n = 1


class TestWasserstein:
    def test_identical(self):
        mu = ParticleMeasure(np.random.default_rng(42).standard_normal((7, 3)))
        assert wasserstein2(mu, mu) == 0.0

    def test_single_atoms(self):
        a = ParticleMeasure(np.array([[0.0, 0.0]]))
        b = ParticleMeasure(np.array([[3.0, 4.0]]))
        assert wasserstein2(a, b) == pytest.approx(5.0)

    def test_two_point_line(self):
        a = ParticleMeasure(np.array([[0.0, 0.0], [2.0, 0.0]]))
        b = ParticleMeasure(np.array([[1.0, 0.0], [3.0, 0.0]]))
        assert wasserstein2(a, b) == pytest.approx(1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**20))
    def test_matches_brute_force(self, d, seed):
        rng = np.random.default_rng(seed)
        A, B = rng.standard_normal((d, 3)), rng.standard_normal((d, 3))
        assert wasserstein2(ParticleMeasure(A), ParticleMeasure(B)) == pytest.approx(brute_w2(A, B), rel=1e-12)

    def test_metric_on_random_triples(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            a, b, c = (ParticleMeasure(rng.standard_normal((8, 3))) for _ in range(3))
            assert wasserstein2(a, b) == wasserstein2(b, a)
            assert wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-9

    def test_size_checks(self):
        with pytest.raises(ValueError):
            wasserstein2(ParticleMeasure(np.zeros((2, 2))), ParticleMeasure(np.zeros((3, 2))))
        big = ParticleMeasure(np.zeros((4097, 2)))
        with pytest.raises(ValueError):
            wasserstein2(big, big)


class TestKernelDynamics:
    def test_zero_steps(self):
        traj = kernel_dynamics(np.array([0.3, -0.1]), np.ones((1, 2)), np.array([1.0]), 0)
        np.testing.assert_array_equal(traj.values, [[0.3, -0.1]])

    def test_zero_gram_constant(self):
        traj = kernel_dynamics(np.array([0.3, -0.1, 2.0]), np.zeros((2, 3)), np.array([1.0, 0.0]), 6)
        np.testing.assert_array_equal(traj.values, np.tile([0.3, -0.1, 2.0], (7, 1)))

    def test_one_point(self):
        traj = kernel_dynamics(np.array([0.0]), np.array([[2.0]]), np.array([1.0]), 1)
        assert traj.train[1, 0] == pytest.approx(1.0)

    def test_matches_loop(self):
        rng = np.random.default_rng(42)
        A = rng.standard_normal((5, 5))
        K = A @ A.T / 5
        gram = K[:3]
        y = np.array([1.0, 0.0, 1.0])
        f = rng.standard_normal(5) * 0.1
        traj = kernel_dynamics(f, gram, y, 4)
        cur = f.copy()
        for _ in range(4):
            g = [1 / (1 + np.exp(-cur[i])) - y[i] for i in range(3)]
            cur = np.array([cur[j] - sum(g[i] * gram[i, j] for i in range(3)) / 3 for j in range(5)])
        np.testing.assert_allclose(traj.values[-1], cur, rtol=1e-12)
        np.testing.assert_allclose(traj.query[-1], cur[3:], rtol=1e-12)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            kernel_dynamics(np.zeros(3), np.zeros((2, 2)), np.zeros(2), 1)

