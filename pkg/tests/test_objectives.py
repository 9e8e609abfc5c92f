import math

import numpy as np
import pytest

from sbpu import params as P
from sbpu.objectives import (AssumptionConstants, ClassifierObjective, LrSchedule,
                             QuadraticObjective, constants_for, sgd_step, softmax)


def quad(A, c, sigma=0.0, radius=10.0):
    return QuadraticObjective(matrix=np.asarray(A, dtype=float),
                              center=np.asarray(c, dtype=float),
                              noise_sigma=sigma, radius=radius)


def vec(obj, *values):
    return obj.params_from_vector(np.array(values, dtype=float))


class TestQuadratic:
    def test_loss_at_center_is_zero(self):
        o = quad(np.eye(2), [1.0, -2.0])
        assert o.loss(vec(o, 1.0, -2.0)) == 0.0

    def test_loss_identity_matrix(self):
        o = quad(np.eye(2), [0.0, 0.0])
        assert o.loss(vec(o, 1.0, 1.0)) == 1.0

    def test_grad_stationary_at_center(self):
        o = quad(np.eye(3), [0.5, 0.5, 0.5])
        g = o.grad(vec(o, 0.5, 0.5, 0.5))
        assert P.sq_norm(g) == 0.0

    def test_grad_diagonal(self):
        o = quad(np.diag([2.0, 3.0]), [0.0, 0.0])
        g = o.grad(vec(o, 1.0, 1.0))
        np.testing.assert_array_equal(P.as_vector(g), [2.0, 3.0])

    def test_grad_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            d = int(rng.integers(1, 5))
            M = rng.standard_normal((d, d))
            A = M @ M.T + d * np.eye(d)
            o = quad(A, rng.standard_normal(d))
            w = rng.standard_normal(d)
            g = P.as_vector(o.grad(o.params_from_vector(w)))
            h = 1e-5
            for j in range(d):
                e = np.zeros(d); e[j] = h
                fd = (o.loss(o.params_from_vector(w + e))
                      - o.loss(o.params_from_vector(w - e))) / (2 * h)
                assert g[j] == pytest.approx(fd, rel=1e-7, abs=1e-7)

    def test_asymmetric_matrix_rejected(self):
        with pytest.raises(ValueError):
            quad([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])

    def test_indefinite_matrix_rejected(self):
        with pytest.raises(ValueError):
            quad(np.diag([1.0, -1.0]), [0.0, 0.0])


class TestStochasticGrad:
    def test_sigma_zero_equals_grad(self):
        o = quad(np.diag([1.0, 4.0]), [0.0, 0.0], sigma=0.0)
        w = vec(o, 0.3, -0.3)
        assert o.stochastic_grad(w, np.random.default_rng(1)) == o.grad(w)

    def test_pure_noise_has_norm_sigma(self):
        o = quad(np.eye(3), [0.0, 0.0, 0.0], sigma=1.0)
        g = o.stochastic_grad(vec(o, 0.0, 0.0, 0.0), np.random.default_rng(2))
        assert math.sqrt(P.sq_norm(g)) == pytest.approx(1.0, rel=1e-12)

    def test_monte_carlo_moments(self):
        sigma = 0.7
        o = quad(np.eye(4), np.zeros(4), sigma=sigma)
        w = vec(o, 0.1, 0.2, 0.3, 0.4)
        g0 = P.as_vector(o.grad(w))
        rng = np.random.default_rng(3)
        n = 10_000
        xi = np.array([P.as_vector(o.stochastic_grad(w, rng)) - g0 for _ in range(n)])
        assert np.mean(np.sum(xi ** 2, axis=1)) == pytest.approx(sigma ** 2, rel=1e-9)
        assert np.all(np.abs(xi.mean(axis=0)) <= 3 * sigma / math.sqrt(n))

    def test_outside_ball_rejected(self):
        o = quad(np.eye(2), [0.0, 0.0], sigma=0.1, radius=1.0)
        with pytest.raises(ValueError):
            o.stochastic_grad(vec(o, 2.0, 0.0), np.random.default_rng(4))

    def test_deviation_and_norm_bounds(self):
        o = quad(np.diag([1.0, 2.0]), [0.0, 0.0], sigma=0.5, radius=2.0)
        G = 2.0 * 2.0 + 0.5
        rng = np.random.default_rng(5)
        for _ in range(200):
            w = o.project(o.params_from_vector(rng.uniform(-3, 3, size=2)))
            g = o.stochastic_grad(w, rng)
            dev = math.sqrt(P.sq_distance(g, o.grad(w)))
            assert dev <= 0.5 * (1 + 1e-12)
            assert math.sqrt(P.sq_norm(g)) <= G * (1 + 1e-12)


class TestSgdStep:
    def test_zero_gradient(self):
        o = quad(np.eye(2), [0.0, 0.0])
        w = vec(o, 1.0, 2.0)
        assert sgd_step(w, P.zeros_like(w), 0.3) == w

    def test_scalar_step(self):
        o = quad(np.eye(2), [0.0, 0.0])
        out = sgd_step(vec(o, 0.0, 0.0), vec(o, 1.0, 0.0), 0.5)
        np.testing.assert_array_equal(P.as_vector(out), [-0.5, 0.0])

    def test_projection_onto_ball(self):
        o = quad(np.eye(2), [0.0, 0.0])
        out = sgd_step(vec(o, 0.9, 0.0), vec(o, -1.0, 0.0), 0.5,
                       ball=(np.zeros(2), 1.0))
        np.testing.assert_allclose(P.as_vector(out), [1.0, 0.0], rtol=1e-15)

    def test_eta_positive_required(self):
        o = quad(np.eye(2), [0.0, 0.0])
        w = vec(o, 1.0, 1.0)
        with pytest.raises(ValueError):
            sgd_step(w, w, 0.0)


class TestLrSchedule:
    def test_direct_values(self):
        s = LrSchedule(mu=1.0, gamma=16.0)
        assert s.lr_at(0) == 0.125
        assert s.lr_at(16) == 0.0625

    def test_doubling_window(self):
        for E in (1, 2, 5, 10):
            s = LrSchedule(mu=0.5, gamma=max(16.0, float(E)))
            for t in range(0, 100):
                t0 = max(0, t - (E - 1))
                assert s.lr_at(t0) <= 2.0 * s.lr_at(t) + 1e-15

    def test_strictly_decreasing(self):
        s = LrSchedule(mu=2.0, gamma=8.0)
        vals = [s.lr_at(t) for t in range(50)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_initial_lr_quarter_smoothness(self):
        L, mu = 3.0, 1.5
        kappa = L / mu
        s = LrSchedule(mu=mu, gamma=8.0 * kappa)
        assert s.lr_at(0) == pytest.approx(1.0 / (4.0 * L), rel=1e-15)


class TestConstantsFor:
    def test_identity_suite(self):
        objs = [quad(np.eye(2), [0.0, 0.0], radius=1.0) for _ in range(3)]
        c = constants_for(objs, E=2, R=1.0)
        assert (c.L, c.mu, c.G, c.kappa) == (1.0, 1.0, 1.0, 1.0)
        assert c.gamma == 8.0

    def test_eigenvalue_extremes(self):
        objs = [quad(np.diag([1.0, 4.0]), [0.0, 0.0]),
                quad(np.diag([2.0, 3.0]), [0.0, 0.0])]
        c = constants_for(objs, E=2, R=1.0)
        assert (c.L, c.mu, c.kappa) == (4.0, 1.0, 4.0)
        assert c.gamma == 32.0

    def test_E_dominant_branch(self):
        objs = [quad(np.eye(2), [0.0, 0.0])]
        assert constants_for(objs, E=40, R=1.0).gamma == 40.0

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            AssumptionConstants(L=1.0, mu=2.0, sigma=(0.0,), G=1.0, kappa=0.5, gamma=8.0)


class TestClassifier:
    def test_uniform_logits_loss(self):
        obj = ClassifierObjective(architecture=((3, 4, "linear"),))
        w = obj.zero_params()
        x = np.random.default_rng(6).uniform(size=(5, 3))
        y = np.array([0, 1, 2, 3, 0])
        assert obj.loss(w, (x, y)) == pytest.approx(math.log(4.0), rel=1e-12)

    def test_softmax_rows_sum_to_one(self):
        z = np.random.default_rng(7).standard_normal((10, 6)) * 30
        np.testing.assert_allclose(softmax(z).sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("act", ["sigmoid", "relu", "lrelu"])
    def test_grad_finite_differences(self, act):
        rng = np.random.default_rng(8)
        obj = ClassifierObjective(architecture=((5, 4, act), (4, 3, "linear")))
        w = obj.init_params(rng, scale=0.5)
        x = rng.uniform(size=(6, 5))
        y = rng.integers(0, 3, size=6)
        g = P.as_vector(obj.grad(w, (x, y)))
        wv = P.as_vector(w)
        h = 1e-5
        idx = rng.choice(wv.size, size=25, replace=False)
        for j in idx:
            e = np.zeros_like(wv); e[j] = h
            fd = (obj.loss(P.from_vector(wv + e, w), (x, y))
                  - obj.loss(P.from_vector(wv - e, w), (x, y))) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_architecture_validation(self):
        with pytest.raises(ValueError):
            ClassifierObjective(architecture=((3, 4, "relu"),))   # must end linear
        with pytest.raises(ValueError):
            ClassifierObjective(architecture=((3, 4, "relu"), (5, 2, "linear")))
        with pytest.raises(ValueError):
            ClassifierObjective(architecture=((3, 4, "tanh"), (4, 2, "linear")))

    def test_empty_batch_rejected(self):
        obj = ClassifierObjective(architecture=((2, 2, "linear"),))
        with pytest.raises(ValueError):
            obj.loss(obj.zero_params(), (np.zeros((0, 2)), np.zeros(0, dtype=int)))

    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            ClassifierObjective(architecture=((2, 2, "linear"),),
                                data_x=np.zeros((1, 2)), data_y=np.array([5]))
