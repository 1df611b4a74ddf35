import math

import numpy as np
import pytest

from bitjscc.autodiff import Tensor, backward, ops
from bitjscc.bitmapper import (
    BitMapper,
    gumbel_max_sample,
    gumbel_noise,
    gumbel_softmax_relax,
    sample_bits_st,
    tau_schedule,
)
from helpers import check_gradients


def as_float64(module):
    for _, p in module.named_parameters():
        p.data = p.data.astype(np.float64)
    return module


def test_distribution_shape_and_rows():
    mapper = BitMapper(channels=8, seed=0)
    z = Tensor(np.random.default_rng(0).standard_normal((1, 8, 8, 8)).astype(np.float32))
    p = mapper.distribution(z)
    assert p.shape == (512, 2)
    assert np.max(np.abs(p.data.sum(axis=1) - 1)) < 1e-6


def test_bits_per_feature_multiplies_rows():
    mapper = BitMapper(channels=2, bits_per_feature=3)
    p = mapper.distribution(Tensor(np.zeros((2, 2, 4, 4), np.float32)))
    assert p.shape == (2 * 3 * 2 * 16, 2)
    assert mapper.n_bits(32) == 96


def test_zero_network_gives_uniform_rows():
    mapper = BitMapper(channels=4)
    for _, p in mapper.named_parameters():
        p.data[...] = 0
    z = Tensor(np.random.default_rng(1).standard_normal((2, 4, 3, 3)).astype(np.float32))
    np.testing.assert_array_equal(mapper.distribution(z).data, 0.5)


def test_rejects_wrong_feature_shape():
    with pytest.raises(ValueError, match="expects"):
        BitMapper(channels=4).distribution(Tensor(np.zeros((1, 3, 4, 4))))


def test_rejects_bad_construction():
    with pytest.raises(ValueError):
        BitMapper(channels=0)
    with pytest.raises(ValueError):
        BitMapper(channels=2, tau=0)


def test_mapper_gradient_wrt_features():
    rng = np.random.default_rng(2)
    mapper = as_float64(BitMapper(channels=2, seed=3))
    z = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
    err = check_gradients(lambda: ops.mean(mapper.distribution(z)[:, 1]), [z])
    assert err < 1e-4


def test_mapper_gradient_wrt_parameters():
    rng = np.random.default_rng(4)
    mapper = as_float64(BitMapper(channels=2, seed=5))
    z = Tensor(rng.standard_normal((2, 2, 3, 3)))
    w = Tensor(rng.uniform(-1, 1, (36,)))
    params = mapper.parameters()
    err = check_gradients(lambda: ops.sum(ops.mul(mapper.distribution(z)[:, 1], w)), params)
    assert err < 1e-4


class TestGumbelNoise:
    def test_finite_and_standard_moments(self):
        g = gumbel_noise((1_000_000,), np.random.default_rng(0))
        assert np.isfinite(g).all()
        assert abs(g.mean() - 0.5772156649) < 0.005  # Euler-Mascheroni
        assert abs(g.var() - math.pi ** 2 / 6) < 0.01

    def test_clamped_extremes_are_finite(self):
        class Edge:
            def random(self, shape):
                return np.array([0.0, 1.0])

        assert np.isfinite(gumbel_noise((2,), Edge())).all()


class TestGumbelMax:
    def test_degenerate_distribution_never_flips(self):
        rng = np.random.default_rng(0)
        p = np.tile([1 - 1e-12, 1e-12], (10_000, 1))
        _, bits = gumbel_max_sample(p, gumbel_noise(p.shape, rng))
        assert bits.sum() == 0

    def test_one_hot_decoding(self):
        # a dominant second category yields t = [0, 1] -> b = 1
        t, b = gumbel_max_sample(np.array([[0.0, 1.0]]), np.zeros((1, 2)))
        np.testing.assert_array_equal(t, [[0, 1]])
        assert b[0] == 1

    def test_tie_goes_to_bit_zero(self):
        t, b = gumbel_max_sample(np.array([[0.5, 0.5]]), np.array([[0.3, 0.3]]))
        np.testing.assert_array_equal(t, [[1, 0]])
        assert b[0] == 0

    @pytest.mark.parametrize("p1", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_frequency_matches_probability(self, p1):
        rng = np.random.default_rng(int(p1 * 100))
        p = np.tile([1 - p1, p1], (100_000, 1))
        _, bits = gumbel_max_sample(p, gumbel_noise(p.shape, rng))
        assert abs(bits.mean() - p1) <= 0.01


class TestRelaxation:
    def test_equal_logits_equal_noise(self):
        for tau in (0.01, 1.0, 7.0):
            t = gumbel_softmax_relax(np.full((3, 2), 0.5), np.full((3, 2), 0.2), tau)
            np.testing.assert_array_equal(t.data, 0.5)

    def test_rejects_nonpositive_tau(self):
        for tau in (0.0, -1.0):
            with pytest.raises(ValueError, match="temperature"):
                gumbel_softmax_relax(np.full((1, 2), 0.5), np.zeros((1, 2)), tau)

    def test_rejects_noise_shape(self):
        with pytest.raises(ValueError):
            gumbel_softmax_relax(np.full((2, 2), 0.5), np.zeros((3, 2)), 1.0)

    def test_low_temperature_is_near_one_hot(self):
        # max(t) > 0.999 exactly when the score gap exceeds tau * ln(999); rows
        # whose gap falls inside that band stay soft at any fixed tau
        tau = 0.01
        rng = np.random.default_rng(9)
        p1 = rng.uniform(0.01, 0.99, 1000)
        p = np.stack([1 - p1, p1], 1)
        g = gumbel_noise(p.shape, rng)
        t = gumbel_softmax_relax(p, g, tau).data
        onehot, _ = gumbel_max_sample(p, g)
        scores = np.log(p) + g
        clear = np.abs(scores[:, 1] - scores[:, 0]) > tau * math.log(999)
        assert clear.mean() > 0.95
        assert t.max(axis=1)[clear].min() > 0.999
        assert (t.max(axis=1)[~clear] <= 0.999).all()
        np.testing.assert_array_equal(t.argmax(axis=1), onehot.argmax(axis=1))

    @pytest.mark.parametrize("tau", [0.01, 0.1, 1.0, 10.0])
    def test_rows_stochastic_and_argmax_invariant(self, tau):
        rng = np.random.default_rng(10)
        p1 = rng.uniform(0.01, 0.99, 1000)
        p = np.stack([1 - p1, p1], 1)
        g = gumbel_noise(p.shape, rng)
        t = gumbel_softmax_relax(p, g, tau).data
        assert np.max(np.abs(t.sum(axis=1) - 1)) < 1e-6
        np.testing.assert_array_equal(t.argmax(axis=1), gumbel_max_sample(p, g)[0].argmax(axis=1))

    def test_gradient_of_soft_bit_wrt_log_probs(self):
        rng = np.random.default_rng(12)
        worst = 0.0
        for _ in range(100):
            logits = Tensor(rng.uniform(-2, 2, (5, 2)), requires_grad=True)
            g = gumbel_noise((5, 2), rng)
            w = Tensor(rng.uniform(-1, 1, 5))

            def loss():
                t = gumbel_softmax_relax(ops.softmax_rows(logits), g, 1.0)
                return ops.sum(ops.mul(t[:, 1], w))

            worst = max(worst, check_gradients(loss, [logits]))
        assert worst < 1e-4


class TestStraightThroughSampling:
    def test_forward_bits_are_binary_and_match_gumbel_max(self):
        rng = np.random.default_rng(13)
        p1 = rng.uniform(0, 1, 200)
        p = np.stack([1 - p1, p1], 1)
        g = gumbel_noise(p.shape, np.random.default_rng(99))
        b = sample_bits_st(p, g, 0.7)
        assert set(np.unique(b.data)) <= {0.0, 1.0}
        g2 = gumbel_noise(p.shape, np.random.default_rng(99))
        np.testing.assert_array_equal(b.data, gumbel_max_sample(p, g2)[1])

    def test_descent_raises_probability_of_bit_one(self):
        # theta parameterises p = softmax(theta); each step averages 100 noise draws
        rng = np.random.default_rng(14)
        theta = Tensor(np.array([[0.5, -0.5]]), requires_grad=True)
        trace = []
        for _ in range(50):
            p = ops.softmax_rows(theta)
            trace.append(p.data[0, 1])
            rows = ops.reshape(ops.matmul(Tensor(np.ones((100, 1))), ops.reshape(p, (1, 2))), (100, 2))
            b = sample_bits_st(rows, gumbel_noise((100, 2), rng), 1.0)
            loss = ops.mean(ops.mul(ops.sub(b, 1.0), ops.sub(b, 1.0)))
            backward(loss)
            theta.data -= 0.5 * theta.grad
            theta.grad = None
        trace.append(ops.softmax_rows(theta).data[0, 1])
        assert all(b >= a for a, b in zip(trace, trace[1:]))
        assert trace[-1] > trace[0] + 0.2


def test_tau_schedule_endpoints():
    assert tau_schedule(0, 100, 5.0, 0.5) == pytest.approx(5.0)
    assert tau_schedule(50, 100, 5.0, 0.5) == pytest.approx(math.sqrt(2.5))
    assert tau_schedule(100, 100, 5.0, 0.5) == 0.5
    assert tau_schedule(500, 100, 5.0, 0.5) == 0.5
    vals = [tau_schedule(k, 100, 5.0, 0.5) for k in range(101)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
