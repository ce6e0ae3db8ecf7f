"""Network forward/backward against central finite differences, the
Gaussian head, and checkpoint round-trips."""

import math

import numpy as np
import pytest

from reftrack.neuralnet import (
    ACTOR_ACTIVATIONS,
    CRITIC_ACTIVATIONS,
    GaussianPolicy,
    Mlp,
    backward,
    forward,
    load_actor,
    make_policy,
    policy_entropy,
    policy_logprob,
    policy_mean,
    policy_sample,
    policy_sample_logprob,
    save_actor,
    sgd_ascend,
)

FD_STEP = 1e-6
GRAD_TOL = 1e-5


def numeric_param_grads(scalar_of_net, net, eps=FD_STEP):
    """Central-difference gradient of a scalar function of the network
    parameters, perturbing every weight and bias in turn."""
    grads_w, grads_b = [], []
    for li in range(len(net.weights)):
        gw = np.zeros_like(net.weights[li])
        for idx in np.ndindex(*net.weights[li].shape):
            saved = net.weights[li][idx]
            net.weights[li][idx] = saved + eps
            up = scalar_of_net(net)
            net.weights[li][idx] = saved - eps
            down = scalar_of_net(net)
            net.weights[li][idx] = saved
            gw[idx] = (up - down) / (2 * eps)
        grads_w.append(gw)
        gb = np.zeros_like(net.biases[li])
        for idx in np.ndindex(*net.biases[li].shape):
            saved = net.biases[li][idx]
            net.biases[li][idx] = saved + eps
            up = scalar_of_net(net)
            net.biases[li][idx] = saved - eps
            down = scalar_of_net(net)
            net.biases[li][idx] = saved
            gb[idx] = (up - down) / (2 * eps)
        grads_b.append(gb)
    return grads_w, grads_b


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def random_small_net(rng, activations):
    sizes = [int(rng.integers(2, 6)) for _ in range(len(activations) + 1)]
    return Mlp.create(sizes, activations, rng)


class TestForward:
    def test_zero_net_relu_outputs_zero(self):
        net = Mlp(
            [np.zeros((4, 3)), np.zeros((2, 4))],
            [np.zeros(4), np.zeros(2)],
            ("tanh", "relu"),
        )
        out, _ = forward(net, np.array([1.0, -2.0, 3.0]))
        np.testing.assert_array_equal(out, np.zeros(2))

    def test_identity_single_layer_is_affine(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(3, 4))
        b = rng.normal(size=3)
        net = Mlp([w], [b], ("identity",))
        x = rng.normal(size=4)
        out, _ = forward(net, x)
        np.testing.assert_allclose(out, w @ x + b, rtol=1e-14)

    def test_neg_relu_values(self):
        net = Mlp([np.eye(2)], [np.zeros(2)], ("neg_relu",))
        out, _ = forward(net, np.array([3.0, -3.0]))
        np.testing.assert_array_equal(out, [0.0, -3.0])

    def test_batch_matches_loop(self):
        rng = np.random.default_rng(1)
        net = random_small_net(rng, ACTOR_ACTIVATIONS)
        xs = rng.normal(size=(7, net.in_dim))
        batch_out, _ = forward(net, xs)
        for i in range(7):
            single, _ = forward(net, xs[i])
            np.testing.assert_allclose(batch_out[i], single, rtol=1e-14)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(2)
        net = random_small_net(rng, CRITIC_ACTIVATIONS)
        with pytest.raises(ValueError):
            forward(net, np.zeros(net.in_dim + 1))

    def test_critic_output_nonpositive(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            net = random_small_net(rng, CRITIC_ACTIVATIONS)
            out, _ = forward(net, rng.normal(size=(30, net.in_dim)) * 3)
            assert np.all(out <= 0.0)

    def test_actor_output_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            net = random_small_net(rng, ACTOR_ACTIVATIONS)
            out, _ = forward(net, rng.normal(size=(30, net.in_dim)) * 3)
            assert np.all(out >= 0.0)


class TestBackward:
    @pytest.mark.parametrize("activations", [ACTOR_ACTIVATIONS, CRITIC_ACTIVATIONS])
    def test_gradients_match_finite_differences(self, activations):
        rng = np.random.default_rng(5)
        for _ in range(10):
            net = random_small_net(rng, activations)
            x = rng.normal(size=(4, net.in_dim))
            g = rng.normal(size=(4, net.out_dim))

            out, cache = forward(net, x)
            analytic, _ = backward(net, cache, g)

            def scalar(n):
                return float(np.sum(forward(n, x)[0] * g))

            num_w, num_b = numeric_param_grads(scalar, net)
            assert max_rel_error(analytic.weights, num_w) < GRAD_TOL
            assert max_rel_error(analytic.biases, num_b) < GRAD_TOL

    def test_grad_input_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        net = random_small_net(rng, ACTOR_ACTIVATIONS)
        x = rng.normal(size=net.in_dim)
        g = rng.normal(size=net.out_dim)
        out, cache = forward(net, x)
        _, grad_input = backward(net, cache, g)
        num = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = FD_STEP
            num[i] = (
                float(np.sum(forward(net, x + e)[0] * g))
                - float(np.sum(forward(net, x - e)[0] * g))
            ) / (2 * FD_STEP)
        assert max_rel_error([grad_input], [num]) < GRAD_TOL

    def test_zero_grad_output_gives_zero_grads(self):
        rng = np.random.default_rng(7)
        net = random_small_net(rng, CRITIC_ACTIVATIONS)
        x = rng.normal(size=(3, net.in_dim))
        _, cache = forward(net, x)
        grads, grad_input = backward(net, cache, np.zeros((3, net.out_dim)))
        assert all(np.all(g == 0) for g in grads.weights)
        assert all(np.all(g == 0) for g in grads.biases)
        assert np.all(grad_input == 0)

    def test_backward_is_linear_in_grad_output(self):
        rng = np.random.default_rng(8)
        net = random_small_net(rng, ACTOR_ACTIVATIONS)
        x = rng.normal(size=(3, net.in_dim))
        g = rng.normal(size=(3, net.out_dim))
        _, cache = forward(net, x)
        g1, _ = backward(net, cache, g)
        g2, _ = backward(net, cache, 2.0 * g)
        for a, b in zip(g1.weights, g2.weights):
            np.testing.assert_allclose(b, 2.0 * a, rtol=1e-12)

    def test_stale_cache_rejected(self):
        rng = np.random.default_rng(9)
        net = random_small_net(rng, ACTOR_ACTIVATIONS)
        x = rng.normal(size=net.in_dim)
        _, cache = forward(net, x)
        other = net.copy()
        with pytest.raises(ValueError):
            backward(other, cache, np.zeros(net.out_dim))


class TestSgd:
    def test_zero_lr_is_identity(self):
        rng = np.random.default_rng(10)
        net = random_small_net(rng, ACTOR_ACTIVATIONS)
        x = rng.normal(size=net.in_dim)
        _, cache = forward(net, x)
        grads, _ = backward(net, cache, np.ones(net.out_dim))
        updated = sgd_ascend(net, grads, 0.0)
        for a, b in zip(net.weights, updated.weights):
            np.testing.assert_array_equal(a, b)

    def test_scalar_shift(self):
        net = Mlp([np.array([[1.0]])], [np.array([0.5])], ("identity",))
        from reftrack.neuralnet import MlpGrads

        grads = MlpGrads([np.array([[2.0]])], [np.array([2.0])])
        updated = sgd_ascend(net, grads, 0.5)
        assert updated.weights[0][0, 0] == 2.0
        assert updated.biases[0][0] == 1.5

    def test_two_steps_equal_summed_step(self):
        rng = np.random.default_rng(11)
        net = random_small_net(rng, CRITIC_ACTIVATIONS)
        from reftrack.neuralnet import MlpGrads

        g1 = MlpGrads(
            [rng.normal(size=w.shape) for w in net.weights],
            [rng.normal(size=b.shape) for b in net.biases],
        )
        g2 = MlpGrads(
            [rng.normal(size=w.shape) for w in net.weights],
            [rng.normal(size=b.shape) for b in net.biases],
        )
        a = sgd_ascend(sgd_ascend(net, g1, 0.1), g2, 0.1)
        summed = MlpGrads(
            [x + y for x, y in zip(g1.weights, g2.weights)],
            [x + y for x, y in zip(g1.biases, g2.biases)],
        )
        b = sgd_ascend(net, summed, 0.1)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_allclose(wa, wb, rtol=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(12)
        net = random_small_net(rng, ACTOR_ACTIVATIONS)
        from reftrack.neuralnet import MlpGrads

        bad = MlpGrads(
            [np.zeros((w.shape[0] + 1, w.shape[1])) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
        )
        with pytest.raises(ValueError):
            sgd_ascend(net, bad, 0.1)


class TestGaussianPolicy:
    def make(self, seed=13, init_std=0.5):
        rng = np.random.default_rng(seed)
        return make_policy(4, rng, init_std, hidden=(5, 4)), rng

    def test_tiny_std_sampling_recovers_mean(self):
        policy, rng = self.make(init_std=1e-12)
        x = rng.normal(size=4)
        mean = policy_mean(policy, x)
        assert policy_sample(policy, x, rng) == pytest.approx(mean, abs=1e-9)

    def test_samples_clamped_nonnegative(self):
        policy, rng = self.make(init_std=10.0)
        x = rng.normal(size=4)
        samples = np.array([policy_sample(policy, x, rng) for _ in range(500)])
        assert np.all(samples >= 0.0)
        assert np.mean(samples == 0.0) > 0.1  # mean is small, many raw draws negative

    def test_sampling_deterministic_under_seed(self):
        policy, _ = self.make()
        a = policy_sample(policy, np.zeros(4), np.random.default_rng(99))
        b = policy_sample(policy, np.zeros(4), np.random.default_rng(99))
        assert a == b

    def test_sample_logprob_pair_consistent(self):
        policy, rng = self.make(init_std=2.0)
        x = rng.normal(size=4)
        u, logp = policy_sample_logprob(policy, x, np.random.default_rng(5))
        u2 = policy_sample(policy, x, np.random.default_rng(5))
        assert u == pytest.approx(u2, abs=1e-12)
        assert logp == pytest.approx(policy_logprob(policy, x, u), abs=1e-12)

    def test_logprob_at_mean(self):
        policy, rng = self.make(init_std=0.7)
        x = rng.normal(size=4)
        mean = policy_mean(policy, x)
        assert policy_logprob(policy, x, mean) == pytest.approx(
            -math.log(0.7 * math.sqrt(2 * math.pi))
        )

    def test_logprob_one_sigma_drop(self):
        policy, rng = self.make(init_std=0.7)
        x = rng.normal(size=4)
        mean = policy_mean(policy, x)
        drop = policy_logprob(policy, x, mean + 0.7) - policy_logprob(policy, x, mean)
        assert drop == pytest.approx(-0.5, rel=1e-12)

    def test_identical_policies_give_unit_ratio(self):
        policy, rng = self.make()
        x = rng.normal(size=4)
        u = policy_sample(policy, x, rng)
        ratio = math.exp(policy_logprob(policy, x, u) - policy_logprob(policy, x, u))
        assert ratio == 1.0

    def test_entropy_standard_normal(self):
        policy, _ = self.make(init_std=1.0)
        assert policy_entropy(policy) == pytest.approx(1.4189385332046727, abs=1e-12)

    def test_entropy_doubling_std_adds_log2(self):
        p1, _ = self.make(init_std=1.3)
        p2 = GaussianPolicy(p1.mean_net, p1.log_std + math.log(2.0))
        assert policy_entropy(p2) - policy_entropy(p1) == pytest.approx(math.log(2.0))

    def test_entropy_gradient_in_log_std_is_one(self):
        p1, _ = self.make(init_std=0.9)
        eps = 1e-6
        up = GaussianPolicy(p1.mean_net, p1.log_std + eps)
        down = GaussianPolicy(p1.mean_net, p1.log_std - eps)
        numeric = (policy_entropy(up) - policy_entropy(down)) / (2 * eps)
        assert numeric == pytest.approx(1.0, rel=1e-8)

    def test_logprob_grads_in_log_std_match_fd(self):
        policy, rng = self.make(init_std=0.8)
        x = rng.normal(size=4)
        u = 0.37
        eps = 1e-6
        analytic = ((u - policy_mean(policy, x)) / policy.std) ** 2 - 1.0
        up = GaussianPolicy(policy.mean_net, policy.log_std + eps)
        down = GaussianPolicy(policy.mean_net, policy.log_std - eps)
        numeric = (policy_logprob(up, x, u) - policy_logprob(down, x, u)) / (2 * eps)
        assert numeric == pytest.approx(analytic, rel=1e-6, abs=1e-8)

    def test_rejects_nonpositive_std(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            make_policy(3, rng, 0.0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(14)
        policy = make_policy(5, rng, 0.25, hidden=(6, 4))
        path = tmp_path / "actor.npz"
        save_actor(path, policy)
        loaded = load_actor(path)
        assert loaded.log_std == policy.log_std
        assert loaded.mean_net.activations == policy.mean_net.activations
        for a, b in zip(loaded.mean_net.weights, policy.mean_net.weights):
            np.testing.assert_array_equal(a, b)
        x = rng.normal(size=5)
        assert policy_mean(loaded, x) == policy_mean(policy, x)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.npz"
        np.savez(path, meta=np.frombuffer(b'{"version": 99}', dtype=np.uint8))
        with pytest.raises(ValueError):
            load_actor(path)
