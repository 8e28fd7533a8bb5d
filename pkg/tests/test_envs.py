import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ocpg.envs import (
    DelayedRewards, LQREnv, NoisyRewards, PendulumEnv, PointMassEnv, RewardRange,
    SparseRewards, angle_normalize, lqr_env, make_env, wrap_rewards,
)
from ocpg.errors import ConfigurationError


def scalar_env(**kw):
    return lqr_env([[0.9]], [[1.0]], [[1.0]], [[0.1]], **kw)


class ConstantEnv(LQREnv):
    """Zero dynamics with a constant reward of 1 per step."""

    def reward(self, s, a):
        return 1.0


def constant_env(horizon=30):
    return ConstantEnv([[0.0]], [[1.0]], [[0.0]], [[1.0]], horizon=horizon, seed=0)


def rollout(env, actions):
    env.reset()
    states, rewards, terminals = [], [], []
    for a in actions:
        s2, r, done, info = env.step(a)
        states.append(s2)
        rewards.append((r, info["true_reward"]))
        terminals.append(done)
        if done:
            break
    return np.array(states), rewards, terminals


class TestLQR:
    def test_hand_step(self):
        env = scalar_env()
        env.reset()
        env.state = np.array([1.0])
        s2, r, done, _ = env.step(np.array([0.0]))
        np.testing.assert_allclose(s2, [0.9])
        assert r == -1.0 and not done

    @given(st.floats(-0.9, 0.9))
    def test_deadbeat(self, s):
        env = scalar_env(action_bound=1.0)
        env.reset()
        env.state = np.array([s])
        s2, _, _, _ = env.step(np.array([-0.9 * s]))
        assert abs(s2[0]) < 1e-15

    def test_reward_uses_pre_transition_state(self):
        env = lqr_env(np.eye(2), np.eye(2), np.diag([1.0, 2.0]), 0.5 * np.eye(2))
        env.reset()
        env.state = np.array([1.0, 1.0])
        _, r, _, _ = env.step(np.array([1.0, 0.0]))
        assert r == -(1.0 + 2.0) - 0.5

    @pytest.mark.parametrize("Qc,Rc", [([[-1.0]], [[0.1]]), ([[1.0]], [[0.0]]),
                                       ([[1.0]], [[-0.1]])])
    def test_indefinite_costs_rejected(self, Qc, Rc):
        with pytest.raises(ConfigurationError):
            lqr_env([[0.9]], [[1.0]], Qc, Rc)

    def test_shape_and_symmetry_checks(self):
        with pytest.raises(ConfigurationError):
            lqr_env(np.eye(2), [[1.0]], np.eye(2), [[1.0]])
        with pytest.raises(ConfigurationError):
            lqr_env(np.eye(2), np.eye(2), [[1.0, 0.5], [0.0, 1.0]], np.eye(2))

    def test_actions_clipped_to_bound(self):
        env = scalar_env(action_bound=1.0)
        env.reset()
        env.state = np.array([0.0])
        s2, r, _, _ = env.step(np.array([5.0]))
        assert s2[0] == 1.0 and r == pytest.approx(-0.1)

    def test_process_noise(self):
        env = scalar_env(noise_std=0.5, seed=3)
        env.reset()
        env.state = np.array([0.0])
        draws = []
        for _ in range(4000):
            env.state = np.array([0.0])
            draws.append(env.step(np.zeros(1))[0][0])
        assert abs(np.std(draws) - 0.5) < 0.03

    def test_initial_state_in_box(self):
        env = make_env("lqr-2d", seed=1)
        for _ in range(100):
            assert np.all(np.abs(env.reset()) <= 1.0)

    def test_presets(self):
        env = make_env("lqr-2d")
        assert env.spec.state_dim == 2 and env.spec.action_dim == 2
        np.testing.assert_array_equal(env.spec.action_bound, [1.0, 1.0])
        with pytest.raises(ConfigurationError):
            make_env("half-cheetah")


class TestHorizon:
    @pytest.mark.parametrize("name,horizon", [("lqr-scalar", 100), ("pendulum", 200),
                                              ("point-mass", 100)])
    def test_episode_length(self, name, horizon):
        env = make_env(name, seed=0)
        zeros = np.zeros(env.spec.action_dim)
        _, _, terminals = rollout(env, [zeros] * (horizon + 50))
        assert len(terminals) == horizon
        assert terminals[-1] and not any(terminals[:-1])

    def test_step_before_reset(self):
        with pytest.raises(ConfigurationError):
            scalar_env().step(np.zeros(1))


class TestNonlinear:
    def test_pendulum_upright_rest(self):
        env = PendulumEnv()
        env.set_physical_state(0.0, 0.0)
        s2, r, _, _ = env.step(np.zeros(1))
        assert r == 0.0
        np.testing.assert_array_equal(s2, [1.0, 0.0, 0.0])

    def test_pendulum_energy_small_dt(self):
        env = PendulumEnv(dt=1e-3)
        env.set_physical_state(2.0, 0.5)
        e0 = env.energy()
        env.step(np.zeros(1))
        assert abs(env.energy() - e0) < 1e-3

    def test_pendulum_energy_drift_bounded_over_swing(self):
        # semi-implicit Euler is symplectic: energy error oscillates, no drift
        env = PendulumEnv(dt=1e-3, horizon=10**6)
        env.set_physical_state(np.pi - 0.1, 0.0)
        e0 = env.energy()
        errs = []
        for _ in range(3000):
            env.step(np.zeros(1))
            errs.append(env.energy() - e0)
        assert np.max(np.abs(errs)) < 1e-2

    def test_pendulum_angle_wrapped_in_cost(self):
        env = PendulumEnv()
        env.set_physical_state(2 * np.pi, 0.0)
        _, r, _, _ = env.step(np.zeros(1))
        assert r == pytest.approx(0.0, abs=1e-20)
        assert angle_normalize(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)

    def test_point_mass_fixed_point(self):
        env = PointMassEnv()
        env.reset()
        env.state = np.zeros(4)
        s2, r, _, _ = env.step(np.zeros(2))
        assert r == 0.0 and not np.any(s2)

    def test_point_mass_reward(self):
        env = PointMassEnv()
        env.reset()
        env.state = np.array([3.0, 4.0, 0.0, 0.0])
        assert env.step(np.zeros(2))[1] == -5.0


class TestRewardRange:
    def test_empty_width(self):
        assert RewardRange().width == 0.0

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_monotone(self, rewards):
        rr = RewardRange()
        lo, hi = np.inf, -np.inf
        for r in rewards:
            rr.update(r)
            assert rr.r_min <= lo and rr.r_max >= hi
            lo, hi = rr.r_min, rr.r_max
        assert rr.r_min == min(rewards) and rr.r_max == max(rewards)


class TestNoisy:
    def test_first_step_noise_free(self):
        env = NoisyRewards(scalar_env(seed=0), rng=np.random.default_rng(0))
        env.reset()
        _, r, _, info = env.step(np.zeros(1))
        assert r == info["true_reward"]

    def test_noise_std(self):
        # freeze the range so the target std is a single number
        env = NoisyRewards(scalar_env(seed=0), rng=np.random.default_rng(1))
        env.range.update(0.0)
        env.range.update(-10.0)
        env.reset()
        noise = []
        for _ in range(100_000):
            env.env.state = np.array([0.0])
            _, r, _, info = env.step(np.zeros(1))
            noise.append(r - info["true_reward"])
        assert abs(np.std(noise) / 1.0 - 1) < 0.02

    def test_reproducible(self):
        def run():
            env = NoisyRewards(make_env("lqr-scalar", seed=4), rng=np.random.default_rng(4))
            return rollout(env, [np.array([0.3])] * 100)[1]
        assert run() == run()


class TestSparse:
    def test_keep_all_is_identity(self):
        base = rollout(scalar_env(seed=2), [np.array([0.2])] * 100)[1]
        wrapped = rollout(SparseRewards(scalar_env(seed=2), 1.0, np.random.default_rng(0)),
                          [np.array([0.2])] * 100)[1]
        assert base == wrapped

    def test_keep_fraction_and_support(self):
        env = SparseRewards(constant_env(horizon=10**6), 0.5, np.random.default_rng(5))
        env.reset()
        out = np.array([env.step(np.zeros(1))[1] for _ in range(100_000)])
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert abs(out.mean() - 0.5) < 0.01 * 0.5

    @pytest.mark.parametrize("p", [0.0, 1.5])
    def test_bad_probability(self, p):
        with pytest.raises(ConfigurationError):
            SparseRewards(scalar_env(), p)


class TestDelayed:
    def test_zero_delay_identity(self):
        base = rollout(scalar_env(seed=2), [np.array([0.2])] * 100)[1]
        wrapped = rollout(DelayedRewards(scalar_env(seed=2), 0), [np.array([0.2])] * 100)[1]
        assert base == wrapped

    def test_constant_stream(self):
        env = DelayedRewards(constant_env(horizon=30), delay=10)
        _, rewards, _ = rollout(env, [np.zeros(1)] * 30)
        emitted = [r for r, _ in rewards]
        assert emitted[:10] == [0.0] * 10
        assert emitted[10:29] == [1.0] * 19
        assert emitted[29] == 11.0  # last step plus the 10 still queued

    @given(st.integers(0, 150), st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=20)
    def test_episode_return_conserved(self, delay, seed):
        rng = np.random.default_rng(seed)
        env = DelayedRewards(make_env("lqr-scalar", seed=seed), delay=delay)
        _, rewards, _ = rollout(env, rng.uniform(-1, 1, size=(100, 1)))
        emitted, true = zip(*rewards)
        assert sum(emitted) == pytest.approx(sum(true), rel=1e-12)

    def test_queue_cleared_on_reset(self):
        env = DelayedRewards(constant_env(horizon=100), delay=5)
        env.reset()
        for _ in range(3):
            env.step(np.zeros(1))
        env.reset()
        assert len(env.queue) == 0

    def test_negative_delay(self):
        with pytest.raises(ConfigurationError):
            DelayedRewards(scalar_env(), -1)


@pytest.mark.parametrize("kind,params", [("noisy", {}), ("sparse", {}),
                                         ("delayed", {"delay": 10})])
def test_wrappers_preserve_dynamics(kind, params):
    actions = np.random.default_rng(0).uniform(-1, 1, size=(250, 2))
    plain = make_env("lqr-2d", seed=9, noise_std=0.05)
    wrapped = wrap_rewards(make_env("lqr-2d", seed=9, noise_std=0.05), kind,
                           rng=np.random.default_rng(1), **params)
    for env in (plain, wrapped):
        env.reset()
    for a in actions:
        s_plain, _, d1, i1 = plain.step(a)
        s_wrapped, _, d2, i2 = wrapped.step(a)
        assert s_plain.tobytes() == s_wrapped.tobytes()
        assert d1 == d2 and i1 == i2
        if d1:
            plain.reset()
            wrapped.reset()


def test_unknown_wrapper():
    with pytest.raises(ConfigurationError):
        wrap_rewards(scalar_env(), "shuffled")
