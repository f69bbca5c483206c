import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamc.envs import (ENVS, EnvSpec, MountainCar, Pendulum, PointMass, make_env,
                       random_policy_return, wrap_angle)

FLOORS = json.loads((Path(__file__).parent / "fixtures" / "random_floors.json").read_text())


def rollout(env, seed, actions):
    obs = [env.reset(seed)]
    rewards = []
    for a in actions:
        res = env.step(a)
        obs.append(res.observation)
        rewards.append(res.reward)
        if res.terminated or res.truncated:
            break
    return np.array(obs), np.array(rewards)


def test_spec_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        EnvSpec(2, 1, (1.0,), (0.0,), 10)


def test_unknown_env():
    with pytest.raises(ValueError):
        make_env("cartpole")


@pytest.mark.parametrize("name", sorted(ENVS))
def test_reset_is_deterministic(name):
    env = make_env(name)
    assert np.array_equal(env.reset(12), env.reset(12))


@pytest.mark.parametrize("name", sorted(ENVS))
def test_bit_exact_replay(name):
    env = make_env(name)
    actions = np.random.default_rng(0).uniform(-3, 3, size=(300, env.spec.act_dim))
    o1, r1 = rollout(env, 5, actions)
    o2, r2 = rollout(make_env(name), 5, actions)
    assert np.array_equal(o1, o2) and np.array_equal(r1, r2)


@pytest.mark.parametrize("name", sorted(ENVS))
def test_action_dimension_checked(name):
    env = make_env(name)
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(np.zeros(env.spec.act_dim + 1))


@pytest.mark.parametrize("name", sorted(ENVS))
def test_truncation_exactly_at_horizon(name):
    env = make_env(name)
    env.reset(3)
    for t in range(1, env.spec.horizon + 1):
        res = env.step(np.zeros(env.spec.act_dim))
        if res.terminated:
            pytest.skip("terminated before the horizon")
        assert res.truncated == (t == env.spec.horizon)


class TestPendulum:
    def test_reset_ranges(self):
        env = Pendulum()
        for seed in range(50):
            c, s, thdot = env.reset(seed)
            assert -math.pi <= env.theta <= math.pi and -1 <= thdot <= 1
            assert c == pytest.approx(math.cos(env.theta)) and s == pytest.approx(math.sin(env.theta))

    def test_upright_rest_reward_zero(self):
        env = Pendulum()
        env.reset(0)
        env.theta, env.theta_dot = 0.0, 0.0
        assert env.step(np.array([0.0])).reward == 0.0

    def test_hanging_reward(self):
        env = Pendulum()
        env.reset(0)
        env.theta, env.theta_dot = math.pi, 0.0
        assert env.step(np.array([0.0])).reward == pytest.approx(-math.pi ** 2, abs=1e-12)

    def test_one_step_dynamics(self):
        env = Pendulum()
        env.reset(0)
        env.theta, env.theta_dot = 0.3, 0.5
        env.step(np.array([5.0]))  # clipped to 2
        thdot = 0.5 + 15.0 * math.sin(0.3) * 0.05 + 3.0 * 2.0 * 0.05
        assert env.theta_dot == pytest.approx(thdot, abs=1e-15)
        assert env.theta == pytest.approx(0.3 + thdot * 0.05, abs=1e-15)

    def test_never_terminates(self):
        env = Pendulum()
        env.reset(1)
        assert not any(env.step(np.array([2.0])).terminated for _ in range(200))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_speed_and_reward_bounds(self, seed):
        env = Pendulum()
        env.reset(seed)
        rng = np.random.default_rng(seed)
        low, high = env.reward_range
        for _ in range(200):
            res = env.step(rng.uniform(-5, 5, size=1))
            assert -8.0 <= env.theta_dot <= 8.0
            assert low <= res.reward <= high

    def test_wrap_angle(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
        assert wrap_angle(0.25) == pytest.approx(0.25)


class TestPointMass:
    def test_reset_rule(self):
        env = PointMass()
        obs = env.reset(4)
        assert np.array_equal(obs[:4], np.zeros(4))
        assert np.linalg.norm(obs[4:]) == pytest.approx(1.0)

    def test_reward_is_negative_distance(self):
        env = PointMass()
        env.reset(0)
        res = env.step(np.array([1.0, 0.0]))
        assert res.reward == pytest.approx(-np.linalg.norm(env.pos - env.goal))

    def test_at_goal(self):
        env = PointMass()
        env.reset(0)
        env.pos = env.goal.copy()
        res = env.step(np.zeros(2))
        # distance zero: no penalty, goal bonus, episode over
        assert res.terminated and res.reward == pytest.approx(10.0)

    def test_return_bound(self):
        env = PointMass()
        ret = random_policy_return(env, 0, 5)
        assert -400.0 <= ret <= 0.0


class TestMountainCar:
    def test_reset_rule(self):
        env = MountainCar()
        pos, vel = env.reset(0)
        assert -0.6 <= pos <= -0.4 and vel == 0.0

    def test_position_bounds(self):
        env = MountainCar()
        env.reset(2)
        rng = np.random.default_rng(0)
        for _ in range(999):
            res = env.step(rng.uniform(-1, 1, size=1))
            assert -1.2 <= env.pos <= 0.6 and abs(env.vel) <= 0.07
            if res.terminated:
                break

    def test_flag_bonus(self):
        env = MountainCar()
        env.reset(0)
        env.pos, env.vel = 0.449, 0.07
        res = env.step(np.array([1.0]))
        assert res.terminated and res.reward == pytest.approx(100.0 - 0.1)


def test_random_policy_is_deterministic():
    assert random_policy_return(Pendulum(), 3, 2) == random_policy_return(Pendulum(), 3, 2)


def test_random_policy_needs_episodes():
    with pytest.raises(ValueError):
        random_policy_return(Pendulum(), 0, 0)


@pytest.mark.parametrize("name", sorted(FLOORS))
def test_random_floor_fixture(name):
    rec = FLOORS[name]
    value = random_policy_return(make_env(name), rec["seed"], rec["episodes"])
    assert value == rec["mean_return"]


def test_pendulum_floor_in_expected_band():
    assert -1300 <= FLOORS["pendulum"]["mean_return"] <= -1100
