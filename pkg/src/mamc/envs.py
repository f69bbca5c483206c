"""Seedable classic-control environments used in place of MuJoCo.

All three share the same surface: ``reset(seed) -> obs`` and
``step(action) -> StepResult``.  Actions are clipped into bounds inside
``step`` so agents can hand over raw noisy actions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    act_dim: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    horizon: int

    def __post_init__(self):
        if len(self.action_low) != self.act_dim or len(self.action_high) != self.act_dim:
            raise ValueError("action bounds must have act_dim entries")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("action_low must be strictly below action_high")


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


def wrap_angle(theta: float) -> float:
    """Map an angle into ``(-pi, pi]``."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


class Env:
    spec: EnvSpec
    name: str
    reward_range: tuple[float, float]

    def __init__(self):
        self.t = 0

    def _clip_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape[0] != self.spec.act_dim:
            raise ValueError(
                f"{self.name} expects {self.spec.act_dim} action dims, got {a.shape[0]}")
        return np.clip(a, self.spec.action_low, self.spec.action_high)

    def _finish(self, obs, reward, terminated) -> StepResult:
        self.t += 1
        return StepResult(obs, float(reward), bool(terminated), self.t >= self.spec.horizon)

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> StepResult:
        raise NotImplementedError


class Pendulum(Env):
    """Torque-limited pendulum swing-up; ``theta = 0`` is upright."""

    name = "pendulum"
    g, m, l, dt = 10.0, 1.0, 1.0, 0.05
    max_speed, max_torque = 8.0, 2.0
    reward_range = (-(math.pi ** 2 + 0.1 * 64.0 + 0.001 * 4.0), 0.0)

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(3, 1, (-2.0,), (2.0,), 200)
        self.theta = 0.0
        self.theta_dot = 0.0

    def observation(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.theta = float(rng.uniform(-math.pi, math.pi))
        self.theta_dot = float(rng.uniform(-1.0, 1.0))
        self.t = 0
        return self.observation()

    def step(self, action) -> StepResult:
        u = float(self._clip_action(action)[0])
        th, thdot = self.theta, self.theta_dot
        reward = -(wrap_angle(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2)
        thdot = thdot + (3.0 * self.g / (2.0 * self.l)) * math.sin(th) * self.dt \
            + (3.0 / (self.m * self.l ** 2)) * u * self.dt
        thdot = min(max(thdot, -self.max_speed), self.max_speed)
        self.theta = th + thdot * self.dt
        self.theta_dot = thdot
        return self._finish(self.observation(), reward, False)


class PointMass(Env):
    """2-D point mass steered towards a goal on the unit circle."""

    name = "pointmass"
    goal_radius = 0.05
    goal_bonus = 10.0
    arena = 2.0
    # farthest box corner from any goal on the unit circle: 2*sqrt(2) + 1
    reward_range = (-(2.0 * math.sqrt(2.0) + 1.0), goal_bonus)

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(6, 2, (-1.0, -1.0), (1.0, 1.0), 200)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.array([1.0, 0.0])

    def observation(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel, self.goal])

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        angle = rng.uniform(-math.pi, math.pi)
        self.goal = np.array([math.cos(angle), math.sin(angle)])
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.t = 0
        return self.observation()

    def step(self, action) -> StepResult:
        a = self._clip_action(action)
        self.vel = np.clip(0.95 * self.vel + 0.1 * a, -1.0, 1.0)
        self.pos = np.clip(self.pos + 0.05 * self.vel, -self.arena, self.arena)
        dist = float(np.linalg.norm(self.pos - self.goal))
        terminated = dist < self.goal_radius
        reward = -dist + (self.goal_bonus if terminated else 0.0)
        return self._finish(self.observation(), reward, terminated)


class MountainCar(Env):
    """Continuous mountain car with a +100 bonus at the flag."""

    name = "mountaincar"
    min_pos, max_pos, goal_pos = -1.2, 0.6, 0.45
    max_speed = 0.07
    reward_range = (-0.1, 100.0)

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(2, 1, (-1.0,), (1.0,), 999)
        self.pos = -0.5
        self.vel = 0.0

    def observation(self) -> np.ndarray:
        return np.array([self.pos, self.vel])

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.pos = float(rng.uniform(-0.6, -0.4))
        self.vel = 0.0
        self.t = 0
        return self.observation()

    def step(self, action) -> StepResult:
        a = float(self._clip_action(action)[0])
        v = self.vel + 0.0015 * a - 0.0025 * math.cos(3.0 * self.pos)
        self.vel = min(max(v, -self.max_speed), self.max_speed)
        self.pos = min(max(self.pos + self.vel, self.min_pos), self.max_pos)
        terminated = self.pos >= self.goal_pos
        reward = -0.1 * a * a + (100.0 if terminated else 0.0)
        return self._finish(self.observation(), reward, terminated)


ENVS = {"pendulum": Pendulum, "pointmass": PointMass, "mountaincar": MountainCar}


def make_env(name: str) -> Env:
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None


def random_policy_return(env: Env, seed: int, episodes: int) -> float:
    """Mean undiscounted return of uniformly random actions."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = np.random.default_rng(seed)
    low = np.asarray(env.spec.action_low)
    high = np.asarray(env.spec.action_high)
    total = 0.0
    for _ in range(episodes):
        env.reset(int(rng.integers(2 ** 31)))
        ret = 0.0
        while True:
            res = env.step(rng.uniform(low, high))
            ret += res.reward
            if res.terminated or res.truncated:
                break
        total += ret
    return total / episodes
