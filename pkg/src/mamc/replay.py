"""Fixed-capacity ring buffer of transitions with uniform sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminated: bool


@dataclass(frozen=True)
class MiniBatch:
    """Columnar batch; ``terminated`` is stored as 0.0 / 1.0."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminated: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.states = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, act_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, obs_dim))
        self.terminated = np.zeros(self.capacity)
        self.size = 0
        self.write_cursor = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> "ReplayBuffer":
        state = np.asarray(t.state, dtype=np.float64).reshape(-1)
        action = np.asarray(t.action, dtype=np.float64).reshape(-1)
        next_state = np.asarray(t.next_state, dtype=np.float64).reshape(-1)
        if state.shape[0] != self.obs_dim or next_state.shape[0] != self.obs_dim:
            raise ValueError(f"states must have {self.obs_dim} entries")
        if action.shape[0] != self.act_dim:
            raise ValueError(f"actions must have {self.act_dim} entries")
        i = self.write_cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = t.reward
        self.next_states[i] = next_state
        self.terminated[i] = float(t.terminated)
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return self

    def _ordered(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.write_cursor) % self.capacity

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [Transition(self.states[i].copy(), self.actions[i].copy(),
                           float(self.rewards[i]), self.next_states[i].copy(),
                           bool(self.terminated[i])) for i in self._ordered()]

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return rng.integers(0, self.size, size=n)

    def gather(self, idx: np.ndarray) -> MiniBatch:
        return MiniBatch(self.states[idx], self.actions[idx], self.rewards[idx],
                         self.next_states[idx], self.terminated[idx])

    def sample(self, rng: np.random.Generator, n: int) -> MiniBatch:
        """``n`` transitions drawn uniformly with replacement."""
        return self.gather(self.sample_indices(rng, n))
