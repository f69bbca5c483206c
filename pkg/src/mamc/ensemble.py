"""Quantile-based value estimation over actor and critic ensembles.

Shapes used throughout: actor stacks ``(N_A, P_a)``, critic stacks
``(N_C, P_c)``, states ``(..., B, obs)``.  Critic evaluations come back with
the critic axis first, ``(N_C, ..., N_A, B)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import MlpSpec, forward, forward_stack


@dataclass(frozen=True)
class EnsembleConfig:
    q: float = 0.2
    gamma: float = 0.99
    target_noise_std: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.target_noise_std < 0:
            raise ValueError("target_noise_std must be non-negative")


@dataclass
class CriticEnsemble:
    spec: MlpSpec
    params: np.ndarray   # (N_C, P) live critics
    targets: np.ndarray  # (N_C, P) target critics

    def __post_init__(self):
        if self.params.ndim != 2 or self.params.shape[0] < 1:
            raise ValueError("critic ensemble needs at least one critic")
        if self.targets.shape != self.params.shape:
            raise ValueError("every critic needs exactly one target")

    def __len__(self):
        return self.params.shape[0]


@dataclass
class ActorEnsemble:
    spec: MlpSpec
    params: np.ndarray  # (N_A, P)

    def __post_init__(self):
        if self.params.ndim != 2 or self.params.shape[0] < 1:
            raise ValueError("actor ensemble needs at least one actor")

    def __len__(self):
        return self.params.shape[0]


def quantile(values, q: float, axis: int = -1):
    """Linear interpolation between order statistics.

    Sorted ``x_0 <= ... <= x_{n-1}``, ``h = q (n - 1)``:
    ``x_floor(h) + (h - floor(h)) (x_ceil(h) - x_floor(h))``.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    x = np.asarray(values)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    x = np.sort(x, axis=axis)
    n = x.shape[axis]
    if n == 0:
        raise ValueError("quantile of an empty set")
    h = q * (n - 1)
    lo = math.floor(h)
    hi = min(math.ceil(h), n - 1)
    x_lo = np.take(x, lo, axis=axis)
    if hi == lo:
        out = x_lo
    else:
        out = x_lo + (h - lo) * (np.take(x, hi, axis=axis) - x_lo)
    return float(out) if np.ndim(out) == 0 else out


def median(values, axis: int = -1):
    return quantile(values, 0.5, axis=axis)


def critic_values(critic_spec: MlpSpec, critic_params: np.ndarray,
                  states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Evaluate every critic of the stack on every ``(state, action)`` pair.

    ``states`` broadcast against ``actions``; result ``(N_C,) + lead``.
    """
    lead = np.broadcast_shapes(states.shape[:-1], actions.shape[:-1])
    s = np.broadcast_to(states, lead + states.shape[-1:])
    a = np.broadcast_to(actions, lead + actions.shape[-1:])
    sa = np.concatenate([s, a], axis=-1).reshape(-1, critic_spec.n_inputs)
    q = forward_stack(critic_spec, critic_params, sa)
    return q[..., 0].reshape((critic_params.shape[0],) + lead)


def perturbed_actions(actor_spec: MlpSpec, actor_params: np.ndarray, states: np.ndarray,
                      noise_std: float, rng: np.random.Generator | None,
                      noise_clip: float | None = None) -> np.ndarray:
    """Actions of every actor on ``states`` plus Gaussian noise, clipped to bounds.

    Result ``(..., N_A, B, act)``; one fresh noise draw per entry.
    """
    actions = forward(actor_spec, actor_params, states[..., None, :, :])
    return add_target_noise(actions, actor_spec, noise_std, rng, noise_clip)


def add_target_noise(actions: np.ndarray, actor_spec: MlpSpec, noise_std: float,
                     rng: np.random.Generator | None,
                     noise_clip: float | None = None) -> np.ndarray:
    """Gaussian perturbation (optionally clipped) followed by clipping to bounds."""
    dtype = actions.dtype
    if noise_std > 0:
        eps = noise_std * rng.standard_normal(actions.shape)
        if noise_clip is not None:
            np.clip(eps, -noise_clip, noise_clip, out=eps)
        actions = actions + eps.astype(dtype, copy=False)
    return np.clip(actions, np.asarray(actor_spec.action_low, dtype),
                   np.asarray(actor_spec.action_high, dtype))


def actor_target_values(actors: ActorEnsemble, critic_targets: np.ndarray,
                        critic_spec: MlpSpec, next_states: np.ndarray,
                        cfg: EnsembleConfig, rng: np.random.Generator,
                        clean_actions: np.ndarray | None = None) -> np.ndarray:
    """Per-actor values: q-quantile over target critics at noisy actions.

    ``next_states (..., B, obs)`` -> ``(..., N_A, B)``.  ``clean_actions``
    may carry the noiseless actor outputs ``(..., N_A, B, act)`` when the
    caller evaluates the same actors repeatedly; noise is always fresh.
    """
    if clean_actions is None:
        clean_actions = forward(actors.spec, actors.params, next_states[..., None, :, :])
    a = add_target_noise(clean_actions, actors.spec, cfg.target_noise_std, rng)
    q = critic_values(critic_spec, critic_targets, next_states[..., None, :, :], a)
    return quantile(q, cfg.q, axis=0)


def ensemble_target_values(actors: ActorEnsemble, critic_targets: np.ndarray,
                           critic_spec: MlpSpec, next_states: np.ndarray,
                           cfg: EnsembleConfig, rng: np.random.Generator,
                           clean_actions: np.ndarray | None = None) -> np.ndarray:
    """Median over actors of the per-actor target values, ``(..., B)``."""
    per_actor = actor_target_values(actors, critic_targets, critic_spec, next_states,
                                    cfg, rng, clean_actions)
    return median(per_actor, axis=-2)


def actor_target_value(actor_spec: MlpSpec, actor_params: np.ndarray,
                       critic_spec: MlpSpec, critic_targets: np.ndarray, next_state,
                       cfg: EnsembleConfig, rng: np.random.Generator) -> float:
    """Single actor, single state version of :func:`actor_target_values`."""
    actors = ActorEnsemble(actor_spec, np.atleast_2d(actor_params))
    s = np.asarray(next_state, dtype=np.float64).reshape(1, -1)
    return float(actor_target_values(actors, np.atleast_2d(critic_targets), critic_spec,
                                     s, cfg, rng)[0, 0])


def ensemble_target_value(actors: ActorEnsemble, critic_targets: np.ndarray,
                          critic_spec: MlpSpec, next_state, cfg: EnsembleConfig,
                          rng: np.random.Generator) -> float:
    s = np.asarray(next_state, dtype=np.float64).reshape(1, -1)
    return float(ensemble_target_values(actors, np.atleast_2d(critic_targets), critic_spec,
                                        s, cfg, rng)[0])


def td_target(reward, terminated, v_next, gamma: float):
    """``r + gamma (1 - terminated) v_next``; truncation still bootstraps.

    Computed in the floating type of ``v_next`` (float64 for plain numbers).
    """
    v = np.asarray(v_next)
    dtype = v.dtype if np.issubdtype(v.dtype, np.floating) else np.dtype(np.float64)
    mask = 1.0 - np.asarray(terminated, dtype=dtype)
    out = np.asarray(reward, dtype=dtype) + dtype.type(gamma) * mask * v.astype(dtype, copy=False)
    return float(out) if out.ndim == 0 else out


def ensemble_state_values(actors: ActorEnsemble, critic_spec: MlpSpec,
                          critic_params: np.ndarray, states: np.ndarray, q: float):
    """Noiseless ensemble values of every actor on ``states (B, obs)``.

    Returns ``(values (N_A, B), critic_q (N_C, N_A, B))``.
    """
    a = perturbed_actions(actors.spec, actors.params, states, 0.0, None)
    qs = critic_values(critic_spec, critic_params, states[None, :, :], a)
    return quantile(qs, q, axis=0), qs


def ensemble_state_value(actor_spec: MlpSpec, actor_params: np.ndarray,
                         critic_spec: MlpSpec, critic_params: np.ndarray,
                         state, q: float) -> float:
    actors = ActorEnsemble(actor_spec, np.atleast_2d(actor_params))
    s = np.asarray(state, dtype=np.float64).reshape(1, -1)
    v, _ = ensemble_state_values(actors, critic_spec, np.atleast_2d(critic_params), s, q)
    return float(v[0, 0])
