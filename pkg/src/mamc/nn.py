"""Small numpy MLP engine with hand-written reverse-mode gradients.

Parameters of one network live in a flat vector.  Every function here also
accepts a *stack* of parameter vectors with shape ``(..., n_params)``; layer
weights then carry the same leading dimensions and numpy's ``matmul``
broadcasting evaluates a whole ensemble in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

HEADS = ("linear", "bounded")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus output head of a ReLU multilayer perceptron.

    ``bounded`` heads squash the output with ``tanh`` and rescale each
    dimension into ``[action_low, action_high]``.
    """

    widths: tuple[int, ...]
    head: str = "linear"
    action_low: tuple[float, ...] | None = None
    action_high: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least an input and an output layer")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"layer widths must be positive, got {self.widths}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == "bounded":
            if self.action_low is None or self.action_high is None:
                raise ValueError("bounded head requires action bounds")
            low = tuple(float(x) for x in self.action_low)
            high = tuple(float(x) for x in self.action_high)
            if len(low) != self.widths[-1] or len(high) != self.widths[-1]:
                raise ValueError("action bounds must match the output width")
            if any(lo >= hi for lo, hi in zip(low, high)):
                raise ValueError("action_low must be below action_high")
            object.__setattr__(self, "action_low", low)
            object.__setattr__(self, "action_high", high)

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.widths[:-1], self.widths[1:]))

    def head_scale(self, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
        """Centre and half-range of the bounded head, in ``dtype``."""
        low = np.asarray(self.action_low, dtype=dtype)
        high = np.asarray(self.action_high, dtype=dtype)
        return 0.5 * (high + low), 0.5 * (high - low)


def unpack(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split flat parameters into per-layer ``(W, b)`` views.

    ``W`` has shape ``(..., fan_in, fan_out)``.  For stacked parameters the
    bias gets an extra axis so it broadcasts over the batch dimension.
    """
    if params.shape[-1] != spec.n_params:
        raise ValueError(
            f"expected {spec.n_params} parameters, got {params.shape[-1]}")
    lead = params.shape[:-1]
    out = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes():
        n_w = fan_in * fan_out
        w = params[..., offset:offset + n_w].reshape(lead + (fan_in, fan_out))
        offset += n_w
        b = params[..., offset:offset + fan_out]
        if lead:
            b = b.reshape(lead + (1, fan_out))
        offset += fan_out
        out.append((w, b))
    return out


def init_network(spec: MlpSpec, rng: np.random.Generator, n: int | None = None,
                 dtype=np.float64) -> np.ndarray:
    """Uniform fan-in initialisation in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.

    With ``n`` given, returns ``n`` independently drawn networks stacked
    along axis 0.
    """
    lead = () if n is None else (n,)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes():
        bound = 1.0 / math.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=lead + (fan_in * fan_out + fan_out,)))
    return np.concatenate(chunks, axis=-1).astype(dtype, copy=False)


def _check_input(spec: MlpSpec, x: np.ndarray):
    if x.shape[-1] != spec.n_inputs:
        raise ValueError(
            f"input has {x.shape[-1]} features, network expects {spec.n_inputs}")


def _forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Forward pass keeping what the backward pass needs."""
    layers = unpack(spec, params)
    acts = [x]
    h = x
    for w, b in layers[:-1]:
        h = np.matmul(h, w)
        h += b
        np.maximum(h, 0.0, out=h)
        acts.append(h)
    w, b = layers[-1]
    z = np.matmul(h, w)
    z += b
    if spec.head == "bounded":
        mid, half = spec.head_scale(z.dtype)
        t = np.tanh(z)
        return mid + half * t, acts, t
    return z, acts, None


def forward(spec: MlpSpec, params: np.ndarray, x) -> np.ndarray:
    """Evaluate the network; the last axis of ``x`` holds the features."""
    x = np.asarray(x, dtype=params.dtype)
    _check_input(spec, x)
    return _forward(spec, params, x)[0]


def forward_stack(spec: MlpSpec, params: np.ndarray, x: np.ndarray,
                  block: int = 1024) -> np.ndarray:
    """Evaluate each network of ``params (N, P)`` on shared rows ``x (R, d)``.

    Same result as ``forward(spec, params, x[None])`` but processed per
    network in row blocks so intermediates stay cache-resident.
    """
    x = np.asarray(x, dtype=params.dtype)
    _check_input(spec, x)
    n, rows = params.shape[0], x.shape[0]
    out = np.empty((n, rows, spec.n_outputs), dtype=params.dtype)
    for k in range(n):
        layers = unpack(spec, params[k])
        w_out, b_out = layers[-1]
        for start in range(0, rows, block):
            h = x[start:start + block]
            for w, b in layers[:-1]:
                h = h @ w
                h += b
                np.maximum(h, 0.0, out=h)
            z = h @ w_out
            z += b_out
            out[k, start:start + block] = z
    if spec.head == "bounded":
        mid, half = spec.head_scale(out.dtype)
        out = mid + half * np.tanh(out)
    return out


def _sum_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce broadcast leading axes so ``grad`` matches ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _backward(spec: MlpSpec, params: np.ndarray, acts, tanh_out, dout,
              param_grad: bool = True):
    """Backpropagate ``dout`` (gradient w.r.t. the network output).

    Returns ``(grad_params or None, grad_input)``.
    """
    layers = unpack(spec, params)
    lead = params.shape[:-1]
    if spec.head == "bounded":
        _, half = spec.head_scale(tanh_out.dtype)
        dz = dout * half * (1.0 - tanh_out * tanh_out)
    else:
        dz = dout
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        h = acts[k]
        if param_grad:
            dw = _sum_to(np.matmul(np.swapaxes(h, -1, -2), dz), lead + w.shape[-2:])
            db = _sum_to(dz.sum(axis=-2), lead + (w.shape[-1],))
            grads.append((dw, db))
        dh = np.matmul(dz, np.swapaxes(w, -1, -2))
        if k > 0:
            dh *= acts[k] > 0
        dz = dh
    if not param_grad:
        return None, dz
    flat = []
    for dw, db in reversed(grads):
        flat.append(dw.reshape(lead + (-1,)))
        flat.append(db.reshape(lead + (-1,)))
    return np.concatenate(flat, axis=-1), dz


def critic_loss_grad(spec: MlpSpec, params: np.ndarray, inputs, targets):
    """Mean squared error to ``targets`` and its exact parameter gradient.

    Stacked case: ``params (N, P)``, ``inputs (N, B, d)``, ``targets (N, B)``
    gives per-network losses ``(N,)`` and gradients ``(N, P)``.
    """
    inputs = np.asarray(inputs, dtype=params.dtype)
    targets = np.asarray(targets, dtype=params.dtype)
    _check_input(spec, inputs)
    if inputs.ndim < 2 or inputs.shape[-2] == 0:
        raise ValueError("critic loss needs a non-empty batch")
    if targets.shape != inputs.shape[:-1]:
        raise ValueError(
            f"targets shape {targets.shape} does not match batch {inputs.shape[:-1]}")
    if spec.n_outputs != 1:
        raise ValueError("critic networks must have a single output")
    q, acts, t = _forward(spec, params, inputs)
    err = q[..., 0] - targets
    n = inputs.shape[-2]
    loss = np.mean(err * err, axis=-1)
    grad, _ = _backward(spec, params, acts, t, (2.0 / n) * err[..., None])
    return loss, grad


def actor_objective_grad(actor_spec: MlpSpec, actor_params: np.ndarray,
                         critic_spec: MlpSpec, critic_params: np.ndarray, states):
    """Objective ``-mean Q(s, pi(s))`` and its gradient w.r.t. the actor.

    The critic is only read.  Stacked actors ``(N, P)`` with states
    ``(N, B, obs)`` may share one critic ``(P_c,)``.
    """
    states = np.asarray(states, dtype=actor_params.dtype)
    _check_input(actor_spec, states)
    if states.ndim < 2 or states.shape[-2] == 0:
        raise ValueError("actor objective needs a non-empty batch")
    if critic_spec.n_inputs != actor_spec.n_inputs + actor_spec.n_outputs:
        raise ValueError("critic input width must equal state dim + action dim")
    actions, a_acts, a_t = _forward(actor_spec, actor_params, states)
    sa = np.concatenate([states, actions], axis=-1)
    q, c_acts, c_t = _forward(critic_spec, critic_params, sa)
    n = states.shape[-2]
    objective = -np.mean(q[..., 0], axis=-1)
    dq = np.full(q.shape, -1.0 / n, dtype=q.dtype)
    _, d_sa = _backward(critic_spec, critic_params, c_acts, c_t, dq, param_grad=False)
    d_action = d_sa[..., actor_spec.n_inputs:]
    grad, _ = _backward(actor_spec, actor_params, a_acts, a_t, d_action)
    return objective, grad


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8

    @classmethod
    def fresh(cls, params: np.ndarray, learning_rate: float, **kw) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), learning_rate, **kw)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState):
    """One bias-corrected Adam update; returns new params and new state."""
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise ValueError("params, grad and optimizer state must share a shape")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    b1, b2 = state.beta1, state.beta2
    step = state.step_count + 1
    m = b1 * state.first_moment + (1.0 - b1) * grad
    v = b2 * state.second_moment + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** step)
    v_hat = v / (1.0 - b2 ** step)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon_stab)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=step)


def soft_update(target: np.ndarray, source: np.ndarray, tau: float) -> np.ndarray:
    """Polyak averaging ``tau * source + (1 - tau) * target``."""
    if target.shape != source.shape:
        raise ValueError("target and source shapes differ")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return tau * source + (1.0 - tau) * target


def finite_difference_grad(loss: Callable[[np.ndarray], float], params: np.ndarray,
                           h: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x + h e_k) - f(x - h e_k)) / 2h`` per coordinate."""
    if h <= 0:
        raise ValueError("step h must be positive")
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    flat = grad.reshape(-1)
    for k in range(params.size):
        e = np.zeros(params.size)
        e[k] = h
        e = e.reshape(params.shape)
        flat[k] = (loss(params + e) - loss(params - e)) / (2.0 * h)
    return grad


def finite_difference_grad_stacked(loss: Callable[[np.ndarray], np.ndarray],
                                   params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Same as :func:`finite_difference_grad` for a 1-D parameter vector, but
    evaluates all ``2P`` perturbed copies in one vectorised call.

    ``loss`` must map stacked parameters ``(K, P)`` to losses ``(K,)``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    n = params.shape[-1]
    eye = np.eye(n) * h
    plus = loss(params[None, :] + eye)
    minus = loss(params[None, :] - eye)
    return (plus - minus) / (2.0 * h)
