"""MAMC training loop and the TD3-SMR baseline.

One iteration of the outer loop is one environment step: critics learn
(with M-fold sample reuse), actors learn guided by the critics in turn, the
exploration set is chosen by crowded comparison and one of its actors acts,
and finally the best-skill actor is recorded.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ConfigError, TrainConfig
from .ensemble import (ActorEnsemble, EnsembleConfig, add_target_noise,
                       critic_values, ensemble_target_values, td_target)
from .envs import Env, make_env
from .nn import (AdamState, MlpSpec, actor_objective_grad, adam_step,
                 critic_loss_grad, forward, init_network, soft_update)
from .replay import MiniBatch, ReplayBuffer, Transition
from .select import (FactorScores, factor_scores, n_selected, select_exploit,
                     select_explore)

STREAMS = ("init", "env", "replay", "explore", "target", "selection", "eval")


@dataclass
class MetricsRow:
    step: int
    train_return: float | None = None
    eval_mean: float | None = None
    eval_std: float | None = None
    best_actor: int | None = None
    selected_set: tuple[int, ...] | None = None
    wall_ms: float | None = None


@dataclass
class RunResult:
    metrics: list[MetricsRow]
    actor_spec: MlpSpec
    actor_params: np.ndarray
    best_actor_index: int


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


def network_specs(env: Env, hidden: tuple[int, ...]) -> tuple[MlpSpec, MlpSpec]:
    s = env.spec
    actor = MlpSpec((s.obs_dim, *hidden, s.act_dim), "bounded", s.action_low, s.action_high)
    critic = MlpSpec((s.obs_dim + s.act_dim, *hidden, 1))
    return actor, critic


def evaluate(actor_spec: MlpSpec, actor_params: np.ndarray, env: Env, episodes: int,
             seed: int) -> tuple[float, float]:
    """Noiseless rollouts from reset seeds ``seed, seed+1, ...``; mean and std of returns."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    returns = []
    for k in range(episodes):
        obs = env.reset(seed + k)
        total = 0.0
        while True:
            res = env.step(forward(actor_spec, actor_params, obs))
            total += res.reward
            obs = res.observation
            if res.terminated or res.truncated:
                break
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))


class _Base:
    """Environment interaction, replay, and bookkeeping shared by both learners."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.precision)
        self.rngs = make_streams(cfg.master_seed)
        self.env = make_env(cfg.env_name)
        self.eval_env = make_env(cfg.env_name)
        self.eval_seed = int(self.rngs["eval"].integers(2 ** 31))
        self.actor_spec, self.critic_spec = network_specs(self.env, cfg.hidden_widths)
        spec = self.env.spec
        self.buffer = ReplayBuffer(min(cfg.buffer_capacity, cfg.total_env_steps),
                                   spec.obs_dim, spec.act_dim)
        self.action_low = np.asarray(spec.action_low)
        self.action_high = np.asarray(spec.action_high)
        self.env_steps = 0
        self.obs = self.env.reset(self._episode_seed())
        self.episode_return = 0.0
        self.best_actor_index = 0
        self.selected: tuple[int, ...] = ()

    def _episode_seed(self) -> int:
        return int(self.rngs["env"].integers(2 ** 31))

    def _interact(self, action) -> float | None:
        """Apply one action, store the transition; returns the episode return on episode end."""
        action = np.clip(np.asarray(action, dtype=np.float64), self.action_low, self.action_high)
        res = self.env.step(action)
        self.buffer.push(Transition(self.obs, action, res.reward, res.observation,
                                    res.terminated))
        self.env_steps += 1
        self.episode_return += res.reward
        if res.terminated or res.truncated:
            finished = self.episode_return
            self.obs = self.env.reset(self._episode_seed())
            self.episode_return = 0.0
            return finished
        self.obs = res.observation
        return None

    def random_step(self) -> float | None:
        a = self.rngs["explore"].uniform(self.action_low, self.action_high)
        return self._interact(a)

    def warmup(self, on_step: Callable[[float | None], None] | None = None):
        """Uniform-random actions into the buffer; no learning."""
        for _ in range(self.cfg.warmup_steps):
            ret = self.random_step()
            if on_step:
                on_step(ret)

    def noisy_action(self, params: np.ndarray) -> np.ndarray:
        a = forward(self.actor_spec, params, self.obs)
        sigma = self.cfg.exploration_noise_std
        if sigma > 0:
            a = a + sigma * self.rngs["explore"].standard_normal(a.shape)
        return a

    def sample_stack(self, n_batches: int):
        """``n_batches`` independent mini-batches stacked on axis 0."""
        idx = self.buffer.sample_indices(self.rngs["replay"], n_batches * self.cfg.batch_size)
        batch = self.buffer.gather(idx.reshape(n_batches, self.cfg.batch_size))
        if self.dtype == batch.states.dtype:
            return batch
        return MiniBatch(*(x.astype(self.dtype) for x in (batch.states, batch.actions,
                                                          batch.rewards, batch.next_states,
                                                          batch.terminated)))

    def best_params(self) -> np.ndarray:
        raise NotImplementedError

    def evaluate_best(self) -> tuple[float, float]:
        return evaluate(self.actor_spec, self.best_params(), self.eval_env,
                        self.cfg.eval_episodes, self.eval_seed)


class MAMCAgent(_Base):
    def __init__(self, cfg: TrainConfig):
        super().__init__(cfg)
        rng = self.rngs["init"]
        self.actors = init_network(self.actor_spec, rng, cfg.n_actors, self.dtype)
        self.critics = init_network(self.critic_spec, rng, cfg.n_critics, self.dtype)
        self.targets = self.critics.copy()
        self.actor_opt = AdamState.fresh(self.actors, cfg.actor_lr)
        self.critic_opt = AdamState.fresh(self.critics, cfg.critic_lr)
        self.ens_cfg = EnsembleConfig(cfg.q, cfg.gamma, cfg.target_noise_std)
        self.critic_cursor = 1
        self.scores: FactorScores | None = None
        self.explore_count = 0
        self.last_targets: np.ndarray | None = None

    @property
    def actor_ensemble(self) -> ActorEnsemble:
        return ActorEnsemble(self.actor_spec, self.actors)

    def best_params(self) -> np.ndarray:
        return self.actors[self.best_actor_index]

    def compute_targets(self, batch, clean_actions=None) -> np.ndarray:
        """TD-targets ``(N_C, B)`` for stacked critic batches, from current targets and actors."""
        v = ensemble_target_values(self.actor_ensemble, self.targets, self.critic_spec,
                                   batch.next_states, self.ens_cfg, self.rngs["target"],
                                   clean_actions)
        return td_target(batch.rewards, batch.terminated, v, self.cfg.gamma)

    def train_critics_once(self):
        if len(self.buffer) == 0:
            return
        cfg = self.cfg
        batch = self.sample_stack(cfg.n_critics)
        sa = np.concatenate([batch.states, batch.actions], axis=-1)
        # actors are frozen during this phase; only the target noise is redrawn
        clean = forward(self.actor_spec, self.actors, batch.next_states[:, None])
        for _ in range(cfg.smr_ratio):
            y = self.compute_targets(batch, clean)
            self.last_targets = y
            _, grad = critic_loss_grad(self.critic_spec, self.critics, sa, y)
            self.critics, self.critic_opt = adam_step(self.critics, grad, self.critic_opt)
            self.targets = soft_update(self.targets, self.critics, cfg.tau)

    def train_actors_once(self):
        if len(self.buffer) == 0:
            return
        cfg = self.cfg
        states = self.sample_stack(cfg.n_actors).states
        for _ in range(cfg.smr_ratio):
            guide = self.critics[self.critic_cursor - 1]
            _, grad = actor_objective_grad(self.actor_spec, self.actors, self.critic_spec,
                                           guide, states)
            self.actors, self.actor_opt = adam_step(self.actors, grad, self.actor_opt)
            self.critic_cursor = self.critic_cursor % cfg.n_critics + 1

    def refresh_scores(self):
        states = self.sample_stack(1).states[0]
        self.scores = factor_scores(self.actor_ensemble, self.critic_spec, self.critics,
                                    states, self.cfg.q, batch_id=self.env_steps)

    def explore_step(self) -> float | None:
        if len(self.buffer) == 0:
            self.selected = tuple(range(self.cfg.n_actors))
        elif self.scores is None or self.explore_count % self.cfg.select_every == 0:
            self.refresh_scores()
            self.selected = tuple(select_explore(self.scores, n_selected(self.cfg.n_actors)))
        self.explore_count += 1
        pick = self.selected[int(self.rngs["selection"].integers(len(self.selected)))]
        return self._interact(self.noisy_action(self.actors[pick]))

    def update_best(self):
        if self.scores is not None:
            self.best_actor_index = select_exploit(self.scores)

    def learn_step(self) -> float | None:
        self.train_critics_once()
        self.train_actors_once()
        ret = self.explore_step()
        self.update_best()
        return ret

    def after_warmup(self):
        if len(self.buffer) > 0:
            self.refresh_scores()
            self.update_best()


class TD3SMRAgent(_Base):
    """Single actor with target actor, twin critics, clipped target noise, delayed updates."""

    def __init__(self, cfg: TrainConfig):
        super().__init__(cfg)
        rng = self.rngs["init"]
        self.actor = init_network(self.actor_spec, rng, 1, self.dtype)
        self.critics = init_network(self.critic_spec, rng, cfg.n_critics, self.dtype)
        self.actor_target = self.actor.copy()
        self.targets = self.critics.copy()
        self.actor_opt = AdamState.fresh(self.actor, cfg.actor_lr)
        self.critic_opt = AdamState.fresh(self.critics, cfg.critic_lr)
        self.critic_updates = 0
        self.actor_updates = 0
        self.selected = (0,)

    def best_params(self) -> np.ndarray:
        return self.actor[0]

    def compute_targets(self, batch) -> np.ndarray:
        cfg = self.cfg
        a = forward(self.actor_spec, self.actor_target[0], batch.next_states)
        a = add_target_noise(a, self.actor_spec, cfg.target_noise_std, self.rngs["target"],
                             cfg.noise_clip)
        q = critic_values(self.critic_spec, self.targets, batch.next_states, a)
        return td_target(batch.rewards, batch.terminated, q.min(axis=0), cfg.gamma)

    def train_once(self):
        if len(self.buffer) == 0:
            return
        cfg = self.cfg
        batch = self.sample_stack(1)
        batch = type(batch)(*(x[0] for x in (batch.states, batch.actions, batch.rewards,
                                            batch.next_states, batch.terminated)))
        n_c = cfg.n_critics
        sa = np.broadcast_to(np.concatenate([batch.states, batch.actions], axis=-1),
                             (n_c, len(batch), self.critic_spec.n_inputs))
        for _ in range(cfg.smr_ratio):
            y = self.compute_targets(batch)
            _, grad = critic_loss_grad(self.critic_spec, self.critics, sa,
                                       np.broadcast_to(y, (n_c, len(batch))))
            self.critics, self.critic_opt = adam_step(self.critics, grad, self.critic_opt)
            self.critic_updates += 1
            if self.critic_updates % cfg.delayed_update == 0:
                _, grad = actor_objective_grad(self.actor_spec, self.actor, self.critic_spec,
                                               self.critics[0], batch.states[None])
                self.actor, self.actor_opt = adam_step(self.actor, grad, self.actor_opt)
                self.actor_updates += 1
                self.targets = soft_update(self.targets, self.critics, cfg.tau)
                self.actor_target = soft_update(self.actor_target, self.actor, cfg.tau)

    def learn_step(self) -> float | None:
        self.train_once()
        return self._interact(self.noisy_action(self.actor[0]))

    def after_warmup(self):
        pass


def make_agent(cfg: TrainConfig):
    cfg.validate()
    return MAMCAgent(cfg) if cfg.algorithm == "mamc" else TD3SMRAgent(cfg)


def run(cfg: TrainConfig, on_row: Callable[[MetricsRow], None] | None = None,
        wall_clock: bool = False) -> RunResult:
    """Warm up, then learn until ``total_env_steps``; returns metrics and the best actor.

    A row is logged whenever an episode ends or the step count hits a
    multiple of ``eval_interval``.  ``wall_ms`` is only filled with
    ``wall_clock=True`` so that default output is reproducible byte for byte.
    """
    agent = make_agent(cfg)
    rows: list[MetricsRow] = []
    start = time.perf_counter()

    def log(ret: float | None, learning: bool):
        step = agent.env_steps
        do_eval = step % cfg.eval_interval == 0
        if ret is None and not do_eval:
            return
        row = MetricsRow(step, train_return=ret, best_actor=agent.best_actor_index,
                         selected_set=agent.selected if learning else None)
        if do_eval:
            row.eval_mean, row.eval_std = agent.evaluate_best()
        if wall_clock:
            row.wall_ms = (time.perf_counter() - start) * 1000.0
        rows.append(row)
        if on_row:
            on_row(row)

    agent.warmup(lambda ret: log(ret, learning=False))
    agent.after_warmup()
    while agent.env_steps < cfg.total_env_steps:
        log(agent.learn_step(), learning=True)
    return RunResult(rows, agent.actor_spec, agent.best_params().copy(),
                     agent.best_actor_index)


def run_td3_smr(cfg: TrainConfig, on_row=None, wall_clock: bool = False) -> RunResult:
    """Baseline run; ``cfg`` should carry the TD3-SMR column
    (``parse_config(overrides={"algorithm": "td3smr"})``)."""
    if cfg.algorithm != "td3smr":
        raise ConfigError("run_td3_smr needs a config with algorithm = td3smr")
    return run(cfg, on_row, wall_clock)
