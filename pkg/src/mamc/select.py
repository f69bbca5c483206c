"""Actor scoring (skill / creativity) and Pareto-based actor selection.

Both objectives are maximised.  Ranking follows the NSGA-II crowded
comparison: lower front first, then larger crowding distance, then lower
actor index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import ActorEnsemble, ensemble_state_values
from .nn import MlpSpec


@dataclass(frozen=True)
class FactorScores:
    skill: np.ndarray       # (N_A,)
    creativity: np.ndarray  # (N_A,)
    batch_id: int | None = None

    def __post_init__(self):
        if self.skill.shape != self.creativity.shape or self.skill.ndim != 1:
            raise ValueError("skill and creativity must be 1-D and equally long")
        if len(self.skill) == 0:
            raise ValueError("scores need at least one actor")

    def points(self) -> np.ndarray:
        return np.stack([self.skill, self.creativity], axis=1)


@dataclass(frozen=True)
class ParetoRanking:
    front_index: np.ndarray
    crowding_distance: np.ndarray


def factor_scores(actors: ActorEnsemble, critic_spec: MlpSpec, critic_params: np.ndarray,
                  states: np.ndarray, q: float, batch_id: int | None = None) -> FactorScores:
    """Skill and creativity of every actor on one shared batch of states."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("factor evaluation needs a non-empty (B, obs) batch")
    values, qs = ensemble_state_values(actors, critic_spec, critic_params, states, q)
    skill = values.mean(axis=-1)
    creativity = np.abs(qs - values[None]).mean(axis=(0, 2))
    return FactorScores(skill, creativity, batch_id)


def skill(actor_spec: MlpSpec, actor_params, critic_spec: MlpSpec, critic_params,
          states, q: float) -> float:
    actors = ActorEnsemble(actor_spec, np.atleast_2d(actor_params))
    return float(factor_scores(actors, critic_spec, np.atleast_2d(critic_params),
                               states, q).skill[0])


def creativity(actor_spec: MlpSpec, actor_params, critic_spec: MlpSpec, critic_params,
               states, q: float) -> float:
    actors = ActorEnsemble(actor_spec, np.atleast_2d(actor_params))
    return float(factor_scores(actors, critic_spec, np.atleast_2d(critic_params),
                               states, q).creativity[0])


def dominates(u, v) -> bool:
    """``u`` is at least as good everywhere and strictly better somewhere."""
    return all(a >= b for a, b in zip(u, v)) and any(a > b for a, b in zip(u, v))


def nondominated_sort(points) -> list[list[int]]:
    """Fast non-dominated sorting; fronts list indices in ascending order."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        raise ValueError("nothing to sort")
    ge = np.all(pts[:, None, :] >= pts[None, :, :], axis=-1)
    gt = np.any(pts[:, None, :] > pts[None, :, :], axis=-1)
    dom = ge & gt  # dom[i, j]: i dominates j
    dominated_count = dom.sum(axis=0)
    fronts = []
    current = sorted(np.flatnonzero(dominated_count == 0).tolist())
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                dominated_count[j] -= 1
                if dominated_count[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def crowding_distance(front_points) -> np.ndarray:
    """NSGA-II crowding distance within one front.

    Boundary points of every objective get ``inf``; an objective whose values
    are all equal adds nothing to interior points.
    """
    pts = np.asarray(front_points, dtype=np.float64)
    k = len(pts)
    if k == 0:
        raise ValueError("empty front")
    dist = np.zeros(k)
    if k <= 2:
        dist[:] = np.inf
        return dist
    for m in range(pts.shape[1]):
        order = np.argsort(pts[:, m], kind="stable")
        vals = pts[order, m]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span <= 0:
            continue
        for r in range(1, k - 1):
            dist[order[r]] += (vals[r + 1] - vals[r - 1]) / span
    return dist


def pareto_ranking(points) -> ParetoRanking:
    pts = np.asarray(points, dtype=np.float64)
    front_index = np.zeros(len(pts), dtype=int)
    crowd = np.zeros(len(pts))
    for f, members in enumerate(nondominated_sort(pts)):
        front_index[members] = f
        crowd[members] = crowding_distance(pts[members])
    return ParetoRanking(front_index, crowd)


def n_selected(n_actors: int) -> int:
    """Size of the exploration set: nearest integer to sqrt(N_A), at least 1."""
    return max(1, int(round(math.sqrt(n_actors))))


def select_explore(scores: FactorScores, n_select: int) -> list[int]:
    """Top ``n_select`` actors under the crowded-comparison order."""
    n = len(scores.skill)
    if not 1 <= n_select <= n:
        raise ValueError(f"n_select must lie in [1, {n}], got {n_select}")
    rank = pareto_ranking(scores.points())
    order = sorted(range(n), key=lambda i: (rank.front_index[i], -rank.crowding_distance[i], i))
    return order[:n_select]


def select_exploit(scores: FactorScores) -> int:
    """Index of the highest skill; ties go to the lowest index."""
    return int(np.argmax(scores.skill))
