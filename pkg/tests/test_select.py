import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamc.ensemble import ActorEnsemble
from mamc.nn import MlpSpec, init_network
from mamc.select import (FactorScores, creativity, crowding_distance, dominates, factor_scores,
                         n_selected, nondominated_sort, pareto_ranking, select_exploit,
                         select_explore, skill)

from oracles import brute_fronts

OBS = 3
ACTOR = MlpSpec([OBS, 8, 1], "bounded", [-2.0], [2.0])
CRITIC = MlpSpec([OBS + 1, 1])


def constant_critics(values):
    p = np.zeros((len(values), CRITIC.n_params))
    p[:, -1] = values
    return p


def scores(skill_values, creativity_values):
    return FactorScores(np.asarray(skill_values, float), np.asarray(creativity_values, float))


class TestFactors:
    def test_one_critic_has_zero_creativity(self):
        rng = np.random.default_rng(0)
        actor = init_network(ACTOR, rng)
        c = init_network(CRITIC, rng, n=1)
        assert creativity(ACTOR, actor, CRITIC, c, rng.normal(size=(16, OBS)), 0.2) == 0.0

    def test_identical_critics_have_zero_creativity(self):
        rng = np.random.default_rng(1)
        c = np.repeat(init_network(CRITIC, rng)[None], 6, axis=0)
        actors = ActorEnsemble(ACTOR, init_network(ACTOR, rng, n=4))
        sc = factor_scores(actors, CRITIC, c, rng.normal(size=(32, OBS)), 0.2)
        assert np.all(sc.creativity == 0.0)

    def test_two_critics_example(self):
        actor = np.zeros(ACTOR.n_params)
        states = np.zeros((1, OBS))
        c = constant_critics([1.0, 3.0])
        assert skill(ACTOR, actor, CRITIC, c, states, 0.5) == 2.0
        assert creativity(ACTOR, actor, CRITIC, c, states, 0.5) == 1.0

    def test_skill_is_batch_mean(self):
        # Q(s, a) = s_0, so skill is the mean first coordinate
        p = np.zeros((3, CRITIC.n_params))
        p[:, 0] = 1.0
        states = np.random.default_rng(2).normal(size=(10, OBS))
        assert skill(ACTOR, np.zeros(ACTOR.n_params), CRITIC, p, states, 0.2) == \
            pytest.approx(states[:, 0].mean())

    def test_bad_batch(self):
        actors = ActorEnsemble(ACTOR, np.zeros((1, ACTOR.n_params)))
        with pytest.raises(ValueError):
            factor_scores(actors, CRITIC, constant_critics([1.0]), np.zeros((0, OBS)), 0.2)

    def test_scores_validation(self):
        with pytest.raises(ValueError):
            scores([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            scores([], [])


class TestSorting:
    def test_dominance(self):
        assert dominates((2, 2), (1, 1)) and dominates((2, 1), (1, 1))
        assert not dominates((1, 1), (1, 1)) and not dominates((2, 0), (0, 2))

    def test_example(self):
        assert nondominated_sort([(2, 2), (0, 3), (1, 1)]) == [[0, 1], [2]]

    def test_all_equal_single_front(self):
        assert nondominated_sort([(1, 1)] * 4) == [[0, 1, 2, 3]]

    def test_chain(self):
        assert nondominated_sort([(0, 0), (2, 2), (1, 1)]) == [[1], [2], [0]]

    def test_empty(self):
        with pytest.raises(ValueError):
            nondominated_sort(np.zeros((0, 2)))

    @settings(max_examples=200, deadline=None)
    @given(points=st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)),
                           min_size=1, max_size=25))
    def test_matches_pairwise_reference(self, points):
        fronts = nondominated_sort(points)
        assert fronts == brute_fronts(points)
        assert sorted(i for f in fronts for i in f) == list(range(len(points)))


class TestCrowding:
    def test_collinear(self):
        d = crowding_distance([(0, 0), (1, 1), (2, 2)])
        assert math.isinf(d[0]) and math.isinf(d[2]) and d[1] == 2.0

    def test_small_fronts_are_infinite(self):
        assert np.all(np.isinf(crowding_distance([(0, 0)])))
        assert np.all(np.isinf(crowding_distance([(0, 1), (1, 0)])))

    def test_flat_objective_contributes_nothing(self):
        d = crowding_distance([(0, 5), (1, 5), (3, 5), (4, 5)])
        assert d[1] == pytest.approx(3 / 4) and d[2] == pytest.approx(3 / 4)

    def test_ranking_combines_both(self):
        r = pareto_ranking([(2, 2), (0, 3), (1, 1)])
        assert list(r.front_index) == [0, 0, 1]
        assert np.all(np.isinf(r.crowding_distance))


class TestSelection:
    @pytest.mark.parametrize("n, k", [(1, 1), (2, 1), (3, 2), (4, 2), (10, 3), (16, 4), (30, 5)])
    def test_set_size(self, n, k):
        assert n_selected(n) == k

    def test_single_actor(self):
        assert select_explore(scores([0.3], [0.1]), 1) == [0]
        assert select_exploit(scores([0.3], [0.1])) == 0

    def test_explore_prefers_front_then_crowding(self):
        # front 0: actors 0, 1, 2, 3 along a line; 4 is dominated
        sc = scores([0.0, 1.0, 2.0, 4.0, 0.5], [4.0, 3.0, 2.0, 0.0, 0.5])
        chosen = select_explore(sc, 3)
        assert chosen[:2] == [0, 3]  # boundary points first, by index
        # interior distances: actor 1 gets 2/4 + 2/4, actor 2 gets 3/4 + 3/4
        assert chosen[2] == 2

    def test_explore_bounds(self):
        sc = scores([1.0, 2.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            select_explore(sc, 0)
        with pytest.raises(ValueError):
            select_explore(sc, 3)

    def test_exploit_ties_go_low(self):
        assert select_exploit(scores([1.0, 3.0, 3.0], [0.0, 9.0, 0.0])) == 1

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 20), shift=st.floats(-5, 5))
    def test_exploit_ignores_creativity_and_shift(self, seed, n, shift):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=n)
        base = select_exploit(scores(s, rng.normal(size=n)))
        assert base == int(np.argmax(s))
        assert base == select_exploit(scores(s + shift, rng.uniform(size=n)))

    def test_explore_is_subset_and_deterministic(self):
        rng = np.random.default_rng(3)
        sc = scores(rng.normal(size=10), rng.uniform(size=10))
        a, b = select_explore(sc, 3), select_explore(sc, 3)
        assert a == b and len(set(a)) == 3 and all(0 <= i < 10 for i in a)
