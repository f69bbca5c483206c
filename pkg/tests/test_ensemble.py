import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamc.ensemble import (ActorEnsemble, CriticEnsemble, EnsembleConfig, actor_target_value,
                           add_target_noise,
                           actor_target_values, ensemble_state_value,
                           ensemble_target_value, median, quantile, td_target)
from mamc.nn import MlpSpec, forward, init_network

from oracles import brute_quantile, hand_forward

OBS, ACT = 3, 1
ACTOR = MlpSpec([OBS, 8, ACT], "bounded", [-2.0], [2.0])
CRITIC = MlpSpec([OBS + ACT, 1])


def constant_critics(values):
    """Linear critics ignoring their input and returning fixed numbers."""
    p = np.zeros((len(values), CRITIC.n_params))
    p[:, -1] = values
    return p


def action_critics(scales):
    """Linear critics Q(s, a) = scale * a."""
    p = np.zeros((len(scales), CRITIC.n_params))
    p[:, OBS] = scales
    return p


def fixed_actors(actions):
    """Actors with zero weights whose bounded head emits ``actions``."""
    p = np.zeros((len(actions), ACTOR.n_params))
    p[:, -1] = np.arctanh(np.asarray(actions) / 2.0)
    return ActorEnsemble(ACTOR, p)


NOISELESS = EnsembleConfig(q=0.2, gamma=0.99, target_noise_std=0.0)
STATE = np.array([0.1, -0.4, 0.7])


class TestQuantile:
    def test_endpoints(self):
        v = [3.0, -1.0, 7.0, 2.0]
        assert quantile(v, 0.0) == -1.0 and quantile(v, 1.0) == 7.0

    def test_examples(self):
        assert quantile([1, 2, 3, 4], 0.5) == 2.5
        assert quantile(list(range(10)), 0.2) == pytest.approx(1.8)

    def test_median_examples(self):
        assert median([5]) == 5 and median([1, 2, 3]) == 2 and median([1, 2, 3, 4]) == 2.5

    def test_errors(self):
        with pytest.raises(ValueError):
            quantile([], 0.5)
        with pytest.raises(ValueError):
            quantile([1.0], 1.5)

    def test_axis(self):
        x = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(quantile(x, 0.5, axis=0), [4.0, 5.0, 6.0, 7.0])
        assert np.array_equal(quantile(x, 1.0, axis=1), [3.0, 7.0, 11.0])

    def test_matches_numpy_linear_method(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 13))
        for q in (0.0, 0.2, 0.37, 0.5, 1.0):
            assert np.allclose(quantile(x, q), np.quantile(x, q, axis=-1, method="linear"))

    @settings(max_examples=200, deadline=None)
    @given(values=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
           q=st.floats(0.0, 1.0))
    def test_matches_reference_and_bounds(self, values, q):
        got = quantile(values, q)
        assert got == pytest.approx(brute_quantile(values, q), rel=1e-12, abs=1e-9)
        assert min(values) <= got <= max(values)

    @settings(max_examples=100, deadline=None)
    @given(values=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30),
           q1=st.floats(0, 1), q2=st.floats(0, 1), shift=st.floats(0, 10))
    def test_monotone(self, values, q1, q2, shift):
        lo, hi = sorted((q1, q2))
        assert quantile(values, lo) <= quantile(values, hi) + 1e-9
        bumped = [v + shift for v in values]
        assert quantile(values, q1) <= quantile(bumped, q1) + 1e-9


class TestConfigTypes:
    def test_ensemble_config_ranges(self):
        with pytest.raises(ValueError):
            EnsembleConfig(q=1.2)
        with pytest.raises(ValueError):
            EnsembleConfig(gamma=1.0)
        with pytest.raises(ValueError):
            EnsembleConfig(target_noise_std=-1)

    def test_critic_ensemble_pairs_targets(self):
        p = np.zeros((2, CRITIC.n_params))
        with pytest.raises(ValueError):
            CriticEnsemble(CRITIC, p, p[:1])
        assert len(CriticEnsemble(CRITIC, p, p.copy())) == 2


class TestTargetValues:
    def test_single_critic(self):
        # one critic: the quantile is that critic's value whatever q is
        rng = np.random.default_rng(0)
        actor = init_network(ACTOR, rng)
        tc = init_network(CRITIC, rng, n=1)
        a = hand_forward(ACTOR.widths, (ACTOR.action_low, ACTOR.action_high), actor, STATE)
        expect = hand_forward(CRITIC.widths, None, tc[0], list(STATE) + a)[0]
        for q in (0.0, 0.3, 1.0):
            cfg = EnsembleConfig(q=q, target_noise_std=0.0)
            v = actor_target_value(ACTOR, actor, CRITIC, tc, STATE, cfg, rng)
            assert v == pytest.approx(expect, abs=1e-12)

    def test_identical_critics_common_value(self):
        rng = np.random.default_rng(1)
        one = init_network(CRITIC, rng)
        tc = np.repeat(one[None], 5, axis=0)
        actor = init_network(ACTOR, rng)
        v = actor_target_value(ACTOR, actor, CRITIC, tc, STATE, NOISELESS, rng)
        alone = actor_target_value(ACTOR, actor, CRITIC, one[None], STATE, NOISELESS, rng)
        assert v == alone

    def test_constructed_zero_to_nine(self):
        rng = np.random.default_rng(2)
        v = actor_target_value(ACTOR, init_network(ACTOR, rng), CRITIC,
                               constant_critics(np.arange(10.0)), STATE, NOISELESS, rng)
        assert v == pytest.approx(1.8)

    def test_noise_is_fresh_per_call(self):
        rng = np.random.default_rng(3)
        cfg = EnsembleConfig(q=0.5, target_noise_std=0.1)
        actors = fixed_actors([0.0])
        tc = action_critics([1.0])
        a = actor_target_value(ACTOR, actors.params[0], CRITIC, tc, STATE, cfg, rng)
        b = actor_target_value(ACTOR, actors.params[0], CRITIC, tc, STATE, cfg, rng)
        assert a != b

    def test_noisy_action_is_clipped(self):
        rng = np.random.default_rng(4)
        cfg = EnsembleConfig(q=1.0, target_noise_std=50.0)
        vals = actor_target_values(fixed_actors([1.9, -1.9]), action_critics([1.0]), CRITIC,
                                   np.tile(STATE, (200, 1)), cfg, rng)
        assert np.all(np.abs(vals) <= 2.0)
        assert np.any(vals == 2.0) and np.any(vals == -2.0)

    def test_single_actor_ensemble(self):
        rng = np.random.default_rng(5)
        actors = ActorEnsemble(ACTOR, init_network(ACTOR, rng, n=1))
        tc = init_network(CRITIC, rng, n=4)
        ens = ensemble_target_value(actors, tc, CRITIC, STATE, NOISELESS, rng)
        one = actor_target_value(ACTOR, actors.params[0], CRITIC, tc, STATE, NOISELESS, rng)
        assert ens == one

    def test_median_of_actor_values(self):
        # Q(s, a) = a and actors emitting 1, 2, 3 (scaled into the +-2 head)
        rng = np.random.default_rng(6)
        actors = fixed_actors([0.5, 1.0, 1.5])
        ens = ensemble_target_value(actors, action_critics([2.0]), CRITIC, STATE, NOISELESS, rng)
        assert ens == pytest.approx(2.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n_a=st.integers(1, 6), n_c=st.integers(1, 6))
    def test_within_actor_extremes(self, seed, n_a, n_c):
        rng = np.random.default_rng(seed)
        actors = ActorEnsemble(ACTOR, init_network(ACTOR, rng, n=n_a))
        tc = init_network(CRITIC, rng, n=n_c)
        states = rng.normal(size=(4, OBS))
        cfg = EnsembleConfig(q=0.2, target_noise_std=0.1)
        per_actor = actor_target_values(actors, tc, CRITIC, states, cfg, np.random.default_rng(seed))
        ens = median(per_actor, axis=-2)
        assert np.all(per_actor.min(axis=0) <= ens) and np.all(ens <= per_actor.max(axis=0))


class TestTdTarget:
    def test_examples(self):
        assert td_target(1.0, False, 10.0, 0.99) == pytest.approx(10.9)
        assert td_target(1.0, True, 10.0, 0.99) == 1.0
        assert td_target(2.5, False, 123.0, 0.0) == 2.5

    def test_vectorised_and_affine(self):
        r = np.array([0.0, 1.0])
        d = np.array([0.0, 1.0])
        y0 = td_target(r, d, np.array([0.0, 0.0]), 0.9)
        y1 = td_target(r, d, np.array([1.0, 1.0]), 0.9)
        assert np.allclose(y1 - y0, [0.9, 0.0])


class TestStateValue:
    def test_single_critic(self):
        rng = np.random.default_rng(0)
        actor = init_network(ACTOR, rng)
        c = init_network(CRITIC, rng, n=1)
        a = hand_forward(ACTOR.widths, (ACTOR.action_low, ACTOR.action_high), actor, STATE)
        expect = hand_forward(CRITIC.widths, None, c[0], list(STATE) + a)[0]
        assert ensemble_state_value(ACTOR, actor, CRITIC, c, STATE, 0.2) == pytest.approx(expect)

    def test_identical_critics(self):
        rng = np.random.default_rng(1)
        c = np.repeat(init_network(CRITIC, rng)[None], 4, axis=0)
        actor = init_network(ACTOR, rng)
        values = {ensemble_state_value(ACTOR, actor, CRITIC, c, STATE, q) for q in (0, .2, .5, 1)}
        assert len(values) == 1

    def test_two_critics_midpoint(self):
        actor = fixed_actors([0.0]).params[0]
        assert ensemble_state_value(ACTOR, actor, CRITIC, constant_critics([1.0, 3.0]),
                                    STATE, 0.5) == 2.0


def test_working_precision_is_kept():
    rng = np.random.default_rng(0)
    a = add_target_noise(np.zeros((5, 1), np.float32), ACTOR, 0.3, rng, 0.5)
    y = td_target(np.ones(5, np.float32), np.zeros(5, np.float32), a[:, 0], 0.99)
    assert a.dtype == y.dtype == np.float32
    p = init_network(ACTOR, rng, dtype=np.float32)
    assert forward(ACTOR, p, STATE).dtype == np.float32
