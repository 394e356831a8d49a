import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_values
from splitq.core import LearningConfig, SplitQAgent, run_episode, train
from splitq.envs import (
    DOWN,
    EAST,
    MODERATE,
    NEGATIVE_ONLY,
    POSITIVE_ONLY,
    RISKY,
    SAFE,
    RewardTransform,
    TabularEnv,
    TabularModel,
    make_chain,
    make_grid_pacman,
    make_risky_path,
    value_iteration,
    wrap_rewards,
)
from splitq.profiles import PRESETS


def rollout_policy(env, policy, max_steps=200):
    s = env.reset()
    total, states = 0.0, [s]
    for _ in range(max_steps):
        out = env.step(int(policy[s]))
        total += out.reward
        s = out.next_state
        states.append(s)
        if out.done:
            break
    return total, states


def test_chain3_values():
    V, policy = value_iteration(make_chain(3).model, 0.9)
    np.testing.assert_allclose(V, [0.9, 1.0, 0.0], atol=1e-9)
    assert list(policy[:2]) == [0, 0]


def test_chain2_value():
    V, _ = value_iteration(make_chain(2).model, 0.9)
    assert V[0] == pytest.approx(1.0)


def test_chain5_value():
    V, _ = value_iteration(make_chain(5).model, 0.9)
    assert V[0] == pytest.approx(0.9**3)


def test_chain_rejects_short():
    with pytest.raises(ValueError):
        make_chain(1)


def test_gamma_zero_is_myopic():
    env = make_risky_path(4, 2, 0.5, 2.0, 10.0)
    V, policy = value_iteration(env.model, 0.0)
    expected = env.model.expected_reward()
    live = ~env.model.terminal
    np.testing.assert_allclose(V[live], expected[live].max(axis=1))
    np.testing.assert_array_equal(policy[live], np.argmax(expected[live], axis=1))


def test_residual_contracts_by_gamma():
    env = make_grid_pacman(4, 4, 1.0, 10.0, [(1, 1), (2, 1)])
    gamma = 0.95
    V = np.zeros(env.num_states)
    prev = None
    for _ in range(40):
        new = env.model.q_values(V, gamma).max(axis=1)
        res = np.max(np.abs(new - V))
        if prev is not None and prev > 0:
            assert res <= gamma * prev + 1e-12
        prev, V = res, new


def test_pacman_fixed_point_stable():
    env = make_grid_pacman(4, 4, 1.0, 10.0, [(1, 1), (2, 1)])
    tol = 1e-10
    V, _ = value_iteration(env.model, 0.95, tol=tol)
    backed_up = env.model.q_values(V, 0.95).max(axis=1)
    assert np.max(np.abs(backed_up - V)) < tol


def test_pacman_2x2_one_pellet():
    env = make_grid_pacman(2, 2, 3.0, 10.0, [], pellet_cells=[(1, 0)])
    V, policy = value_iteration(env.model, 0.9)
    assert V[env.start] == pytest.approx(3.0)
    total, states = rollout_policy(env, policy)
    assert total == 3.0 and len(states) == 2
    assert policy[env.start] == EAST


def test_pacman_start_on_ghost():
    env = make_grid_pacman(3, 3, 1.0, 7.0, [(0, 0)])
    env.reset()
    out = env.step(0)
    assert out.done and out.reward == -7.0


def test_pacman_detours_around_ghost():
    # pellet straight east of the start, ghost between them on the short path
    env = make_grid_pacman(4, 4, 1.0, 10.0, [(1, 0), (2, 0)], pellet_cells=[(3, 0)])
    V, policy = value_iteration(env.model, 0.95)
    total, states = rollout_policy(env, policy)
    assert total == 1.0
    cells = [env.decode(s)[0] for s in states[:-1]]
    assert not set(cells) & {(1, 0), (2, 0)}
    # shortest safe route: down, three east, up = 5 moves
    assert len(states) - 1 == 5
    assert V[env.start] == pytest.approx(0.95**4)
    assert policy[env.start] == DOWN
    assert V[env.start] == pytest.approx(brute_force_values(env.model, 0.95, range(4), env.start, 7))


def test_pacman_pellet_collected_once():
    env = make_grid_pacman(3, 2, 1.0, 10.0, [], pellet_cells=[(1, 0), (2, 0)])
    env.reset()
    out1 = env.step(EAST)
    out2 = env.step(2)  # back west
    out3 = env.step(EAST)
    assert (out1.reward, out2.reward, out3.reward) == (1.0, 0.0, 0.0)
    out4 = env.step(EAST)
    assert out4.reward == 1.0 and out4.done


@pytest.mark.parametrize("kwargs", [
    dict(width=1, height=3),
    dict(width=3, height=3, ghost_cells=[(5, 5)]),
    dict(width=3, height=3, ghost_cells=[(1, 1)], pellet_cells=[(1, 1)]),
])
def test_pacman_invalid_geometry(kwargs):
    with pytest.raises(ValueError):
        make_grid_pacman(**kwargs)


def test_risky_path_without_penalty():
    gamma = 0.9
    env = make_risky_path(6, 3, 0.0, 5.0, 10.0)
    V, policy = value_iteration(env.model, gamma)
    assert policy[0] == RISKY
    assert V[0] == pytest.approx(10.0 * gamma**3)


def test_risky_path_certain_large_penalty():
    env = make_risky_path(6, 3, 1.0, 100.0, 10.0)
    _, policy = value_iteration(env.model, 0.9)
    assert policy[0] == SAFE


def test_risky_path_expectation_oracle():
    gamma, L, S = 0.95, 2, 6
    env = make_risky_path(S, L, 0.5, 2.0, 10.0)
    V, policy = value_iteration(env.model, gamma)
    # closed form: L penalised steps after the fork move, goal on the last one
    risky = sum(gamma**t * -1.0 for t in range(1, L + 1)) + gamma**L * 10.0
    safe = gamma**S * 10.0
    q_fork = env.model.q_values(V, gamma)[0]
    assert q_fork[RISKY] == pytest.approx(risky)
    assert q_fork[SAFE] == pytest.approx(safe)
    assert policy[0] == (SAFE if safe > risky else RISKY)


def test_risky_path_sampled_penalty_matches_expectation():
    env = make_risky_path(5, 2, 0.3, 2.0, 10.0)
    env.rng = np.random.default_rng(0)
    penalties = []
    for _ in range(4000):
        env.reset()
        env.step(RISKY)
        penalties.append(env.step(0).reward)
    assert np.mean(penalties) == pytest.approx(-0.6, abs=0.05)


def test_risky_path_three_arms():
    env = make_risky_path(10, 2, 0.5, 2.0, 10.0, mid_len=3, mid_penalty_prob=0.1)
    assert env.num_actions == 3
    V, policy = value_iteration(env.model, 0.95)
    q = env.model.q_values(V, 0.95)[0]
    assert q[MODERATE] == pytest.approx(-0.2 * sum(0.95**t for t in range(1, 4)) + 10 * 0.95**3)
    assert policy[0] == MODERATE


@pytest.mark.parametrize("args", [(3, 3, 0.5, 1, 1), (2, 5, 0.5, 1, 1), (5, 2, 1.5, 1, 1)])
def test_risky_path_invalid(args):
    with pytest.raises(ValueError):
        make_risky_path(*args)


@pytest.mark.parametrize("env", [
    make_chain(6),
    make_grid_pacman(3, 3, 1.0, 5.0, [(1, 1)]),
    make_risky_path(7, 3, 0.4, 1.0, 5.0),
    make_risky_path(7, 3, 0.4, 1.0, 5.0, mid_len=5, mid_penalty_prob=0.1),
])
def test_model_rows_are_distributions(env):
    sums = np.asarray(env.model.transition.sum(axis=1)).ravel()
    assert np.all(np.abs(sums - 1) <= 1e-9)


def test_model_rejects_bad_rows():
    with pytest.raises(ValueError, match="sums to"):
        TabularModel.from_rows(2, 1, {(0, 0): [(1, 0.5, 0.0)]}, [False, True])


def test_stochastic_transitions_sampled():
    rows = {(0, 0): [(1, 0.25, 1.0), (2, 0.75, 0.0)]}
    model = TabularModel.from_rows(3, 1, rows, [False, True, True])
    env = TabularEnv(model, 0, horizon=1, rng=3)
    hits = 0
    for _ in range(4000):
        env.reset()
        hits += env.step(0).next_state == 1
    assert hits / 4000 == pytest.approx(0.25, abs=0.03)


def _episodes(env, n, seed, profile="M"):
    cfg = LearningConfig(alpha=0.2, epsilon=0.4, episodes=n, max_steps_per_episode=40)
    agent = SplitQAgent.fresh(env, PRESETS[profile])
    return train(agent, env, cfg, np.random.default_rng(seed))


def test_identity_wrapper_is_transparent():
    raw = make_risky_path(6, 2, 0.5, 2.0, 10.0)
    raw.rng = np.random.default_rng(11)
    inner = make_risky_path(6, 2, 0.5, 2.0, 10.0)
    inner.rng = np.random.default_rng(11)
    wrapped = wrap_rewards(inner, RewardTransform(), rng=99)
    assert _episodes(raw, 60, 4) == _episodes(wrapped, 60, 4)


@pytest.mark.parametrize("transform, sign", [(POSITIVE_ONLY, 1), (NEGATIVE_ONLY, -1)])
def test_single_stream_wrappers(transform, sign):
    env = wrap_rewards(make_risky_path(6, 2, 0.7, 3.0, 10.0), transform, rng=0)
    env.env.rng = np.random.default_rng(1)
    rewards = [r for rec in _episodes(env, 80, 2) for _, _, r in rec.trajectory]
    assert all(sign * r >= 0 for r in rewards)
    assert any(r != 0 for r in rewards)


def test_switch_schedule():
    t = RewardTransform(switch_episode=100, after=RewardTransform(pos_scale=0.0))
    rng = np.random.default_rng(0)
    assert t.apply(2.0, 99, rng) == 2.0
    assert t.apply(2.0, 150, rng) == 0.0
    assert t.apply(-2.0, 150, rng) == -2.0


def test_wrapper_counts_episodes_by_reset():
    t = RewardTransform(switch_episode=2, after=RewardTransform(pos_scale=0.0))
    env = wrap_rewards(make_chain(2), t)
    seen = []
    for _ in range(4):
        env.reset()
        seen.append(env.step(0).reward)
    assert seen == [1.0, 1.0, 0.0, 0.0]


def test_drop_probability_thins_stream():
    t = RewardTransform(pos_drop_prob=0.25, neg_scale=2.0)
    rng = np.random.default_rng(5)
    kept = np.mean([t.apply(1.0, 0, rng) != 0 for _ in range(8000)])
    assert kept == pytest.approx(0.75, abs=0.02)
    assert t.apply(-1.5, 0, rng) == -3.0


@pytest.mark.parametrize("kwargs", [dict(pos_scale=-1), dict(neg_drop_prob=1.5), dict(switch_episode=3)])
def test_transform_validation(kwargs):
    with pytest.raises(ValueError):
        RewardTransform(**kwargs)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 1000))
def test_episodes_end_within_horizon(n, seed):
    env = make_chain(n)
    cfg = LearningConfig(epsilon=1.0, max_steps_per_episode=env.horizon)
    agent = SplitQAgent.fresh(env, PRESETS["standard"])
    rec = run_episode(agent, env, cfg, np.random.default_rng(seed))
    assert rec.steps <= env.horizon
