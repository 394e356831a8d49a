"""Two-stream (split) Q-learning on tabular environments.

The agent keeps one table for the positive part of the reward and one for the
negative part.  Memory factors ``phi1``/``phi3`` scale the old estimate inside
each stream's update; selection weights ``phi2``/``phi4`` combine the streams
when choosing actions.  With all four weights equal to one the algorithm is
ordinary Q-learning on ``q_pos + q_neg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .profiles import BiasProfile


class NumericOverflowError(ArithmeticError):
    """An update produced a non-finite table entry."""


@dataclass
class StepOutcome:
    next_state: int
    reward: float
    done: bool

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError(f"reward must be finite, got {self.reward!r}")


@dataclass
class LearningConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon: float = 0.1
    episodes: int = 500
    max_steps_per_episode: int = 100
    seed: int = 0
    # Linear decay of epsilon towards epsilon_final over epsilon_decay_episodes
    # (defaults to all episodes).  None keeps epsilon constant.
    epsilon_final: float | None = None
    epsilon_decay_episodes: int | None = None
    # Same idea for the learning rate; off unless alpha_final is set.
    alpha_final: float | None = None
    alpha_decay_episodes: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("epsilon", "epsilon_final"):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.alpha_final is not None and not 0 < self.alpha_final <= 1:
            raise ValueError(f"alpha_final must lie in (0, 1], got {self.alpha_final}")
        if self.episodes < 0 or self.max_steps_per_episode < 1:
            raise ValueError("episodes must be >= 0 and max_steps_per_episode >= 1")

    def epsilon_at(self, episode: int) -> float:
        return _linear(self.epsilon, self.epsilon_final, self.epsilon_decay_episodes or self.episodes, episode)

    def alpha_at(self, episode: int) -> float:
        return _linear(self.alpha, self.alpha_final, self.alpha_decay_episodes or self.episodes, episode)


def _linear(start, end, horizon, episode):
    if end is None:
        return start
    if horizon <= 1:
        return end
    frac = min(1.0, episode / (horizon - 1))
    return start + (end - start) * frac


@dataclass
class SplitQTable:
    num_states: int
    num_actions: int
    q_pos: np.ndarray = field(default=None, repr=False)
    q_neg: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        shape = (self.num_states, self.num_actions)
        if self.q_pos is None:
            self.q_pos = np.zeros(shape)
        if self.q_neg is None:
            self.q_neg = np.zeros(shape)
        if self.q_pos.shape != shape or self.q_neg.shape != shape:
            raise ValueError(f"tables must have shape {shape}")

    def copy(self) -> "SplitQTable":
        return SplitQTable(self.num_states, self.num_actions, self.q_pos.copy(), self.q_neg.copy())


def split_reward(r: float) -> tuple[float, float]:
    if not math.isfinite(r):
        raise ValueError(f"reward must be finite, got {r!r}")
    return max(r, 0.0), min(r, 0.0)


def combined_q(table: SplitQTable, profile: BiasProfile, s: int) -> np.ndarray:
    if not 0 <= s < table.num_states:
        raise IndexError(f"state {s} out of range [0, {table.num_states})")
    return profile.phi2 * table.q_pos[s] + profile.phi4 * table.q_neg[s]


def greedy_action(values: np.ndarray) -> int:
    # np.argmax returns the first maximiser: lowest action id wins ties
    return int(np.argmax(values))


def select_action(table: SplitQTable, profile: BiasProfile, s: int, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy on the combined values.

    Always consumes one uniform draw, plus one integer draw when exploring, so
    the random stream stays aligned with a single-table Q-learning run.
    """
    values = combined_q(table, profile, s)
    if rng.random() < epsilon:
        return int(rng.integers(table.num_actions))
    return greedy_action(values)


def update_streams(table: SplitQTable, profile: BiasProfile, cfg: LearningConfig, s: int, a: int,
                   r: float, s_next: int, done: bool, alpha: float | None = None) -> None:
    r_pos, r_neg = split_reward(r)
    alpha = cfg.alpha if alpha is None else alpha
    if done:
        v_pos = v_neg = 0.0
    else:
        # both streams bootstrap at the action the combined values prefer
        best = greedy_action(combined_q(table, profile, s_next))
        v_pos = table.q_pos[s_next, best]
        v_neg = table.q_neg[s_next, best]
    old_pos = table.q_pos[s, a]
    old_neg = table.q_neg[s, a]
    with np.errstate(over="ignore", invalid="ignore"):
        new_pos = profile.phi1 * old_pos + alpha * (r_pos + cfg.gamma * v_pos - old_pos)
        new_neg = profile.phi3 * old_neg + alpha * (r_neg + cfg.gamma * v_neg - old_neg)
    if not math.isfinite(new_pos):
        raise NumericOverflowError(f"q_pos[{s}, {a}] became {new_pos}")
    if not math.isfinite(new_neg):
        raise NumericOverflowError(f"q_neg[{s}, {a}] became {new_neg}")
    table.q_pos[s, a] = new_pos
    table.q_neg[s, a] = new_neg


@dataclass
class EpisodeRecord:
    total_reward: float
    total_pos: float
    total_neg: float
    steps: int
    epsilon: float
    trajectory: list[tuple[int, int, float]]


@dataclass
class SplitQAgent:
    table: SplitQTable
    profile: BiasProfile

    @classmethod
    def fresh(cls, env, profile: BiasProfile) -> "SplitQAgent":
        return cls(SplitQTable(env.num_states, env.num_actions), profile)

    def greedy_policy(self) -> np.ndarray:
        values = self.profile.phi2 * self.table.q_pos + self.profile.phi4 * self.table.q_neg
        return np.argmax(values, axis=1)


def run_episode(agent: SplitQAgent, env, cfg: LearningConfig, rng: np.random.Generator,
                epsilon: float | None = None, alpha: float | None = None,
                learn: bool = True) -> EpisodeRecord:
    epsilon = cfg.epsilon if epsilon is None else epsilon
    s = env.reset()
    total = total_pos = total_neg = 0.0
    trajectory = []
    for _ in range(cfg.max_steps_per_episode):
        a = select_action(agent.table, agent.profile, s, epsilon, rng)
        out = env.step(a)
        r_pos, r_neg = split_reward(out.reward)
        if learn:
            update_streams(agent.table, agent.profile, cfg, s, a, out.reward, out.next_state, out.done, alpha)
        trajectory.append((s, a, out.reward))
        total += out.reward
        total_pos += r_pos
        total_neg += r_neg
        s = out.next_state
        if out.done:
            break
    return EpisodeRecord(total, total_pos, total_neg, len(trajectory), epsilon, trajectory)


def train(agent: SplitQAgent, env, cfg: LearningConfig, rng: np.random.Generator) -> list[EpisodeRecord]:
    return [
        run_episode(agent, env, cfg, rng, epsilon=cfg.epsilon_at(k), alpha=cfg.alpha_at(k))
        for k in range(cfg.episodes)
    ]
