"""Identify which bias profile produced observed behaviour.

Features are state-action indicators, so discounted feature expectations are
discounted occupancy measures.  Candidate profiles are trained, rolled out
greedily, and ranked by Euclidean distance between their averaged feature
expectations and the expert's.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import LearningConfig, SplitQAgent, run_episode, train
from .profiles import BiasProfile

Trajectory = list[tuple[int, int, float]]

TRAJECTORY_HEADER = ["episode_id", "t", "state", "action", "reward"]


class TrajectoryParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass
class FeatureExpectation:
    values: np.ndarray  # shape (num_states, num_actions)
    gamma: float

    def vector(self) -> np.ndarray:
        return self.values.ravel()

    def distance(self, other: "FeatureExpectation") -> float:
        return float(np.linalg.norm(self.vector() - other.vector()))


def feature_expectations(trajs: Sequence[Trajectory], gamma: float, num_states: int,
                         num_actions: int) -> FeatureExpectation:
    if not trajs:
        raise ValueError("need at least one trajectory")
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    mu = np.zeros((num_states, num_actions))
    for traj in trajs:
        weight = 1.0
        for s, a, *_ in traj:
            if not (0 <= s < num_states and 0 <= a < num_actions):
                raise IndexError(f"(state, action) = ({s}, {a}) outside a {num_states}x{num_actions} table")
            mu[s, a] += weight
            weight *= gamma
    return FeatureExpectation(mu / len(trajs), gamma)


def rollout(agent: SplitQAgent, env, cfg: LearningConfig, n_trajectories: int,
            rng: np.random.Generator) -> list[Trajectory]:
    """Greedy, non-learning episodes."""
    return [run_episode(agent, env, cfg, rng, epsilon=0.0, learn=False).trajectory
            for _ in range(n_trajectories)]


def generate_expert(env, profile: BiasProfile, cfg: LearningConfig, n_trajectories: int,
                    rng: np.random.Generator) -> list[Trajectory]:
    """Train a fresh agent with ``profile`` and return greedy rollouts."""
    agent = SplitQAgent.fresh(env, profile)
    train(agent, env, cfg, rng)
    return rollout(agent, env, cfg, n_trajectories, rng)


def seeded_expert(make_env: Callable[[np.random.SeedSequence], object], profile: BiasProfile,
                  cfg: LearningConfig, n_trajectories: int, seed: int) -> list[Trajectory]:
    """:func:`generate_expert` with agent and environment streams derived from one seed."""
    agent_seq, env_seq = np.random.SeedSequence(seed).spawn(2)
    return generate_expert(make_env(env_seq), profile, cfg, n_trajectories, np.random.default_rng(agent_seq))


@dataclass
class FitResult:
    best: BiasProfile
    distances: list[tuple[BiasProfile, float]]

    def ranking(self) -> list[tuple[BiasProfile, float]]:
        # sorted() is stable, so equal distances keep candidate order
        return sorted(self.distances, key=lambda item: item[1])


def fit_profile(expert_trajs: Sequence[Trajectory], make_env, candidates: Sequence[BiasProfile],
                cfg: LearningConfig, gamma: float, seeds_per_candidate: int, *, n_trajectories: int = 10,
                base_seed: int | None = None) -> FitResult:
    """Rank candidate profiles by feature-expectation distance to the expert.

    Candidate ``k``'s seeds are ``base_seed + j`` for ``j < seeds_per_candidate``
    (``base_seed`` defaults to ``cfg.seed``).
    """
    if not candidates:
        raise ValueError("need at least one candidate profile")
    if seeds_per_candidate < 1:
        raise ValueError("seeds_per_candidate must be >= 1")
    probe = make_env(np.random.SeedSequence(0))
    S, A = probe.num_states, probe.num_actions
    expert_mu = feature_expectations(expert_trajs, gamma, S, A)
    base = cfg.seed if base_seed is None else base_seed
    distances = []
    for profile in candidates:
        mus = [
            feature_expectations(seeded_expert(make_env, profile, cfg, n_trajectories, base + j), gamma, S, A).values
            for j in range(seeds_per_candidate)
        ]
        mean_mu = FeatureExpectation(np.mean(mus, axis=0), gamma)
        distances.append((profile, expert_mu.distance(mean_mu)))
    best = min(distances, key=lambda item: item[1])[0]
    return FitResult(best, distances)


def write_trajectories(path, trajs: Sequence[Trajectory]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for episode_id, traj in enumerate(trajs):
            for t, (s, a, r) in enumerate(traj):
                writer.writerow([episode_id, t, s, a, repr(float(r))])


def read_trajectories(path) -> list[Trajectory]:
    """Parse a trajectory CSV; errors carry the 1-based line number."""
    trajs: dict[int, Trajectory] = {}
    order: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TrajectoryParseError(path, 1, "empty file")
        if [h.strip() for h in header] != TRAJECTORY_HEADER:
            raise TrajectoryParseError(path, 1, f"expected header {','.join(TRAJECTORY_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise TrajectoryParseError(path, line, f"expected 5 fields, got {len(row)}")
            try:
                episode_id, t, s, a = (int(cell) for cell in row[:4])
                r = float(row[4])
            except ValueError as exc:
                raise TrajectoryParseError(path, line, str(exc)) from None
            if not math.isfinite(r):
                raise TrajectoryParseError(path, line, "reward must be finite")
            if s < 0 or a < 0:
                raise TrajectoryParseError(path, line, "state and action must be non-negative")
            traj = trajs.get(episode_id)
            if traj is None:
                traj = trajs[episode_id] = []
                order.append(episode_id)
            if t != len(traj):
                raise TrajectoryParseError(path, line, f"episode {episode_id}: expected t={len(traj)}, got {t}")
            traj.append((s, a, r))
    return [trajs[k] for k in order]
