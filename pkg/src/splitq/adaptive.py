"""GP-UCB tuning of the four bias weights.

Mean post-learning return is treated as a black-box function of
``(phi1, phi2, phi3, phi4)``.  A Gaussian process with a squared-exponential
kernel models it, and the next profile is the grid point with the highest
upper confidence bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .core import LearningConfig, SplitQAgent, train
from .profiles import BiasProfile


class SingularKernelError(np.linalg.LinAlgError):
    pass


@dataclass
class GPState:
    points: list[tuple[tuple[float, ...], float]] = field(default_factory=list)
    kernel_lengthscale: float = 1.0
    kernel_variance: float = 1.0
    noise_variance: float = 1e-6
    # added to the diagonal only if the plain Cholesky factorisation fails
    jitter: float = 1e-8

    def __post_init__(self):
        if not (self.kernel_lengthscale > 0 and self.kernel_variance > 0):
            raise ValueError("kernel lengthscale and variance must be > 0")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        for _, y in self.points:
            if not math.isfinite(y):
                raise ValueError("observed values must be finite")

    def observe(self, x, y: float) -> None:
        if not math.isfinite(y):
            raise ValueError(f"observed value must be finite, got {y!r}")
        self.points.append((tuple(float(v) for v in x), float(y)))

    @property
    def X(self) -> np.ndarray:
        return np.array([p for p, _ in self.points], dtype=float).reshape(len(self.points), -1)

    @property
    def y(self) -> np.ndarray:
        return np.array([v for _, v in self.points], dtype=float)


def sq_exp_kernel(A: np.ndarray, B: np.ndarray, lengthscale: float, variance: float) -> np.ndarray:
    d2 = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2.0 * A @ B.T
    return variance * np.exp(-np.maximum(d2, 0.0) / (2.0 * lengthscale**2))


def _factor(K: np.ndarray, jitter: float):
    try:
        return linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError:
        pass
    try:
        return linalg.cho_factor(K + jitter * np.eye(len(K)), lower=True)
    except linalg.LinAlgError:
        raise SingularKernelError(
            "kernel matrix is numerically singular even with jitter; increase noise_variance"
        ) from None


def posterior(gp: GPState, x) -> tuple[np.ndarray, np.ndarray] | tuple[float, float]:
    """Posterior mean and standard deviation at one point or a batch of rows."""
    Xq = np.asarray(x, dtype=float)
    single = Xq.ndim == 1
    Xq = np.atleast_2d(Xq)
    if not gp.points:
        mean = np.zeros(len(Xq))
        std = np.full(len(Xq), math.sqrt(gp.kernel_variance))
    else:
        X, y = gp.X, gp.y
        K = sq_exp_kernel(X, X, gp.kernel_lengthscale, gp.kernel_variance)
        K[np.diag_indices_from(K)] += gp.noise_variance
        factor = _factor(K, gp.jitter)
        Ks = sq_exp_kernel(X, Xq, gp.kernel_lengthscale, gp.kernel_variance)
        mean = Ks.T @ linalg.cho_solve(factor, y)
        v = linalg.solve_triangular(factor[0], Ks, lower=True)
        var = gp.kernel_variance - np.sum(v**2, axis=0)
        std = np.sqrt(np.maximum(var, 0.0))
    if single:
        return float(mean[0]), float(std[0])
    return mean, std


def ucb_score(gp: GPState, x, beta: float):
    if beta < 0:
        raise ValueError("beta must be >= 0")
    mean, std = posterior(gp, x)
    return mean + math.sqrt(beta) * std


def log_beta(t: int, grid_size: int, delta: float = 0.1) -> float:
    """Growing confidence schedule for finite domains, ``t`` counted from 1."""
    return 2.0 * math.log(grid_size * t**2 * math.pi**2 / (6.0 * delta))


@dataclass(frozen=True)
class CandidateGrid:
    phi1: tuple[float, ...]
    phi2: tuple[float, ...]
    phi3: tuple[float, ...]
    phi4: tuple[float, ...]

    def __post_init__(self):
        for name in ("phi1", "phi2", "phi3", "phi4"):
            values = tuple(sorted(float(v) for v in getattr(self, name)))
            if not values:
                raise ValueError(f"grid coordinate {name} is empty")
            if values[0] < 0 or not all(math.isfinite(v) for v in values):
                raise ValueError(f"grid coordinate {name} must hold finite values >= 0")
            object.__setattr__(self, name, values)

    @classmethod
    def from_lists(cls, lists: Sequence[Sequence[float]]) -> "CandidateGrid":
        if len(lists) != 4:
            raise ValueError("a candidate grid needs exactly four coordinate lists")
        return cls(*(tuple(v) for v in lists))

    def points(self) -> np.ndarray:
        # itertools.product over sorted axes enumerates in lexicographic order
        return np.array(list(itertools.product(self.phi1, self.phi2, self.phi3, self.phi4)))

    def __len__(self) -> int:
        return len(self.phi1) * len(self.phi2) * len(self.phi3) * len(self.phi4)


def propose_next(gp: GPState, grid: CandidateGrid, beta: float) -> tuple[float, ...]:
    pts = grid.points()
    scores = ucb_score(gp, pts, beta)
    # argmax keeps the first maximiser, i.e. the lexicographically smallest
    return tuple(float(v) for v in pts[int(np.argmax(scores))])


@dataclass
class AdaptRound:
    round: int
    phi: tuple[float, ...]
    value: float
    best_phi: tuple[float, ...]
    best_value: float


def optimize(objective: Callable[[tuple[float, ...]], float], grid: CandidateGrid, rounds: int,
             gp: GPState | None = None, beta: float = 4.0, beta_schedule: str = "constant") -> list[AdaptRound]:
    """Sequential GP-UCB over a finite grid; ``objective`` is maximised."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if beta_schedule not in ("constant", "log"):
        raise ValueError(f"unknown beta schedule {beta_schedule!r}")
    gp = gp if gp is not None else GPState()
    history: list[AdaptRound] = []
    best_phi, best_value = None, -math.inf
    for t in range(1, rounds + 1):
        b = beta if beta_schedule == "constant" else log_beta(t, len(grid))
        phi = propose_next(gp, grid, b)
        value = float(objective(phi))
        gp.observe(phi, value)
        if value > best_value:
            best_phi, best_value = phi, value
        history.append(AdaptRound(t, phi, value, best_phi, best_value))
    return history


def final_fraction_mean(returns: Sequence[float], fraction: float = 0.2) -> float:
    """Mean over the last ``fraction`` of a sequence (at least one element)."""
    if not returns:
        raise ValueError("no returns to average")
    k = max(1, math.ceil(len(returns) * fraction))
    return float(np.mean(returns[-k:]))


def training_objective(env_factory: Callable[[int], object], cfg: LearningConfig, episodes_per_round: int,
                       rng: np.random.Generator) -> Callable[[tuple[float, ...]], float]:
    """Objective that trains a fresh agent per call on a fresh environment.

    Each call consumes one 63-bit seed from ``rng``; the agent and the
    environment are seeded from it independently.
    """
    round_cfg = replace(cfg, episodes=episodes_per_round)

    def evaluate(phi):
        seed = int(rng.integers(2**63))
        agent_seed, env_seed = np.random.SeedSequence(seed).spawn(2)
        env = env_factory(env_seed)
        agent = SplitQAgent.fresh(env, BiasProfile.from_weights(phi, label="adaptive"))
        records = train(agent, env, round_cfg, np.random.default_rng(agent_seed))
        return final_fraction_mean([r.total_reward for r in records])

    return evaluate


def adapt_loop(env_factory, cfg: LearningConfig, grid: CandidateGrid, rounds: int, episodes_per_round: int,
               rng: np.random.Generator, gp: GPState | None = None, beta: float = 4.0,
               beta_schedule: str = "constant") -> list[AdaptRound]:
    if episodes_per_round < 1:
        raise ValueError("episodes_per_round must be >= 1")
    objective = training_objective(env_factory, cfg, episodes_per_round, rng)
    return optimize(objective, grid, rounds, gp, beta, beta_schedule)
