"""Small episodic tabular environments and an exact value-iteration solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np
from scipy import sparse

from .core import StepOutcome, split_reward


class MarkovEnv(Protocol):
    num_states: int
    num_actions: int
    horizon: int

    def reset(self) -> int: ...

    def step(self, action: int) -> StepOutcome: ...


class ConvergenceError(RuntimeError):
    pass


@dataclass
class TabularModel:
    """Known dynamics of a finite MDP.

    ``transition`` and ``reward`` are sparse ``(S*A, S)`` matrices sharing a
    sparsity pattern; row ``s*A + a`` describes taking ``a`` in ``s``.  Rewards
    are expectations over any reward noise.  Terminal states are absorbing and
    have value zero.
    """

    num_states: int
    num_actions: int
    transition: sparse.csr_matrix
    reward: sparse.csr_matrix
    terminal: np.ndarray

    def __post_init__(self):
        sums = np.asarray(self.transition.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-9)
        if bad.size:
            s, a = divmod(int(bad[0]), self.num_actions)
            raise ValueError(f"transition row for state {s}, action {a} sums to {sums[bad[0]]}")
        if not np.all(np.isfinite(self.reward.data)):
            raise ValueError("rewards must be finite")

    @classmethod
    def from_rows(cls, num_states: int, num_actions: int, rows, terminal) -> "TabularModel":
        """Build from ``rows[(s, a)] = [(next_state, prob, reward), ...]``.

        Missing rows (typically terminal states) become zero-reward self-loops.
        """
        r_idx, c_idx, probs, rewards = [], [], [], []
        for s in range(num_states):
            for a in range(num_actions):
                entries = rows.get((s, a)) or [(s, 1.0, 0.0)]
                merged: dict[int, list[float]] = {}
                for nxt, p, r in entries:
                    acc = merged.setdefault(nxt, [0.0, 0.0])
                    acc[0] += p
                    acc[1] += p * r
                for nxt, (p, pr) in sorted(merged.items()):
                    r_idx.append(s * num_actions + a)
                    c_idx.append(nxt)
                    probs.append(p)
                    rewards.append(pr / p if p else 0.0)
        shape = (num_states * num_actions, num_states)
        transition = sparse.csr_matrix((probs, (r_idx, c_idx)), shape=shape)
        reward = sparse.csr_matrix((rewards, (r_idx, c_idx)), shape=shape)
        return cls(num_states, num_actions, transition, reward, np.asarray(terminal, dtype=bool))

    def expected_reward(self) -> np.ndarray:
        """Expected immediate reward, shape ``(S, A)``."""
        flat = np.asarray(self.transition.multiply(self.reward).sum(axis=1)).ravel()
        return flat.reshape(self.num_states, self.num_actions)

    def q_values(self, values: np.ndarray, gamma: float) -> np.ndarray:
        cont = np.where(self.terminal, 0.0, values)
        q = self.expected_reward() + gamma * (self.transition @ cont).reshape(self.num_states, self.num_actions)
        q[self.terminal] = 0.0
        return q


def value_iteration(model: TabularModel, gamma: float, tol: float = 1e-10,
                    max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    values = np.zeros(model.num_states)
    for _ in range(max_iter):
        new = model.q_values(values, gamma).max(axis=1)
        delta = np.max(np.abs(new - values)) if values.size else 0.0
        values = new
        if delta < tol:
            policy = np.argmax(model.q_values(values, gamma), axis=1)
            return values, policy
    raise ConvergenceError(f"value iteration did not converge within {max_iter} sweeps")


RewardSampler = Callable[[int, int, int, np.random.Generator], float]


class TabularEnv:
    """Samples episodes from a :class:`TabularModel`.

    Transitions are drawn from the model; rewards come from the model's table
    unless a ``reward_sampler`` adds noise (its mean must match the model).
    """

    def __init__(self, model: TabularModel, start: int, *, horizon: int, rng=None,
                 reward_sampler: RewardSampler | None = None, name: str = "tabular"):
        self.model = model
        self.num_states = model.num_states
        self.num_actions = model.num_actions
        self.start = start
        self.horizon = horizon
        self.rng = np.random.default_rng(rng)
        self.reward_sampler = reward_sampler
        self.name = name
        self.state = start
        P = model.transition
        self._next = [P.indices[P.indptr[i]:P.indptr[i + 1]] for i in range(P.shape[0])]
        self._prob = [P.data[P.indptr[i]:P.indptr[i + 1]] for i in range(P.shape[0])]
        R = model.reward
        self._rew = [R[i].toarray().ravel() for i in range(R.shape[0])]

    def reset(self) -> int:
        self.state = self.start
        return self.state

    def step(self, action: int) -> StepOutcome:
        if not 0 <= action < self.num_actions:
            raise IndexError(f"action {action} out of range")
        if self.model.terminal[self.state]:
            raise RuntimeError("step() called on a terminal state; call reset()")
        row = self.state * self.num_actions + action
        nexts, probs = self._next[row], self._prob[row]
        nxt = int(nexts[0]) if len(nexts) == 1 else int(self.rng.choice(nexts, p=probs))
        if self.reward_sampler is None:
            reward = float(self._rew[row][nxt])
        else:
            reward = float(self.reward_sampler(self.state, action, nxt, self.rng))
        self.state = nxt
        return StepOutcome(nxt, reward, bool(self.model.terminal[nxt]))


# --- chain -----------------------------------------------------------------

RIGHT, LEFT = 0, 1


def make_chain(n: int, *, horizon: int | None = None) -> TabularEnv:
    """Corridor s0..s(n-1); action 0 moves right, action 1 moves left.

    Entering the last state pays +1 and ends the episode.
    """
    if n < 2:
        raise ValueError(f"chain needs n >= 2, got {n}")
    rows = {}
    for s in range(n - 1):
        right = s + 1
        rows[(s, RIGHT)] = [(right, 1.0, 1.0 if right == n - 1 else 0.0)]
        rows[(s, LEFT)] = [(max(s - 1, 0), 1.0, 0.0)]
    terminal = np.zeros(n, dtype=bool)
    terminal[n - 1] = True
    model = TabularModel.from_rows(n, 2, rows, terminal)
    return TabularEnv(model, 0, horizon=horizon or 20 * n, name=f"chain{n}")


# --- grid pacman -----------------------------------------------------------

UP, DOWN, WEST, EAST = 0, 1, 2, 3
_MOVES = {UP: (0, -1), DOWN: (0, 1), WEST: (-1, 0), EAST: (1, 0)}


class GridPacman(TabularEnv):
    """Grid with pellets and static ghost tiles.

    State index is ``cell * 2**P + mask`` where bit ``i`` of ``mask`` is set
    while pellet ``i`` is uneaten; the extra last index is the absorbing end
    state.  Cells are numbered ``y * width + x``.
    """

    def decode(self, state: int) -> tuple[tuple[int, int], int] | None:
        if state == self.num_states - 1:
            return None
        cell, mask = divmod(state, 2 ** len(self.pellets))
        return (cell % self.width, cell // self.width), mask

    def encode(self, pos: tuple[int, int], mask: int) -> int:
        return (pos[1] * self.width + pos[0]) * 2 ** len(self.pellets) + mask


def make_grid_pacman(width: int, height: int, pellet_reward: float = 1.0, ghost_penalty: float = 10.0,
                     ghost_cells=(), *, pellet_cells=None, start=(0, 0), horizon: int | None = None) -> GridPacman:
    """Build a static-ghost pacman grid.

    ``pellet_cells`` defaults to the three corners other than the start.
    Walls are the grid edge; bumping into one leaves the agent in place.
    """
    if width < 2 or height < 2:
        raise ValueError("grid dimensions must be >= 2")
    cells = {(x, y) for x in range(width) for y in range(height)}
    start = tuple(start)
    ghosts = [tuple(g) for g in ghost_cells]
    if pellet_cells is None:
        corners = [(0, 0), (width - 1, 0), (0, height - 1), (width - 1, height - 1)]
        pellet_cells = [c for c in corners if c != start and c not in ghosts]
    pellets = [tuple(p) for p in pellet_cells]
    for label, group in (("ghost", ghosts), ("pellet", pellets), ("start", [start])):
        for c in group:
            if c not in cells:
                raise ValueError(f"{label} cell {c} lies outside the {width}x{height} grid")
    if set(pellets) & set(ghosts):
        raise ValueError("a cell cannot hold both a pellet and a ghost")
    if len(set(pellets)) != len(pellets):
        raise ValueError("duplicate pellet cells")
    if not pellets:
        raise ValueError("at least one pellet is required")
    if len(pellets) > 12:
        raise ValueError("at most 12 pellets are supported (state space grows as 2**pellets)")

    n_masks = 2 ** len(pellets)
    end = width * height * n_masks
    num_states = end + 1

    def encode(pos, mask):
        return (pos[1] * width + pos[0]) * n_masks + mask

    rows = {}
    for (x, y) in cells:
        for mask in range(n_masks):
            s = encode((x, y), mask)
            for a, (dx, dy) in _MOVES.items():
                if (x, y) in ghosts or mask == 0:
                    # unreachable except as a start state: any move ends the episode
                    rows[(s, a)] = [(end, 1.0, -ghost_penalty if (x, y) in ghosts else 0.0)]
                    continue
                nxt = (x + dx, y + dy)
                if nxt not in cells:
                    nxt = (x, y)
                if nxt in ghosts:
                    rows[(s, a)] = [(end, 1.0, -ghost_penalty)]
                    continue
                reward, new_mask = 0.0, mask
                if nxt in pellets:
                    bit = 1 << pellets.index(nxt)
                    if mask & bit:
                        reward, new_mask = pellet_reward, mask & ~bit
                rows[(s, a)] = [(end if new_mask == 0 else encode(nxt, new_mask), 1.0, reward)]
    terminal = np.zeros(num_states, dtype=bool)
    terminal[end] = True
    model = TabularModel.from_rows(num_states, 4, rows, terminal)
    start_mask = n_masks - 1
    if start in pellets:
        raise ValueError("the start cell cannot hold a pellet")
    env = GridPacman(model, encode(start, start_mask), horizon=horizon or 10 * width * height * len(pellets),
                     name=f"pacman{width}x{height}")
    env.width, env.height, env.pellets, env.ghosts = width, height, pellets, ghosts
    return env


# --- risky path ------------------------------------------------------------

RISKY, SAFE, MODERATE = 0, 1, 2
FORWARD, BACK, STAY = 0, 1, 2


class RiskyPath(TabularEnv):
    """Fork between a short penalised corridor and a long clean one.

    State 0 is the fork: action 0 enters the risky corridor, action 1 the safe
    one.  Risky corridor states are ``1..risky_len``, safe ones follow, then
    the optional moderate corridor, and the goal is the last state.  Inside a
    corridor action 0 steps towards the goal and action 1 steps back (from the
    first cell, back to the fork).  Every step taken from a risky cell costs
    ``penalty`` with probability ``risky_penalty_prob``.

    With ``mid_len`` set, the fork gains action 2 into a third corridor whose
    steps cost ``penalty`` with probability ``mid_penalty_prob``; action 2
    inside corridors stays put.
    """

    def branch_of(self, trajectory) -> int | None:
        """Fork action taken first in a trajectory (RISKY, SAFE or MODERATE)."""
        for s, a, *_ in trajectory:
            if s == 0:
                return int(a)
        return None

    def is_risky(self, state: int) -> bool:
        return 1 <= state <= self.risky_len


def make_risky_path(safe_len: int, risky_len: int, risky_penalty_prob: float, penalty: float,
                    goal_reward: float, *, mid_len: int | None = None, mid_penalty_prob: float = 0.0,
                    horizon: int | None = None) -> RiskyPath:
    if risky_len < 1 or safe_len < 1:
        raise ValueError("corridor lengths must be >= 1")
    if not risky_len < safe_len:
        raise ValueError(f"risky_len ({risky_len}) must be shorter than safe_len ({safe_len})")
    for name, prob in (("risky_penalty_prob", risky_penalty_prob), ("mid_penalty_prob", mid_penalty_prob)):
        if not 0 <= prob <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    if mid_len is not None and mid_len < 1:
        raise ValueError("mid_len must be >= 1")
    if not (math.isfinite(penalty) and math.isfinite(goal_reward)):
        raise ValueError("penalty and goal_reward must be finite")

    fork = 0
    risky = list(range(1, risky_len + 1))
    safe = list(range(risky_len + 1, risky_len + safe_len + 1))
    mid = list(range(safe[-1] + 1, safe[-1] + 1 + (mid_len or 0)))
    goal = (mid or safe)[-1] + 1
    num_states = goal + 1
    num_actions = 2 if mid_len is None else 3
    step_penalty_prob = {s: risky_penalty_prob for s in risky}
    step_penalty_prob.update({s: mid_penalty_prob for s in mid})

    rows = {(fork, RISKY): [(risky[0], 1.0, 0.0)], (fork, SAFE): [(safe[0], 1.0, 0.0)]}
    if mid:
        rows[(fork, MODERATE)] = [(mid[0], 1.0, 0.0)]
    for cells in (risky, safe, mid):
        for i, s in enumerate(cells):
            extra = -penalty * step_penalty_prob.get(s, 0.0)
            fwd = cells[i + 1] if i + 1 < len(cells) else goal
            back = cells[i - 1] if i > 0 else fork
            rows[(s, FORWARD)] = [(fwd, 1.0, (goal_reward if fwd == goal else 0.0) + extra)]
            rows[(s, BACK)] = [(back, 1.0, extra)]
            if num_actions == 3:
                rows[(s, STAY)] = [(s, 1.0, extra)]
    terminal = np.zeros(num_states, dtype=bool)
    terminal[goal] = True
    model = TabularModel.from_rows(num_states, num_actions, rows, terminal)

    def sample(s, a, nxt, rng):
        r = goal_reward if nxt == goal else 0.0
        prob = step_penalty_prob.get(s)
        if prob and rng.random() < prob:
            r -= penalty
        return r

    env = RiskyPath(model, fork, horizon=horizon or 4 * (safe_len + 1), reward_sampler=sample,
                    name=f"risky{risky_len}-{safe_len}")
    env.risky_len, env.safe_len, env.mid_len = risky_len, safe_len, mid_len
    return env


# --- reward rescaling ------------------------------------------------------

@dataclass(frozen=True)
class RewardTransform:
    """Rescale and thin the two reward streams.

    After ``switch_episode`` (0-based episode index) the ``after`` transform
    takes over; this is the non-stationary variant.
    """

    pos_scale: float = 1.0
    neg_scale: float = 1.0
    pos_drop_prob: float = 0.0
    neg_drop_prob: float = 0.0
    switch_episode: int | None = None
    after: "RewardTransform | None" = None

    def __post_init__(self):
        for name in ("pos_scale", "neg_scale"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        for name in ("pos_drop_prob", "neg_drop_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if (self.switch_episode is None) != (self.after is None):
            raise ValueError("switch_episode and after must be given together")
        if self.after is not None and self.after.after is not None:
            raise ValueError("only a single switch is supported")

    def active(self, episode: int) -> "RewardTransform":
        if self.switch_episode is not None and episode >= self.switch_episode:
            return self.after
        return self

    @property
    def is_identity(self) -> bool:
        return (self.pos_scale, self.neg_scale, self.pos_drop_prob, self.neg_drop_prob) == (1, 1, 0, 0) \
            and self.after is None

    def apply(self, r: float, episode: int, rng: np.random.Generator) -> float:
        t = self.active(episode)
        r_pos, r_neg = split_reward(r)
        r_pos *= t.pos_scale
        r_neg *= t.neg_scale
        if r_pos and t.pos_drop_prob and rng.random() < t.pos_drop_prob:
            r_pos = 0.0
        if r_neg and t.neg_drop_prob and rng.random() < t.neg_drop_prob:
            r_neg = 0.0
        return r_pos + r_neg


POSITIVE_ONLY = RewardTransform(neg_scale=0.0)
NEGATIVE_ONLY = RewardTransform(pos_scale=0.0)


class RewardWrapper:
    """Applies a :class:`RewardTransform` to another environment's rewards.

    The episode index counts ``reset()`` calls unless ``episode_counter`` is
    supplied.  Transitions and termination pass through untouched.
    """

    def __init__(self, env, transform: RewardTransform, rng=None,
                 episode_counter: Callable[[], int] | None = None):
        self.env = env
        self.transform = transform
        self.rng = np.random.default_rng(rng)
        self.episode_counter = episode_counter
        self.num_states = env.num_states
        self.num_actions = env.num_actions
        self.horizon = env.horizon
        self._resets = 0

    def __getattr__(self, name):
        if name == "env":
            raise AttributeError(name)
        return getattr(self.env, name)

    @property
    def episode(self) -> int:
        if self.episode_counter is not None:
            return self.episode_counter()
        return max(self._resets - 1, 0)

    def reset(self) -> int:
        self._resets += 1
        return self.env.reset()

    def step(self, action: int) -> StepOutcome:
        out = self.env.step(action)
        return replace(out, reward=self.transform.apply(out.reward, self.episode, self.rng))


def wrap_rewards(env, transform: RewardTransform, rng=None, episode_counter=None) -> RewardWrapper:
    return RewardWrapper(env, transform, rng, episode_counter)
