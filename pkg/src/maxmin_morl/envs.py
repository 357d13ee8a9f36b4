"""Desk-scale environments expressed as tabular MOMDPs plus episodic samplers.

Two concrete environments are provided:

* a one-state, three-action, two-objective MDP whose max-min solution is
  known in closed form, and
* a four-room grid world where the agent collects items of two types; the
  state is (agent cell, collection bitmask) and the reward vector counts
  collected items per type.

Exact solvers work on the stationary discounted model without a step limit;
sampled interaction goes through :class:`EpisodeSampler`, which applies the
episode time limit outside the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .momdp import TabularMOMDP, validate

def _default_walls() -> frozenset:
    """Standard four-room walls: cross at row 5 / col 5 with four doorways."""
    walls = set()
    for r in range(11):
        if r not in (2, 8):
            walls.add((r, 5))
    for c in range(11):
        if c not in (2, 8):
            walls.add((5, c))
    return frozenset(walls)


def default_four_room_layout() -> tuple[str, ...]:
    """Default 11x11 four-room maze as strings ('#' wall, '.' free)."""
    walls = _default_walls()
    rows = []
    for r in range(11):
        rows.append("".join("#" if (r, c) in walls else "." for c in range(11)))
    return tuple(rows)


@dataclass(frozen=True)
class FourRoomConfig:
    """Layout and item placement for the four-room collection task.

    ``start = None`` draws the start cell uniformly from the free cells that
    carry no item; a fixed ``(row, col)`` start is also accepted.
    """

    layout: tuple[str, ...] = field(default_factory=default_four_room_layout)
    items: tuple[tuple[tuple[int, int], int], ...] = (
        ((6, 2), 1),
        ((6, 8), 2),
        ((6, 9), 2),
        ((7, 9), 2),
    )
    start: Optional[tuple[int, int]] = None
    max_episode_steps: int = 200
    discount: float = 0.99

    @staticmethod
    def from_dict(doc: dict) -> "FourRoomConfig":
        kwargs = {}
        if "layout" in doc:
            kwargs["layout"] = tuple(doc["layout"])
        if "items" in doc:
            kwargs["items"] = tuple((tuple(item["pos"]), int(item["type"])) for item in doc["items"])
        if "start" in doc:
            kwargs["start"] = None if doc["start"] is None else tuple(doc["start"])
        if "max_episode_steps" in doc:
            kwargs["max_episode_steps"] = int(doc["max_episode_steps"])
        if "gamma" in doc:
            kwargs["discount"] = float(doc["gamma"])
        return FourRoomConfig(**kwargs)


@dataclass(frozen=True)
class EpisodicEnv:
    """A tabular model paired with episode semantics for sampled interaction."""

    model: TabularMOMDP
    max_episode_steps: int
    terminal_states: frozenset = frozenset()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_episode_steps < 1:
            raise ValueError(f"max_episode_steps must be >= 1, got {self.max_episode_steps}")
        for s in self.terminal_states:
            row = self.model.transition[s]
            expected = np.zeros(self.model.num_states)
            expected[s] = 1.0
            if not np.allclose(row, expected[None, :], atol=1e-12):
                raise ValueError(f"terminal state {s} is not absorbing")
            if np.any(self.model.reward[s] != 0.0):
                raise ValueError(f"terminal state {s} has nonzero reward")


def one_state_env(gamma: float = 0.9) -> TabularMOMDP:
    """Single-state MDP with rewards [3,0], [0,3], [1,1] on its three actions.

    Its max-min optimum mixes the first two actions equally, which no
    deterministic policy can achieve, so it exercises every solver path.
    """
    transition = np.ones((1, 3, 1))
    reward = np.array([[[3.0, 0.0], [0.0, 3.0], [1.0, 1.0]]])
    model = TabularMOMDP(transition, reward, np.array([1.0]), gamma)
    validate(model)
    return model


def one_state_episodic(gamma: float = 0.9, max_episode_steps: int = 100) -> EpisodicEnv:
    """One-state model wrapped as a (degenerate) episodic environment."""
    return EpisodicEnv(one_state_env(gamma), max_episode_steps)


def _parse_layout(layout) -> tuple[int, int, frozenset]:
    rows = len(layout)
    if rows == 0:
        raise ValueError("layout has no rows")
    cols = len(layout[0])
    walls = set()
    for r, line in enumerate(layout):
        if len(line) != cols:
            raise ValueError(f"layout row {r} has length {len(line)}, expected {cols}")
        for c, ch in enumerate(line):
            if ch == "#":
                walls.add((r, c))
            elif ch != ".":
                raise ValueError(f"layout cell ({r}, {c}) has unknown symbol {ch!r}")
    return rows, cols, frozenset(walls)


def four_room_env(config: Optional[FourRoomConfig] = None) -> EpisodicEnv:
    """Build the four-room collection task as a tabular model.

    States are (free cell, item bitmask) pairs plus one absorbing terminal.
    Movement is deterministic; bumping a wall keeps the agent in place.
    Entering a cell whose item bit is unset sets the bit and pays +1 on that
    item's objective.  Once every bit is set, the next transition moves to
    the terminal state.
    """
    cfg = config or FourRoomConfig()
    n_rows, n_cols, walls = _parse_layout(cfg.layout)
    free_cells = [(r, c) for r in range(n_rows) for c in range(n_cols) if (r, c) not in walls]
    cell_index = {cell: i for i, cell in enumerate(free_cells)}

    item_cells = {}
    for idx, (pos, item_type) in enumerate(cfg.items):
        pos = tuple(pos)
        if pos in walls or pos not in cell_index:
            raise ValueError(f"item {idx} at {pos} is not on a free cell")
        if pos in item_cells:
            raise ValueError(f"two items share cell {pos}")
        if item_type not in (1, 2):
            raise ValueError(f"item {idx} has type {item_type}, expected 1 or 2")
        item_cells[pos] = (idx, item_type)
    if cfg.start is not None:
        start = tuple(cfg.start)
        if start not in cell_index:
            raise ValueError(f"start {start} is not on a free cell")
        if start in item_cells:
            raise ValueError(f"start {start} sits on an item")

    n_items = len(cfg.items)
    n_masks = 1 << n_items
    n_cells = len(free_cells)
    num_states = n_cells * n_masks + 1
    terminal = num_states - 1
    full_mask = n_masks - 1

    def state_of(cell, mask):
        return cell_index[cell] * n_masks + mask

    moves = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right
    transition = np.zeros((num_states, 4, num_states))
    reward = np.zeros((num_states, 4, 2))
    for cell in free_cells:
        for mask in range(n_masks):
            s = state_of(cell, mask)
            if mask == full_mask:
                transition[s, :, terminal] = 1.0
                continue
            for a, (dr, dc) in enumerate(moves):
                nxt = (cell[0] + dr, cell[1] + dc)
                if nxt not in cell_index:
                    nxt = cell
                new_mask = mask
                if nxt in item_cells:
                    idx, item_type = item_cells[nxt]
                    if not mask & (1 << idx):
                        new_mask = mask | (1 << idx)
                        reward[s, a, item_type - 1] = 1.0
                transition[s, a, state_of(nxt, new_mask)] = 1.0
    transition[terminal, :, terminal] = 1.0

    initial = np.zeros(num_states)
    if cfg.start is not None:
        initial[state_of(tuple(cfg.start), 0)] = 1.0
    else:
        start_cells = [cell for cell in free_cells if cell not in item_cells]
        for cell in start_cells:
            initial[state_of(cell, 0)] = 1.0 / len(start_cells)

    model = TabularMOMDP(transition, reward, initial, cfg.discount)
    validate(model)
    info = {
        "config": cfg,
        "free_cells": tuple(free_cells),
        "cell_index": cell_index,
        "num_masks": n_masks,
        "terminal": terminal,
        "item_counts": (
            sum(1 for _, t in cfg.items if t == 1),
            sum(1 for _, t in cfg.items if t == 2),
        ),
    }
    return EpisodicEnv(model, cfg.max_episode_steps, frozenset({terminal}), info)


def random_momdp(seed: int, p: int, q: int, K: int, gamma: float) -> TabularMOMDP:
    """Random test instance: Dirichlet(1) rows, U[0,1] rewards, Dirichlet mu0."""
    if p < 1 or q < 1 or K < 1:
        raise ValueError(f"sizes must be positive, got p={p}, q={q}, K={K}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(p), size=(p, q))
    reward = rng.uniform(0.0, 1.0, size=(p, q, K))
    initial = rng.dirichlet(np.ones(p))
    model = TabularMOMDP(transition, reward, initial, gamma)
    validate(model)
    return model


def env_step(env: EpisodicEnv, state: int, action: int, rng: np.random.Generator):
    """Sample one transition; ``done`` reports arrival in a terminal state.

    The per-episode step limit lives in :class:`EpisodeSampler`, not here.
    """
    p, q = env.model.num_states, env.model.num_actions
    if not 0 <= state < p:
        raise ValueError(f"state {state} out of range [0, {p})")
    if not 0 <= action < q:
        raise ValueError(f"action {action} out of range [0, {q})")
    next_state = int(rng.choice(p, p=env.model.transition[state, action]))
    reward = env.model.reward[state, action].copy()
    return next_state, reward, next_state in env.terminal_states


class EpisodeSampler:
    """Stateful episode runner: tracks the step count and episode resets.

    Transition rows are cached as inverse CDFs so stepping costs one uniform
    draw; sampling is bit-identical to :func:`env_step` with the same rng.
    """

    def __init__(self, env: EpisodicEnv, rng: np.random.Generator):
        self.env = env
        self.rng = rng
        self._state = None
        self._steps = 0
        self._cum_transition = env.model.transition.cumsum(axis=2)
        self._cum_initial = env.model.initial_dist.cumsum()

    def reset(self) -> int:
        self._state = int(np.searchsorted(self._cum_initial, self.rng.random(), side="right"))
        self._steps = 0
        return self._state

    def step(self, action: int):
        """Advance one step; returns (next_state, reward, terminal, truncated).

        ``terminal`` marks absorption (no bootstrap value remains);
        ``truncated`` marks the episode time limit.  Either one ends the
        episode and requires reset() before the next step.
        """
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        state = self._state
        next_state = int(
            np.searchsorted(self._cum_transition[state, action], self.rng.random(), side="right")
        )
        next_state = min(next_state, self.env.model.num_states - 1)
        reward = self.env.model.reward[state, action]
        terminal = next_state in self.env.terminal_states
        self._steps += 1
        truncated = not terminal and self._steps >= self.env.max_episode_steps
        self._state = None if (terminal or truncated) else next_state
        return next_state, reward, terminal, truncated
