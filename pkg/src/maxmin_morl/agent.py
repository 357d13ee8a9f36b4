"""Model-free max-min training: tabular soft Q-learning with weight descent.

The training loop alternates two updates:

* soft Q-learning of the main table under the current scalarization weights
  (squared soft-Bellman residual against a Polyak-averaged target table),
* a zeroth-order weight step: the main table is cloned once per Gaussian
  weight perturbation, every clone takes one soft Q-learning step with its
  perturbed weights on a common minibatch and a shared target snapshot, the
  initial-state objective estimate of each clone feeds a linear regression,
  and the slope drives a projected gradient step on the simplex.

All randomness flows from the config seed through named substreams (env,
act, batch, clones, perturbations), so disabling one component never
reshuffles the others.
"""

from __future__ import annotations

import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .envs import EpisodeSampler, EpisodicEnv
from .solvers import MIN_TEMPERATURE, SoftQTable, soft_optimal_policy
from .weights import project_simplex, regression_gradient


def substream(seed: int, name: str) -> np.random.Generator:
    """Deterministic named RNG substream of a base seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    reward: np.ndarray
    next_state: int
    done: bool  # absorbing terminal, not the episode time limit


@dataclass(frozen=True)
class Batch:
    """Column view of a minibatch of transitions."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # (n, K)
    next_states: np.ndarray
    dones: np.ndarray

    @staticmethod
    def from_transitions(transitions: Sequence[Transition]) -> "Batch":
        return Batch(
            states=np.array([t.state for t in transitions], dtype=int),
            actions=np.array([t.action for t in transitions], dtype=int),
            rewards=np.array([t.reward for t in transitions], dtype=float),
            next_states=np.array([t.next_state for t in transitions], dtype=int),
            dones=np.array([t.done for t in transitions], dtype=bool),
        )

    def __len__(self) -> int:
        return self.states.size


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling."""

    def __init__(self, capacity: int, num_objectives: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._states = np.zeros(capacity, dtype=int)
        self._actions = np.zeros(capacity, dtype=int)
        self._rewards = np.zeros((capacity, num_objectives))
        self._next_states = np.zeros(capacity, dtype=int)
        self._dones = np.zeros(capacity, dtype=bool)
        self._size = 0
        self._head = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state: int, action: int, reward: np.ndarray, next_state: int, done: bool) -> None:
        i = self._head
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_states[i] = next_state
        self._dones[i] = done
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(
            states=self._states[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_states=self._next_states[idx].copy(),
            dones=self._dones[idx].copy(),
        )


@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters of the model-free loop.

    Defaults follow the reference configuration: temperature 0.1, replay
    capacity 50k, minibatch 32, Q learning rate 1e-3, Polyak ratio 1e-3,
    softmax exploration decaying over the first 10% of steps, 20
    perturbations of size 0.01, initial weight rate 0.01 on an inverse
    square-root schedule, and 3 main-table gradient steps per step after
    each weight update.  ``gamma=None`` adopts the environment's discount.
    """

    total_steps: int = 5000
    temperature: float = 0.1
    gamma: Optional[float] = None
    buffer_capacity: int = 50_000
    batch_size: int = 32
    q_learning_rate: float = 0.001
    target_update_ratio: float = 0.001
    explore_start: float = 5.0
    explore_end: float = 0.1
    explore_fraction: float = 0.1
    num_perturbations: int = 20
    perturbation: float = 0.01
    weight_learning_rate: float = 0.01
    learn_weights: bool = True
    weight_iters: Optional[int] = None  # cap on weight updates; None = unlimited
    initial_weights: Optional[tuple] = None  # None = uniform
    main_updates_per_step: int = 3
    steps_per_iteration: int = 1
    warmup_steps: int = 50
    q_init: float = 0.0  # optimistic initialization of both tables
    seed: int = 0
    verify_clone_isolation: bool = True

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if self.temperature < MIN_TEMPERATURE:
            raise ValueError(f"temperature must be at least {MIN_TEMPERATURE}")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in (
            "q_learning_rate",
            "target_update_ratio",
            "explore_start",
            "explore_end",
            "perturbation",
            "weight_learning_rate",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.target_update_ratio > 1.0:
            raise ValueError("target_update_ratio must lie in (0, 1]")
        if not 0.0 < self.explore_fraction <= 1.0:
            raise ValueError("explore_fraction must lie in (0, 1]")
        if self.num_perturbations < 1 or self.batch_size < 1:
            raise ValueError("num_perturbations and batch_size must be positive")
        if self.main_updates_per_step < 0 or self.steps_per_iteration < 1:
            raise ValueError("bad update cadence")
        if self.warmup_steps < 0 or (self.weight_iters is not None and self.weight_iters < 0):
            raise ValueError("warmup_steps and weight_iters must be nonnegative")

    def replace(self, **kwargs) -> "AgentConfig":
        from dataclasses import replace as dc_replace

        return dc_replace(self, **kwargs)


def _as_batch(batch: Union[Batch, Sequence[Transition]]) -> Batch:
    return batch if isinstance(batch, Batch) else Batch.from_transitions(batch)


def soft_q_update(
    q_values: np.ndarray,
    target_values: np.ndarray,
    batch: Union[Batch, Sequence[Transition]],
    weights: np.ndarray,
    learning_rate: float,
    gamma: float,
    temperature: float,
) -> np.ndarray:
    """One tabular step on the squared soft-Bellman residual; returns a copy.

    Each (state, action) entry appearing in the batch moves toward the mean
    of its targets  sum_k w_k r^(k) + gamma * alpha * logsumexp(target(s')/alpha),
    with no bootstrap on terminal transitions.  A learning rate of 1 with a
    single-transition batch sets the entry to its target exactly.
    """
    if temperature < MIN_TEMPERATURE:
        raise ValueError(f"temperature {temperature} below minimum {MIN_TEMPERATURE}")
    b = _as_batch(batch)
    if len(b) == 0:
        raise ValueError("batch must be nonempty")
    w = np.asarray(weights, dtype=float).ravel()
    z = target_values[b.next_states] / temperature
    zmax = z.max(axis=1)
    next_value = temperature * (zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1)))
    targets = b.rewards @ w + gamma * np.where(b.dones, 0.0, next_value)
    q = q_values.copy()
    flat = b.states * q.shape[1] + b.actions
    sums = np.bincount(flat, weights=targets, minlength=q.size)
    counts = np.bincount(flat, minlength=q.size)
    touched = counts > 0
    mean_targets = sums[touched] / counts[touched]
    q.reshape(-1)[touched] += learning_rate * (mean_targets - q.reshape(-1)[touched])
    return q


def act(q_values: np.ndarray, state: int, explore_temperature: float, rng: np.random.Generator) -> int:
    """Sample an action from softmax(q(state, .) / explore_temperature)."""
    if explore_temperature <= 0:
        raise ValueError(f"explore_temperature must be positive, got {explore_temperature}")
    z = q_values[state] / explore_temperature
    z = z - z.max()
    p = np.exp(z)
    cum = np.cumsum(p)
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), p.size - 1)


def estimate_objective(q_values: np.ndarray, initial_dist: np.ndarray, temperature: float) -> float:
    """Initial-state objective estimate: E_{s~mu0}[alpha * logsumexp(q(s,.)/alpha)].

    The expectation over the initial distribution is exact (tabular), not a
    sample mean; states outside the support contribute nothing and are
    skipped.
    """
    mu = np.asarray(initial_dist, dtype=float)
    support = np.nonzero(mu)[0]
    z = q_values[support] / temperature
    zmax = z.max(axis=1)
    state_values = temperature * (zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1)))
    return float(mu[support] @ state_values)


def _clone_estimates(
    q_values: np.ndarray,
    target_snapshot: np.ndarray,
    batch: Batch,
    perturbed: np.ndarray,
    learning_rate: float,
    gamma: float,
    temperature: float,
    initial_dist: np.ndarray,
) -> np.ndarray:
    """Objective estimate of every perturbed-weight clone, without copies.

    Numerically equivalent (to rounding) to cloning the table once per
    perturbation, applying :func:`soft_q_update`, and calling
    :func:`estimate_objective`; the clones share everything except the
    reward scalarization, so only the batch-touched entries and the
    initial-distribution rows they intersect need per-clone work.
    """
    n_clones = perturbed.shape[0]
    q_n = q_values.shape[1]
    z = target_snapshot[batch.next_states] / temperature
    zmax = z.max(axis=1)
    next_value = temperature * (zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1)))
    boot = gamma * np.where(batch.dones, 0.0, next_value)  # (B,)
    targets = perturbed @ batch.rewards.T + boot[None, :]  # (N, B)

    flat = batch.states * q_n + batch.actions
    uniq, inv = np.unique(flat, return_inverse=True)
    onehot = inv[:, None] == np.arange(uniq.size)[None, :]  # (B, U)
    counts = onehot.sum(axis=0).astype(float)
    means = (targets @ onehot) / counts[None, :]  # (N, U)
    old = q_values.reshape(-1)[uniq]
    new_entries = old[None, :] + learning_rate * (means - old[None, :])  # (N, U)

    mu = np.asarray(initial_dist, dtype=float)
    support = np.nonzero(mu)[0]
    zq = q_values[support] / temperature
    zqmax = zq.max(axis=1)
    base_vals = temperature * (zqmax + np.log(np.exp(zq - zqmax[:, None]).sum(axis=1)))
    base_total = float(mu[support] @ base_vals)

    rows = uniq // q_n
    cols = uniq % q_n
    sup_pos = np.full(q_values.shape[0], -1)
    sup_pos[support] = np.arange(support.size)
    touch = sup_pos[rows] >= 0
    estimates = np.full(n_clones, base_total)
    if np.any(touch):
        trows = np.unique(rows[touch])
        tpos = np.full(q_values.shape[0], -1)
        tpos[trows] = np.arange(trows.size)
        modified = np.broadcast_to(q_values[trows], (n_clones, trows.size, q_n)).copy()
        modified[:, tpos[rows[touch]], cols[touch]] = new_entries[:, touch]
        zm = modified / temperature
        zmmax = zm.max(axis=2)
        vals = temperature * (zmmax + np.log(np.exp(zm - zmmax[:, :, None]).sum(axis=2)))
        weights_mu = mu[trows]
        estimates = estimates - float(weights_mu @ base_vals[sup_pos[trows]]) + vals @ weights_mu
    return estimates


@dataclass
class TrainResult:
    policy: np.ndarray
    weights: np.ndarray
    weight_history: np.ndarray  # (updates + 1, K)
    q_values: np.ndarray
    episodes: list = field(default_factory=list)
    metrics: list = field(default_factory=list)


def _explore_temperature(cfg: AgentConfig, step: int) -> float:
    decay_steps = max(1, int(cfg.explore_fraction * cfg.total_steps))
    frac = min(step / decay_steps, 1.0)
    return cfg.explore_start + frac * (cfg.explore_end - cfg.explore_start)


def train(env: EpisodicEnv, cfg: AgentConfig) -> TrainResult:
    """Run the model-free max-min loop on an episodic environment.

    Warm-up trains the main table under uniform weights.  Afterwards, every
    ``steps_per_iteration``-th step performs one weight iteration (clone,
    update, estimate, regress, project) before the scheduled main-table
    updates.  Weight learning can be disabled entirely (``learn_weights``)
    or capped (``weight_iters``); both leave every other stream untouched.
    """
    model = env.model
    p, q_n, K = model.num_states, model.num_actions, model.num_objectives
    gamma = model.discount if cfg.gamma is None else cfg.gamma

    rng_env = substream(cfg.seed, "env")
    rng_act = substream(cfg.seed, "act")
    rng_batch = substream(cfg.seed, "batch")
    rng_clone = substream(cfg.seed, "clone-batch")
    rng_perturb = substream(cfg.seed, "perturbations")

    sampler = EpisodeSampler(env, rng_env)
    buffer = ReplayBuffer(cfg.buffer_capacity, K)
    q = np.full((p, q_n), float(cfg.q_init))
    target = np.full((p, q_n), float(cfg.q_init))
    if cfg.initial_weights is None:
        w = np.full(K, 1.0 / K)
    else:
        w = project_simplex(np.asarray(cfg.initial_weights, dtype=float))
    weight_history = [w.copy()]
    weight_updates = 0

    episodes = []
    metrics = []
    ep_return = np.zeros(K)
    ep_discount = 1.0
    # Running per-objective mean over the most recent episodes; its minimum
    # is the headline training metric.
    window = deque(maxlen=200)

    def main_update(current_w):
        nonlocal q, target
        batch = buffer.sample(rng_batch, cfg.batch_size)
        q = soft_q_update(q, target, batch, current_w, cfg.q_learning_rate, gamma, cfg.temperature)
        target = cfg.target_update_ratio * q + (1.0 - cfg.target_update_ratio) * target

    state = sampler.reset()
    for step in range(cfg.total_steps):
        action = act(q, state, _explore_temperature(cfg, step), rng_act)
        next_state, reward, terminal, truncated = sampler.step(action)
        buffer.push(state, action, reward, next_state, terminal)
        ep_return += ep_discount * reward
        ep_discount *= gamma
        if terminal or truncated:
            episodes.append(ep_return.copy())
            window.append(ep_return.copy())
            metrics.append(
                {
                    "step": step + 1,
                    "episode": len(episodes),
                    "returns": ep_return.copy(),
                    "running_min": float(np.mean(window, axis=0).min()),
                    "weights": w.copy(),
                    "objective_estimate": estimate_objective(q, model.initial_dist, cfg.temperature),
                    "explore_temperature": _explore_temperature(cfg, step),
                }
            )
            ep_return = np.zeros(K)
            ep_discount = 1.0
            state = sampler.reset()
        else:
            state = next_state

        if len(buffer) < cfg.batch_size:
            continue
        if step < cfg.warmup_steps:
            main_update(w)
            continue

        run_weight_update = (
            cfg.learn_weights
            and (cfg.weight_iters is None or weight_updates < cfg.weight_iters)
            and (step - cfg.warmup_steps) % cfg.steps_per_iteration == 0
        )
        if run_weight_update:
            perturbed = w[None, :] + cfg.perturbation * rng_perturb.standard_normal((cfg.num_perturbations, K))
            common = buffer.sample(rng_clone, cfg.batch_size)
            target_snapshot = target.copy()
            checksum = zlib.crc32(q.tobytes()) if cfg.verify_clone_isolation else None
            estimates = _clone_estimates(
                q, target_snapshot, common, perturbed, cfg.q_learning_rate, gamma, cfg.temperature,
                model.initial_dist,
            )
            if checksum is not None and zlib.crc32(q.tobytes()) != checksum:
                raise RuntimeError("clone updates mutated the main Q table")
            slope = regression_gradient(perturbed, estimates)
            lr_w = cfg.weight_learning_rate / np.sqrt(weight_updates + 1.0)
            w = project_simplex(w - lr_w * slope)
            weight_updates += 1
            weight_history.append(w.copy())
        for _ in range(cfg.main_updates_per_step):
            main_update(w)

    q_table = SoftQTable(q, cfg.temperature)
    return TrainResult(
        policy=soft_optimal_policy(q_table),
        weights=w,
        weight_history=np.array(weight_history),
        q_values=q,
        episodes=episodes,
        metrics=metrics,
    )
