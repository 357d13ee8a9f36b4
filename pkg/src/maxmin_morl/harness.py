"""Experiment harness: baselines, policy evaluation, sweeps, and run dispatch.

Runs are described by a :class:`RunConfig` (JSON-friendly) and produce a
:class:`RunResult` written as ``result.json`` plus per-seed metrics CSVs.
The result JSON is deterministic for a fixed config and seed list;
wall-clock time goes to a ``meta.json`` sidecar so that byte-identical
reruns stay byte-identical.

Baselines are tabular analogues of the reference value-based baselines:

* utilitarian: Q-learning with the hard max backup on the
  objective-averaged scalar reward, epsilon-greedy exploration;
* min-backup vector Q-learning ("mdqn"): a vector-valued table whose
  bootstrap action maximizes the minimum objective of reward plus
  discounted target value.

All algorithms in a comparison receive identical environment-step budgets.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import momdp
from .agent import AgentConfig, Batch, ReplayBuffer, TrainResult, act, substream, train
from .envs import (
    EpisodeSampler,
    EpisodicEnv,
    FourRoomConfig,
    four_room_env,
    one_state_episodic,
    random_momdp,
)
from .lp import maxmin_exact
from .momdp import TabularMOMDP, policy_return_vector
from .solvers import solve_regularized

SCHEMA_VERSION = 1

RUN_KINDS = ("solve-exact", "solve-lp", "train", "evaluate", "pareto-sweep", "ablation")
ALGORITHMS = ("proposed", "utilitarian", "mdqn")


# ---------------------------------------------------------------------------
# Environment construction


def build_environment(spec: dict) -> EpisodicEnv:
    """Build an episodic environment from its JSON description.

    Kinds: ``one-state`` (optional gamma, max_episode_steps), ``four-room``
    (FourRoomConfig fields), ``random`` (seed, p, q, K, gamma, optional
    max_episode_steps), ``momdp-json`` (path, max_episode_steps).
    """
    kind = spec.get("kind")
    if kind == "one-state":
        return one_state_episodic(
            gamma=float(spec.get("gamma", 0.9)),
            max_episode_steps=int(spec.get("max_episode_steps", 100)),
        )
    if kind == "four-room":
        return four_room_env(FourRoomConfig.from_dict(spec))
    if kind == "random":
        model = random_momdp(
            seed=int(spec.get("seed", 0)),
            p=int(spec["p"]),
            q=int(spec["q"]),
            K=int(spec["K"]),
            gamma=float(spec.get("gamma", 0.9)),
        )
        return EpisodicEnv(model, int(spec.get("max_episode_steps", 100)))
    if kind == "momdp-json":
        model = momdp.load_momdp(spec["path"])
        return EpisodicEnv(model, int(spec.get("max_episode_steps", 100)))
    raise ValueError(f"unknown environment kind {kind!r}")


def four_room_train_overrides() -> dict:
    """Agent settings tuned for the tabular four-room experiments.

    Tabular tables have no generalization across states, so the network-era
    learning rates are far too small at this scale: the Q learning rate,
    weight learning rate, temperature, exploration schedule, and table
    initialization are resized while the loop structure stays identical.
    The optimistic initialization drives coverage of the item-collection
    subspaces; the min-backup baseline keeps its published zero
    initialization, whose exploration pathology is part of what it is.
    """
    return {
        "total_steps": 100_000,
        "temperature": 0.02,
        "q_learning_rate": 0.3,
        "target_update_ratio": 0.05,
        "explore_start": 2.0,
        "explore_end": 0.05,
        "explore_fraction": 0.4,
        "weight_learning_rate": 60.0,
        "warmup_steps": 5000,
        "batch_size": 128,
        "q_init": 2.0,
    }


FOUR_ROOM_EXPERIMENT_DISCOUNT = 0.95


# ---------------------------------------------------------------------------
# Policy evaluation


@dataclass(frozen=True)
class EvalResult:
    mc_mean: np.ndarray  # (K,)
    mc_stderr: np.ndarray  # (K,)
    exact: np.ndarray  # (K,) model-based, no episode time limit
    episodes: int


def evaluate_policy(
    env: EpisodicEnv,
    policy: np.ndarray,
    episodes: int,
    gamma: Optional[float] = None,
    seed: int = 0,
) -> EvalResult:
    """Monte-Carlo discounted return per objective plus the exact evaluation.

    The Monte-Carlo estimate respects the episode time limit; the exact
    value is computed on the stationary model and reported alongside.
    """
    if episodes < 1:
        raise ValueError("episodes must be positive")
    model = env.model
    g = model.discount if gamma is None else gamma
    rng = substream(seed, "evaluation")
    sampler = EpisodeSampler(env, rng)
    cum_policy = np.cumsum(np.asarray(policy, dtype=float), axis=1)
    returns = np.zeros((episodes, model.num_objectives))
    for i in range(episodes):
        state = sampler.reset()
        disc = 1.0
        while True:
            row = cum_policy[state]
            action = min(
                int(np.searchsorted(row, rng.random() * row[-1], side="right")),
                model.num_actions - 1,
            )
            next_state, reward, terminal, truncated = sampler.step(action)
            returns[i] += disc * reward
            disc *= g
            if terminal or truncated:
                break
            state = next_state
    mean = returns.mean(axis=0)
    stderr = returns.std(axis=0, ddof=1) / np.sqrt(episodes) if episodes > 1 else np.zeros_like(mean)
    exact = policy_return_vector(model, policy)
    return EvalResult(mean, stderr, exact, episodes)


# ---------------------------------------------------------------------------
# Baselines


def _epsilon(step: int, total_steps: int, fraction: float, start: float = 1.0, end: float = 0.01) -> float:
    decay_steps = max(1, int(fraction * total_steps))
    frac = min(step / decay_steps, 1.0)
    return start + frac * (end - start)


def utilitarian_train(env: EpisodicEnv, cfg: AgentConfig) -> TrainResult:
    """Scalar Q-learning on the objective-averaged reward.

    Hard max backup, epsilon-greedy exploration with linear decay, replay
    buffer, and a target table hard-synced every 500 steps.
    """
    model = env.model
    p, q_n, K = model.num_states, model.num_actions, model.num_objectives
    gamma = model.discount if cfg.gamma is None else cfg.gamma
    rng_env = substream(cfg.seed, "env")
    rng_act = substream(cfg.seed, "act")
    rng_batch = substream(cfg.seed, "batch")
    sampler = EpisodeSampler(env, rng_env)
    buffer = ReplayBuffer(cfg.buffer_capacity, K)
    q = np.full((p, q_n), float(cfg.q_init))
    target = np.full((p, q_n), float(cfg.q_init))
    episodes, metrics = [], []
    ep_return = np.zeros(K)
    disc = 1.0

    state = sampler.reset()
    for step in range(cfg.total_steps):
        eps = _epsilon(step, cfg.total_steps, cfg.explore_fraction)
        if rng_act.random() < eps:
            action = int(rng_act.integers(q_n))
        else:
            action = int(np.argmax(q[state]))
        next_state, reward, terminal, truncated = sampler.step(action)
        buffer.push(state, action, reward, next_state, terminal)
        ep_return += disc * reward
        disc *= gamma
        if terminal or truncated:
            episodes.append(ep_return.copy())
            metrics.append({"step": step + 1, "episode": len(episodes), "returns": ep_return.copy()})
            ep_return = np.zeros(K)
            disc = 1.0
            state = sampler.reset()
        else:
            state = next_state
        if len(buffer) >= cfg.batch_size:
            batch = buffer.sample(rng_batch, cfg.batch_size)
            scalar_r = batch.rewards.mean(axis=1)
            boot = np.where(batch.dones, 0.0, target[batch.next_states].max(axis=1))
            targets = scalar_r + gamma * boot
            flat = batch.states * q_n + batch.actions
            sums = np.bincount(flat, weights=targets, minlength=q.size)
            counts = np.bincount(flat, minlength=q.size)
            touched = counts > 0
            qf = q.reshape(-1)
            qf[touched] += cfg.q_learning_rate * (sums[touched] / counts[touched] - qf[touched])
        if (step + 1) % 500 == 0:
            target = q.copy()

    greedy = np.zeros((p, q_n))
    greedy[np.arange(p), q.argmax(axis=1)] = 1.0
    return TrainResult(
        policy=greedy,
        weights=np.full(K, 1.0 / K),
        weight_history=np.full((1, K), 1.0 / K),
        q_values=q,
        episodes=episodes,
        metrics=metrics,
    )


def mdqn_backup(
    q_values: np.ndarray,
    target_values: np.ndarray,
    batch: Union[Batch, Sequence],
    gamma: float,
    learning_rate: float,
) -> np.ndarray:
    """One tabular step of min-backup vector Q-learning; returns a copy.

    For each transition the bootstrap action maximizes
    min_k [r^(k) + gamma * target^(k)(s', a')]; the whole K-vector
    r + gamma * target(s', a*) is the regression target (r alone when
    terminal), and touched entries move toward the mean of their targets.
    """
    b = batch if isinstance(batch, Batch) else Batch.from_transitions(batch)
    if len(b) == 0:
        raise ValueError("batch must be nonempty")
    p, q_n, K = q_values.shape
    candidates = b.rewards[:, None, :] + gamma * target_values[b.next_states]  # (n, q, K)
    best = candidates.min(axis=2).argmax(axis=1)  # (n,)
    targets = b.rewards + gamma * np.where(
        b.dones[:, None], 0.0, target_values[b.next_states, best]
    )  # (n, K)
    q = q_values.copy()
    flat = b.states * q_n + b.actions
    counts = np.bincount(flat, minlength=p * q_n)
    touched = counts > 0
    for k in range(K):
        sums = np.bincount(flat, weights=targets[:, k], minlength=p * q_n)
        qk = q[:, :, k].reshape(-1)
        qk[touched] += learning_rate * (sums[touched] / counts[touched] - qk[touched])
    return q


def mdqn_train(env: EpisodicEnv, cfg: AgentConfig) -> TrainResult:
    """Vector Q-learning with the min-objective backup and greedy-min acting."""
    model = env.model
    p, q_n, K = model.num_states, model.num_actions, model.num_objectives
    gamma = model.discount if cfg.gamma is None else cfg.gamma
    rng_env = substream(cfg.seed, "env")
    rng_act = substream(cfg.seed, "act")
    rng_batch = substream(cfg.seed, "batch")
    sampler = EpisodeSampler(env, rng_env)
    buffer = ReplayBuffer(cfg.buffer_capacity, K)
    q = np.full((p, q_n, K), float(cfg.q_init))
    target = np.full((p, q_n, K), float(cfg.q_init))
    episodes, metrics = [], []
    ep_return = np.zeros(K)
    disc = 1.0

    state = sampler.reset()
    for step in range(cfg.total_steps):
        eps = _epsilon(step, cfg.total_steps, cfg.explore_fraction)
        if rng_act.random() < eps:
            action = int(rng_act.integers(q_n))
        else:
            action = int(q[state].min(axis=1).argmax())
        next_state, reward, terminal, truncated = sampler.step(action)
        buffer.push(state, action, reward, next_state, terminal)
        ep_return += disc * reward
        disc *= gamma
        if terminal or truncated:
            episodes.append(ep_return.copy())
            metrics.append({"step": step + 1, "episode": len(episodes), "returns": ep_return.copy()})
            ep_return = np.zeros(K)
            disc = 1.0
            state = sampler.reset()
        else:
            state = next_state
        if len(buffer) >= cfg.batch_size:
            batch = buffer.sample(rng_batch, cfg.batch_size)
            q = mdqn_backup(q, target, batch, gamma, cfg.q_learning_rate)
        if (step + 1) % 500 == 0:
            target = q.copy()

    greedy = np.zeros((p, q_n))
    greedy[np.arange(p), q.min(axis=2).argmax(axis=1)] = 1.0
    return TrainResult(
        policy=greedy,
        weights=np.full(K, 1.0 / K),
        weight_history=np.full((1, K), 1.0 / K),
        q_values=q.min(axis=2),
        episodes=episodes,
        metrics=metrics,
    )


TRAINERS = {"proposed": train, "utilitarian": utilitarian_train, "mdqn": mdqn_train}


# ---------------------------------------------------------------------------
# Pareto sweep


def pareto_sweep(model: TabularMOMDP, scalings: Sequence[Sequence[float]]):
    """Max-min solves of reward-rescaled models, reported in original units.

    Each scaling multiplies objective k's reward by its k-th factor; the
    recovered policy's return vector is then reported in unscaled units by
    contracting its occupancy with the original rewards (scaling leaves the
    occupancy itself untouched).  Sweeping the scalings traces the part of
    the Pareto boundary reachable by equalizing scaled objectives.
    """
    results = []
    p, q, K = model.num_states, model.num_actions, model.num_objectives
    for scaling in scalings:
        alpha = np.asarray(scaling, dtype=float).ravel()
        if alpha.shape != (K,) or np.any(alpha <= 0):
            raise ValueError(f"scaling must be {K} positive factors, got {scaling}")
        scaled = TabularMOMDP(
            model.transition, model.reward * alpha[None, None, :], model.initial_dist, model.discount
        )
        solution = maxmin_exact(scaled)
        returns = solution.occupancy.reshape(p * q) @ model.reward.reshape(p * q, K)
        results.append((alpha, returns))
    return results


# ---------------------------------------------------------------------------
# Run configuration and dispatch


@dataclass(frozen=True)
class RunConfig:
    """One experiment: what to solve or train, on which environment."""

    kind: str
    environment: dict
    algorithm: str = "proposed"
    agent: dict = field(default_factory=dict)
    evaluation_episodes: int = 200
    seeds: tuple = (0, 1, 2, 3, 4)
    temperature: float = 0.1  # solve-exact regularization strength
    scalings: Optional[tuple] = None  # pareto-sweep
    policy_path: Optional[str] = None  # evaluate
    ablation_num_perturbations: int = 5

    def __post_init__(self):
        if self.kind not in RUN_KINDS:
            raise ValueError(f"kind must be one of {RUN_KINDS}, got {self.kind!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.kind == "pareto-sweep" and not self.scalings:
            raise ValueError("pareto-sweep requires scalings")
        if self.kind == "evaluate" and not self.policy_path:
            raise ValueError("evaluate requires policy_path")

    @staticmethod
    def from_dict(doc: dict) -> "RunConfig":
        doc = dict(doc)
        if "seeds" in doc:
            doc["seeds"] = tuple(int(s) for s in doc["seeds"])
        if doc.get("scalings") is not None:
            doc["scalings"] = tuple(tuple(float(v) for v in row) for row in doc["scalings"])
        return RunConfig(**doc)

    @staticmethod
    def from_json(path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["seeds"] = list(self.seeds)
        if self.scalings is not None:
            doc["scalings"] = [list(row) for row in self.scalings]
        return doc


@dataclass
class RunResult:
    """Aggregated outcome of a run; serialized deterministically."""

    kind: str
    algorithm: Optional[str]
    seeds: list
    per_objective_mean: Optional[list] = None
    per_objective_stderr: Optional[list] = None
    min_return: Optional[float] = None
    learned_weights: Optional[list] = None
    value: Optional[float] = None
    details: dict = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)
    wall_clock_sec: Optional[float] = None
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "algorithm": self.algorithm,
            "seeds": self.seeds,
            "per_objective_mean": self.per_objective_mean,
            "per_objective_stderr": self.per_objective_stderr,
            "min_return": self.min_return,
            "learned_weights": self.learned_weights,
            "value": self.value,
            "details": self.details,
            "config_echo": self.config_echo,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _aggregate_training(
    env: EpisodicEnv, config: RunConfig, agent_cfg: AgentConfig, algorithm: str
) -> dict:
    """Train and evaluate one algorithm across all seeds."""
    per_seed_means = []
    per_seed_weights = []
    seed_metrics = {}
    first_policy = None
    for seed in config.seeds:
        result = TRAINERS[algorithm](env, agent_cfg.replace(seed=int(seed)))
        evaluation = evaluate_policy(env, result.policy, config.evaluation_episodes, seed=int(seed))
        per_seed_means.append(evaluation.mc_mean)
        per_seed_weights.append(result.weights)
        seed_metrics[int(seed)] = result.metrics
        if first_policy is None:
            first_policy = result.policy
    means = np.vstack(per_seed_means)
    mean = means.mean(axis=0)
    stderr = (
        means.std(axis=0, ddof=1) / np.sqrt(len(config.seeds))
        if len(config.seeds) > 1
        else np.zeros_like(mean)
    )
    return {
        "mean": mean,
        "stderr": stderr,
        "min_return": float(mean.min()),
        "weights": np.vstack(per_seed_weights).mean(axis=0),
        "per_seed_means": means,
        "seed_metrics": seed_metrics,
        "first_policy": first_policy,
    }


def _write_metrics_csv(path: Path, metrics: list) -> None:
    if not metrics:
        return
    k = len(metrics[0]["returns"])
    has_w = "weights" in metrics[0]
    header = ["step", "episode"] + [f"return_{i}" for i in range(k)]
    if has_w:
        header += ["running_min"]
        header += [f"w{i}" for i in range(len(metrics[0]["weights"]))]
        header += ["objective_estimate", "explore_temperature"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in metrics:
            out = [row["step"], row["episode"]] + [repr(float(v)) for v in row["returns"]]
            if has_w:
                out += [repr(float(row["running_min"]))]
                out += [repr(float(v)) for v in row["weights"]]
                out += [repr(float(row["objective_estimate"])), repr(float(row["explore_temperature"]))]
            writer.writerow(out)


def run(config: RunConfig, out_dir=None) -> RunResult:
    """Execute a run across its seeds, aggregate, and optionally write files.

    Writes ``result.json`` (deterministic), ``meta.json`` (wall clock), and
    per-seed ``metrics_seed<i>.csv`` files for training runs.
    """
    start = time.perf_counter()
    env = build_environment(config.environment)
    model = env.model
    result = RunResult(kind=config.kind, algorithm=None, seeds=[int(s) for s in config.seeds])
    result.config_echo = config.to_dict()
    seed_metrics = {}

    if config.kind == "solve-lp":
        solution = maxmin_exact(model)
        returns = policy_return_vector(model, solution.policy)
        result.value = solution.value
        result.per_objective_mean = [float(v) for v in returns]
        result.per_objective_stderr = [0.0] * model.num_objectives
        result.min_return = float(returns.min())
        result.learned_weights = [float(v) for v in solution.weights]
        result.details = {
            "occupancy": solution.occupancy.tolist(),
            "policy": solution.policy.tolist(),
            "lp_iterations": solution.lp_solution.iterations,
        }
    elif config.kind == "solve-exact":
        solution = solve_regularized(model, config.temperature)
        returns = policy_return_vector(model, solution.policy)
        result.value = solution.value
        result.per_objective_mean = [float(v) for v in returns]
        result.per_objective_stderr = [0.0] * model.num_objectives
        result.min_return = float(returns.min())
        result.learned_weights = [float(v) for v in solution.weights]
        result.details = {
            "temperature": config.temperature,
            "policy": solution.policy.tolist(),
            "iterations": solution.iterations,
        }
    elif config.kind == "train":
        result.algorithm = config.algorithm
        agent_cfg = AgentConfig(**config.agent)
        agg = _aggregate_training(env, config, agent_cfg, config.algorithm)
        result.per_objective_mean = [float(v) for v in agg["mean"]]
        result.per_objective_stderr = [float(v) for v in agg["stderr"]]
        result.min_return = agg["min_return"]
        if config.algorithm == "proposed":
            result.learned_weights = [float(v) for v in agg["weights"]]
        result.details = {"per_seed_means": agg["per_seed_means"].tolist()}
        seed_metrics = agg["seed_metrics"]
        first_policy = agg["first_policy"]
    elif config.kind == "evaluate":
        with open(config.policy_path, encoding="utf-8") as fh:
            policy = np.array(json.load(fh), dtype=float)
        per_seed = [
            evaluate_policy(env, policy, config.evaluation_episodes, seed=int(s)).mc_mean
            for s in config.seeds
        ]
        means = np.vstack(per_seed)
        mean = means.mean(axis=0)
        result.per_objective_mean = [float(v) for v in mean]
        result.per_objective_stderr = [
            float(v)
            for v in (
                means.std(axis=0, ddof=1) / np.sqrt(len(per_seed))
                if len(per_seed) > 1
                else np.zeros_like(mean)
            )
        ]
        result.min_return = float(mean.min())
        exact = policy_return_vector(model, policy)
        result.details = {"exact_return": [float(v) for v in exact]}
    elif config.kind == "pareto-sweep":
        sweep = pareto_sweep(model, config.scalings)
        result.details = {
            "points": [
                {"scaling": [float(v) for v in alpha], "returns": [float(v) for v in returns]}
                for alpha, returns in sweep
            ]
        }
        identity = maxmin_exact(model)
        result.value = identity.value
    elif config.kind == "ablation":
        agent_cfg = AgentConfig(**config.agent)
        arms = {
            "full": agent_cfg,
            "no-weight-learning": agent_cfg.replace(learn_weights=False),
            "small-n": agent_cfg.replace(num_perturbations=config.ablation_num_perturbations),
        }
        details = {}
        for name, arm_cfg in arms.items():
            agg = _aggregate_training(env, config, arm_cfg, "proposed")
            details[name] = {
                "per_objective_mean": [float(v) for v in agg["mean"]],
                "min_return": agg["min_return"],
                "weights": [float(v) for v in agg["weights"]],
            }
        result.algorithm = "proposed"
        result.details = details
        result.min_return = details["full"]["min_return"]
        result.per_objective_mean = details["full"]["per_objective_mean"]
    else:  # pragma: no cover - RunConfig validation guards this
        raise ValueError(f"unhandled kind {config.kind!r}")

    result.wall_clock_sec = time.perf_counter() - start
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(result.to_json(), encoding="utf-8")
        (out / "meta.json").write_text(
            json.dumps({"wall_clock_sec": result.wall_clock_sec}), encoding="utf-8"
        )
        for seed, metrics in seed_metrics.items():
            _write_metrics_csv(out / f"metrics_seed{seed}.csv", metrics)
        if config.kind == "train":
            # First seed's policy is kept for later `evaluate` runs.
            (out / "policy.json").write_text(json.dumps(first_policy.tolist()), encoding="utf-8")
    return result
