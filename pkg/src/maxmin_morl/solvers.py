"""Scalarized Bellman and soft Bellman fixed points over objective weights.

Given a weight vector w (a point on the simplex, or any raw vector for the
convexity checks), the model collapses to a scalar-reward MDP with reward
sum_k w_k r^(k).  This module computes:

* the hard optimal value function (fixed point of the max backup),
* the entropy-regularized optimal value function (fixed point of the
  log-sum-exp backup at temperature alpha) together with its Q table,
* the weight objective: the initial-distribution average of either fixed
  point, and
* the exact minimizer of the regularized objective over the simplex, found
  by projected gradient descent with the analytic gradient (the gradient of
  the soft objective at w equals the return vector of the soft-greedy
  policy).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .momdp import TabularMOMDP, policy_return_vector
from .weights import project_simplex

# Soft operators refuse temperatures below this; the hard operator covers
# the limit and exp() would overflow long before the math breaks down.
MIN_TEMPERATURE = 1e-6

SIMPLEX_TOL = 1e-10


def check_simplex(weights: np.ndarray, atol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate simplex membership; returns the weights as a float array."""
    w = np.asarray(weights, dtype=float).ravel()
    if abs(w.sum() - 1.0) > atol:
        raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
    if np.any(w < -atol):
        raise ValueError(f"weights have a negative entry: {w}")
    return w


@dataclass(frozen=True)
class SoftQTable:
    """Per-(state, action) soft action values at a fixed temperature."""

    values: np.ndarray  # (p, q)
    temperature: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def _weighted_q(model: TabularMOMDP, weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """One-step action values sum_k w_k r^(k)(s,a) + gamma * E[v(s')]."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != (model.num_objectives,):
        raise ValueError(f"weights must have length {model.num_objectives}, got {w.shape}")
    v = np.asarray(values, dtype=float).ravel()
    if v.shape != (model.num_states,):
        raise ValueError(f"value function must have length {model.num_states}, got {v.shape}")
    return model.reward @ w + model.discount * (model.transition @ v)


def bellman_backup(model: TabularMOMDP, weights, values) -> np.ndarray:
    """Hard optimality backup: max_a of the one-step action values."""
    return _weighted_q(model, weights, values).max(axis=1)


def greedy_actions(model: TabularMOMDP, weights, values) -> np.ndarray:
    """Greedy action per state, ties broken by lowest action index."""
    return _weighted_q(model, weights, values).argmax(axis=1)


def _logsumexp_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1)
    return m + np.log(np.exp(z - m[:, None]).sum(axis=1))


def soft_bellman_backup(
    model: TabularMOMDP,
    weights,
    values,
    temperature: float,
    anchor: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Log-sum-exp backup at the given temperature.

    With ``anchor=None`` each action carries weight one inside the
    log-sum-exp (the plain entropy-regularized backup).  A strictly positive
    anchor policy (p, q) yields the anchored variant
    alpha * log sum_a anchor(a|s) * exp(Q(s,a) / alpha), whose special case
    with weight-one rows is exactly the plain backup.
    """
    if temperature < MIN_TEMPERATURE:
        raise ValueError(f"temperature {temperature} below minimum {MIN_TEMPERATURE}")
    z = _weighted_q(model, weights, values) / temperature
    if anchor is not None:
        anchor = np.asarray(anchor, dtype=float)
        if anchor.shape != z.shape:
            raise ValueError(f"anchor must have shape {z.shape}, got {anchor.shape}")
        if np.any(anchor <= 0):
            raise ValueError("anchor policy must be strictly positive")
        z = z + np.log(anchor)
    return temperature * _logsumexp_rows(z)


def _fixed_point(backup, model: TabularMOMDP, tol: float, v0) -> np.ndarray:
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    v = np.zeros(model.num_states) if v0 is None else np.asarray(v0, dtype=float).copy()
    gamma = model.discount
    # Contraction bound on the iteration count, padded for the warm start.
    if gamma == 0.0:
        max_iter = 2
    else:
        first = backup(v)
        gap = np.abs(first - v).max()
        if gap <= tol:
            return first
        max_iter = int(np.ceil(np.log(tol * (1.0 - gamma) / gap) / np.log(gamma))) + 10
        v = first
    for _ in range(max_iter):
        nxt = backup(v)
        if np.abs(nxt - v).max() <= tol:
            return nxt
        v = nxt
    raise RuntimeError(f"fixed point not reached within {max_iter} iterations (tol={tol})")


def value_iteration(model: TabularMOMDP, weights, tol: float = 1e-10, v0=None) -> np.ndarray:
    """Fixed point of the hard backup: sup-norm residual at most tol."""
    return _fixed_point(lambda v: bellman_backup(model, weights, v), model, tol, v0)


def soft_value_iteration(
    model: TabularMOMDP,
    weights,
    temperature: float,
    tol: float = 1e-10,
    v0=None,
    anchor: Optional[np.ndarray] = None,
):
    """Fixed point of the soft backup plus its Q table.

    Returns (values, SoftQTable) where Q(s,a) is the one-step action value
    at the converged v, so sum_a exp((Q(s,a) - v(s)) / alpha) = 1 holds at
    every state (up to the iteration tolerance).
    """
    v = _fixed_point(
        lambda u: soft_bellman_backup(model, weights, u, temperature, anchor),
        model,
        tol,
        v0,
    )
    return v, SoftQTable(_weighted_q(model, weights, v), temperature)


def scalarized_objective(
    model: TabularMOMDP,
    weights,
    mode: str = "hard",
    temperature: float = 0.1,
    tol: float = 1e-10,
    v0=None,
) -> float:
    """Initial-distribution average of the chosen fixed point."""
    if mode == "hard":
        v = value_iteration(model, weights, tol, v0)
    elif mode == "soft":
        v, _ = soft_value_iteration(model, weights, temperature, tol, v0)
    else:
        raise ValueError(f"mode must be 'hard' or 'soft', got {mode!r}")
    return float(model.initial_dist @ v)


def objective_fn(model: TabularMOMDP, mode: str = "hard", temperature: float = 0.1, tol: float = 1e-10):
    """Weight objective as a callable, warm-starting each solve at the last
    fixed point (valid because the fixed point is unique per weight)."""
    state = {"v": None}

    def evaluate(weights) -> float:
        if mode == "hard":
            v = value_iteration(model, weights, tol, state["v"])
        else:
            v, _ = soft_value_iteration(model, weights, temperature, tol, state["v"])
        state["v"] = v
        return float(model.initial_dist @ v)

    return evaluate


def soft_optimal_policy(q_table: SoftQTable) -> np.ndarray:
    """Softmax of Q / alpha per state, computed with max subtraction."""
    z = q_table.values / q_table.temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class RegularizedSolution:
    """Minimizer of the regularized weight objective over the simplex."""

    weights: np.ndarray
    value: float
    state_values: np.ndarray
    q_table: SoftQTable
    policy: np.ndarray
    iterations: int


def solve_regularized(
    model: TabularMOMDP,
    temperature: float,
    w0=None,
    tol: float = 1e-12,
    step_tol: float = 1e-12,
    max_iters: int = 2000,
) -> RegularizedSolution:
    """Minimize the soft weight objective over the simplex exactly.

    The objective is smooth and convex in w, and its gradient is the return
    vector of the softmax policy of the current Q table, so projected
    gradient descent with a backtracking line search converges to the
    global minimum.  Each gradient costs one (warm-started) soft value
    iteration and one policy evaluation.
    """
    K = model.num_objectives
    w = np.full(K, 1.0 / K) if w0 is None else check_simplex(w0)
    v, q_table = soft_value_iteration(model, w, temperature, tol)
    value = float(model.initial_dist @ v)
    step = 1.0
    iterations = 0
    stall = 0
    for iterations in range(1, max_iters + 1):
        policy = soft_optimal_policy(q_table)
        grad = policy_return_vector(model, policy)
        # Backtracking projected gradient step (Armijo on the soft objective).
        step = min(step * 2.0, 1e6)
        moved = False
        while step > 1e-18:
            cand = project_simplex(w - step * grad)
            delta = cand - w
            if np.abs(delta).max() <= step_tol:
                break
            v_c, q_c = soft_value_iteration(model, cand, temperature, tol, v0=v)
            val_c = float(model.initial_dist @ v_c)
            if val_c <= value + float(grad @ delta) + 0.5 / step * float(delta @ delta) + 1e-15:
                improvement = value - val_c
                w, v, q_table, value = cand, v_c, q_c, val_c
                moved = True
                stall = stall + 1 if improvement <= 1e-13 * max(1.0, abs(value)) else 0
                break
            step *= 0.5
        if not moved or stall >= 3:
            break
    policy = soft_optimal_policy(q_table)
    return RegularizedSolution(w, value, v, q_table, policy, iterations)
