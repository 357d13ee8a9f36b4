"""Tabular multi-objective MDP model: policies, returns, occupancy measures.

A model is a finite MDP whose reward is a vector with one component per
objective.  Everything is dense numpy; exact evaluation is done with direct
linear solves, and every operation is a pure function of its inputs.

Array conventions (p states, q actions, K objectives):
    transition   (p, q, p)   transition[s, a, s'] = P(s' | s, a)
    reward       (p, q, K)   reward[s, a, k] = k-th reward component at (s, a)
    initial_dist (p,)        distribution of the start state
    policy       (p, q)      policy[s, a] = probability of action a in state s
    occupancy    (p, q)      unnormalized discounted visitation frequency
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Tolerance on probability sums supplied as input data.
PROB_TOL = 1e-12
# Tolerance on quantities produced by linear solves.
COMPUTED_TOL = 1e-8
# Residual cap promised by the exact evaluation routines.
SOLVE_RESIDUAL_TOL = 1e-10


def _as_float_array(value, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabularMOMDP:
    """Finite MDP with a vector-valued reward and fixed initial distribution.

    Instances are immutable after construction (arrays are marked
    non-writeable), so they are safe to share across threads.
    Construction does not validate; call :func:`validate` explicitly.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "transition", _as_float_array(self.transition, "transition"))
        object.__setattr__(self, "reward", _as_float_array(self.reward, "reward"))
        object.__setattr__(self, "initial_dist", _as_float_array(self.initial_dist, "initial_dist"))
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_objectives(self) -> int:
        return self.reward.shape[2]

    def max_reward_l1(self) -> float:
        """max over (s, a) of the L1 norm of the reward vector."""
        return float(np.abs(self.reward).sum(axis=2).max())

    def scalarized_reward(self, weights: np.ndarray) -> np.ndarray:
        """Per-(s, a) scalar reward under the given objective weights."""
        w = np.asarray(weights, dtype=float).reshape(self.num_objectives)
        return self.reward @ w


def validate(model: TabularMOMDP) -> None:
    """Check all model invariants, raising ValueError on the first violation."""
    p, q = model.transition.shape[0], model.transition.shape[1]
    if model.transition.shape != (p, q, p):
        raise ValueError(f"transition must have shape (p, q, p), got {model.transition.shape}")
    if model.reward.shape[:2] != (p, q) or model.reward.ndim != 3:
        raise ValueError(f"reward must have shape (p, q, K), got {model.reward.shape}")
    if model.initial_dist.shape != (p,):
        raise ValueError(f"initial_dist must have shape ({p},), got {model.initial_dist.shape}")
    if not 0.0 <= model.discount < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {model.discount}")
    if np.any(model.transition < 0):
        s, a, s2 = np.argwhere(model.transition < 0)[0]
        raise ValueError(f"transition[{s}, {a}, {s2}] is negative")
    row_sums = model.transition.sum(axis=2)
    bad = np.argwhere(np.abs(row_sums - 1.0) > PROB_TOL)
    if bad.size:
        s, a = bad[0]
        raise ValueError(f"transition row ({s}, {a}) sums to {row_sums[s, a]!r}, expected 1")
    if np.any(model.initial_dist < 0):
        s = int(np.argwhere(model.initial_dist < 0)[0][0])
        raise ValueError(f"initial_dist[{s}] is negative")
    total = model.initial_dist.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"initial_dist sums to {total!r}, expected 1")
    if not np.all(np.isfinite(model.reward)):
        s, a, k = np.argwhere(~np.isfinite(model.reward))[0]
        raise ValueError(f"reward[{s}, {a}, {k}] is not finite")


def validate_policy(model: TabularMOMDP, policy: np.ndarray) -> np.ndarray:
    """Check a stochastic policy against the model; returns it as a float array."""
    pol = np.asarray(policy, dtype=float)
    if pol.shape != (model.num_states, model.num_actions):
        raise ValueError(
            f"policy must have shape ({model.num_states}, {model.num_actions}), got {pol.shape}"
        )
    if np.any(pol < 0):
        s, a = np.argwhere(pol < 0)[0]
        raise ValueError(f"policy[{s}, {a}] is negative")
    sums = pol.sum(axis=1)
    bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
    if bad.size:
        s = int(bad[0][0])
        raise ValueError(f"policy row {s} sums to {sums[s]!r}, expected 1")
    return pol


def _policy_transition(model: TabularMOMDP, policy: np.ndarray) -> np.ndarray:
    """State-to-state transition matrix P_pi[s, s'] under the policy."""
    return np.einsum("sa,sat->st", policy, model.transition)


def policy_return_vector(model: TabularMOMDP, policy: np.ndarray) -> np.ndarray:
    """Expected discounted return per objective, J_k = mu0 . v_k.

    Solves (I - gamma P_pi) v_k = r_pi^(k) exactly for each objective and
    averages over the initial distribution.
    """
    pol = validate_policy(model, policy)
    p = model.num_states
    p_pi = _policy_transition(model, pol)
    r_pi = np.einsum("sa,sak->sk", pol, model.reward)  # (p, K)
    a_mat = np.eye(p) - model.discount * p_pi
    values = np.linalg.solve(a_mat, r_pi)  # (p, K)
    residual = np.abs(a_mat @ values - r_pi).max()
    if residual > SOLVE_RESIDUAL_TOL:
        raise RuntimeError(f"policy evaluation residual {residual:.3e} exceeds {SOLVE_RESIDUAL_TOL}")
    return model.initial_dist @ values


def occupancy_from_policy(model: TabularMOMDP, policy: np.ndarray) -> np.ndarray:
    """Unnormalized discounted state-action visitation frequency of a policy.

    Solves the state-level balance equation (I - gamma P_pi^T) rho = mu0 and
    splits rho over actions with the policy.  Total mass is 1/(1 - gamma).
    """
    pol = validate_policy(model, policy)
    p = model.num_states
    p_pi = _policy_transition(model, pol)
    a_mat = np.eye(p) - model.discount * p_pi.T
    rho = np.linalg.solve(a_mat, model.initial_dist)
    residual = np.abs(a_mat @ rho - model.initial_dist).max()
    if residual > SOLVE_RESIDUAL_TOL:
        raise RuntimeError(f"occupancy residual {residual:.3e} exceeds {SOLVE_RESIDUAL_TOL}")
    return rho[:, None] * pol


def policy_from_occupancy(occupancy: np.ndarray) -> np.ndarray:
    """Stationary policy induced by an occupancy measure.

    States with zero total mass are unreachable, so any action distribution
    preserves the value; the uniform row is used because it is deterministic
    and easy to test against.
    """
    d = np.asarray(occupancy, dtype=float)
    if d.ndim != 2:
        raise ValueError(f"occupancy must be 2-d, got shape {d.shape}")
    if np.any(d < 0):
        s, a = np.argwhere(d < 0)[0]
        raise ValueError(f"occupancy[{s}, {a}] is negative")
    mass = d.sum(axis=1)
    q = d.shape[1]
    policy = np.full_like(d, 1.0 / q)
    visited = mass > 0
    policy[visited] = d[visited] / mass[visited, None]
    return policy


def balance_residual(model: TabularMOMDP, occupancy: np.ndarray) -> np.ndarray:
    """Per-state residual of the occupancy balance equation.

    residual(s') = sum_a d(s', a) - mu0(s') - gamma * sum_{s,a} P(s'|s,a) d(s,a).
    All-zero exactly when the occupancy is feasible for the model.
    """
    d = np.asarray(occupancy, dtype=float)
    if d.shape != (model.num_states, model.num_actions):
        raise ValueError(
            f"occupancy must have shape ({model.num_states}, {model.num_actions}), got {d.shape}"
        )
    inflow = np.einsum("sat,sa->t", model.transition, d)
    return d.sum(axis=1) - model.initial_dist - model.discount * inflow


def to_json(model: TabularMOMDP) -> str:
    """Serialize a model to the interchange JSON document (full precision)."""
    doc = {
        "num_states": model.num_states,
        "num_actions": model.num_actions,
        "num_objectives": model.num_objectives,
        "gamma": model.discount,
        "transition": model.transition.tolist(),
        "reward": model.reward.tolist(),
        "initial_dist": model.initial_dist.tolist(),
    }
    return json.dumps(doc)


def from_json(text: str) -> TabularMOMDP:
    """Parse a model from the interchange JSON document."""
    doc = json.loads(text)
    model = TabularMOMDP(
        transition=np.array(doc["transition"], dtype=float),
        reward=np.array(doc["reward"], dtype=float),
        initial_dist=np.array(doc["initial_dist"], dtype=float),
        discount=float(doc["gamma"]),
    )
    declared = (doc["num_states"], doc["num_actions"], doc["num_objectives"])
    actual = (model.num_states, model.num_actions, model.num_objectives)
    if tuple(declared) != actual:
        raise ValueError(f"declared dimensions {declared} do not match arrays {actual}")
    return model


def save_momdp(model: TabularMOMDP, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(model))


def load_momdp(path) -> TabularMOMDP:
    with open(path, encoding="utf-8") as fh:
        return from_json(fh.read())
