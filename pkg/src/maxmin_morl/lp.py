"""Exact max-min oracle: the occupancy-measure LP and a dense simplex solver.

The max-min problem over occupancy measures

    max_d min_k sum_{s,a} d(s,a) r^(k)(s,a)
    s.t. balance equations, d >= 0

becomes a standard-form LP (max u.x, Ax = b, x >= 0) with variables ordered

    x = (d(s_1,a_1) ... d(s_p,a_q), delta_1 ... delta_K, c_plus, c_minus)

where c = c_plus - c_minus is the slack for the min and delta_k >= 0 turns
each objective's inequality into an equality.  A has p balance rows followed
by K reward rows.  The LP dual variables are (v(s_1)..v(s_p), -w_1..-w_K):
the optimal scalarization weights are the negated last K duals and lie on
the simplex.

The solver is a tableau two-phase simplex.  Pricing is Dantzig by default
with an automatic switch to Bland's rule after a run of degenerate pivots,
which keeps the anti-cycling guarantee without Bland's slow crawl on the
larger instances (the four-room LP has ~1700 rows).  Pure Bland is available
via ``pricing="bland"``.  When the model's rewards are nonnegative,
``maxmin_exact`` skips phase one entirely by starting from the feasible
basis induced by the always-first-action policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .momdp import TabularMOMDP, policy_from_occupancy

FEASIBILITY_TOL = 1e-8
DUALITY_TOL = 1e-7
PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class StandardFormLP:
    """max objective . x  subject to  constraints @ x = rhs, x >= 0."""

    objective: np.ndarray
    constraints: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "objective", np.asarray(self.objective, dtype=float))
        object.__setattr__(self, "constraints", np.asarray(self.constraints, dtype=float))
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=float))
        m, n = self.constraints.shape
        if self.objective.shape != (n,) or self.rhs.shape != (m,):
            raise ValueError(
                f"inconsistent LP dimensions: A is {self.constraints.shape}, "
                f"u is {self.objective.shape}, b is {self.rhs.shape}"
            )
        for name, arr in (("objective", self.objective), ("constraints", self.constraints), ("rhs", self.rhs)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class LPSolution:
    """Primal/dual pair from the final simplex basis."""

    status: str  # optimal | infeasible | unbounded
    x: Optional[np.ndarray]
    y: Optional[np.ndarray]
    value: Optional[float]
    basis: Optional[np.ndarray]
    iterations: int


def build_maxmin_lp(model: TabularMOMDP) -> StandardFormLP:
    """Assemble the occupancy LP for a model.

    Row i < p is the balance equation of state s_i; row p+k reads
    sum_{s,a} r^(k)(s,a) d(s,a) - delta_k - c_plus + c_minus = 0.
    """
    p, q, K = model.num_states, model.num_actions, model.num_objectives
    n = p * q + K + 2
    a_mat = np.zeros((p + K, n))
    # Occupancy columns, state-major: column s*q + a.
    for s in range(p):
        cols = slice(s * q, (s + 1) * q)
        a_mat[:p, cols] = -model.discount * model.transition[s].T
        a_mat[s, cols] += 1.0
        a_mat[p:, cols] = model.reward[s].T
    a_mat[p : p + K, p * q : p * q + K] = -np.eye(K)
    a_mat[p : p + K, p * q + K] = -1.0  # c_plus
    a_mat[p : p + K, p * q + K + 1] = 1.0  # c_minus
    b = np.concatenate([model.initial_dist, np.zeros(K)])
    u = np.zeros(n)
    u[p * q + K] = 1.0
    u[p * q + K + 1] = -1.0
    return StandardFormLP(u, a_mat, b)


def _pivot(tableau: np.ndarray, row: int, col: int, work: Optional[np.ndarray] = None) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    if work is None:
        tableau -= np.outer(factors, tableau[row])
    else:
        # Rank-1 update through a preallocated buffer; the outer product is
        # the whole cost of a pivot on large tableaus.
        np.multiply(factors[:, None], tableau[row][None, :], out=work)
        np.subtract(tableau, work, out=tableau)


def _choose_entering(reduced: np.ndarray, use_bland: bool) -> int:
    """Entering column for a maximization tableau (reduced costs u - z)."""
    if use_bland:
        eligible = np.nonzero(reduced > PIVOT_TOL)[0]
        return int(eligible[0]) if eligible.size else -1
    j = int(np.argmax(reduced))
    return j if reduced[j] > PIVOT_TOL else -1


def _choose_leaving(tableau: np.ndarray, col: int, basis: np.ndarray) -> int:
    column = tableau[:-1, col]
    rhs = tableau[:-1, -1]
    eligible = np.nonzero(column > PIVOT_TOL)[0]
    if eligible.size == 0:
        return -1
    ratios = rhs[eligible] / column[eligible]
    best = ratios.min()
    ties = eligible[ratios <= best + PIVOT_TOL]
    # Lowest basis index among ties: Bland-compatible and deterministic.
    return int(ties[np.argmin(basis[ties])])


def _run_simplex(tableau: np.ndarray, basis: np.ndarray, pricing: str, max_iters: int):
    """Iterate to optimality; returns (status, iterations)."""
    use_bland = pricing == "bland"
    degenerate_run = 0
    work = np.empty_like(tableau)
    for it in range(max_iters):
        col = _choose_entering(tableau[-1, :-1], use_bland)
        if col < 0:
            return "optimal", it
        row = _choose_leaving(tableau, col, basis)
        if row < 0:
            return "unbounded", it
        degenerate = tableau[row, -1] <= PIVOT_TOL
        _pivot(tableau, row, col, work)
        basis[row] = col
        if pricing == "auto":
            # Long degenerate runs risk cycling under Dantzig pricing; fall
            # back to Bland until the objective moves again.
            degenerate_run = degenerate_run + 1 if degenerate else 0
            use_bland = degenerate_run >= 100
    raise RuntimeError(f"simplex did not terminate within {max_iters} iterations")


def _solution_from_basis(lp: StandardFormLP, basis: np.ndarray, iterations: int) -> LPSolution:
    """Recompute the primal/dual pair from the original data for accuracy."""
    b_mat = lp.constraints[:, basis]
    x_basic = np.linalg.solve(b_mat, lp.rhs)
    x = np.zeros(lp.objective.size)
    x[basis] = x_basic
    y = np.linalg.solve(b_mat.T, lp.objective[basis])
    value = float(lp.objective @ x)
    return LPSolution("optimal", x, y, value, basis.copy(), iterations)


def _verify(lp: StandardFormLP, sol: LPSolution) -> bool:
    if np.abs(lp.constraints @ sol.x - lp.rhs).max() > FEASIBILITY_TOL:
        return False
    if sol.x.min() < -1e-10:
        return False
    # Dual feasibility doubles as the optimality certificate.
    if (lp.objective - lp.constraints.T @ sol.y).max() > DUALITY_TOL:
        return False
    return abs(float(lp.rhs @ sol.y) - sol.value) <= DUALITY_TOL * max(1.0, abs(sol.value))


def simplex_solve(
    lp: StandardFormLP,
    pricing: str = "auto",
    initial_basis: Optional[np.ndarray] = None,
    max_iters: Optional[int] = None,
) -> LPSolution:
    """Two-phase dense simplex.

    Infeasibility and unboundedness are reported through ``status``, not
    exceptions.  ``initial_basis`` may name a known feasible basis, in which
    case phase one is skipped.
    """
    if pricing not in ("auto", "bland", "dantzig"):
        raise ValueError(f"unknown pricing rule {pricing!r}")
    m, n = lp.constraints.shape
    if max_iters is None:
        max_iters = 200 * (m + n) + 10_000

    if initial_basis is not None:
        basis = np.asarray(initial_basis, dtype=int).copy()
        if basis.shape != (m,):
            raise ValueError(f"initial basis must list {m} columns, got {basis.shape}")
        b_mat = lp.constraints[:, basis]
        body = np.linalg.solve(b_mat, np.column_stack([lp.constraints, lp.rhs]))
        if body[:, -1].min() < -FEASIBILITY_TOL:
            raise ValueError("initial basis is not primal feasible")
        tableau = np.vstack([body, np.zeros(n + 1)])
        tableau[-1, :-1] = lp.objective - lp.objective[basis] @ body[:, :-1]
        tableau[-1, -1] = -lp.objective[basis] @ body[:, -1]
        status, its = _run_simplex(tableau, basis, pricing, max_iters)
        if status != "optimal":
            return LPSolution(status, None, None, None, None, its)
        sol = _solution_from_basis(lp, basis, its)
        if not _verify(lp, sol):
            # Tableau drift spoiled the basis; fall back to a clean two-phase run.
            return simplex_solve(lp, pricing=pricing, initial_basis=None, max_iters=max_iters)
        return sol

    # Phase one: flip rows to make b nonnegative, add one artificial per row,
    # and maximize minus their sum.
    a_mat = lp.constraints.copy()
    b = lp.rhs.copy()
    negative = b < 0
    a_mat[negative] *= -1.0
    b[negative] *= -1.0
    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = a_mat
    tableau[:m, n : n + m] = np.eye(m)
    tableau[:m, -1] = b
    basis = np.arange(n, n + m)
    # Reduced costs of phase one objective max -(sum of artificials).
    tableau[-1, :n] = a_mat.sum(axis=0)
    tableau[-1, -1] = b.sum()
    status, its1 = _run_simplex(tableau, basis, pricing, max_iters)
    if status != "optimal":
        return LPSolution(status, None, None, None, None, its1)
    if tableau[-1, -1] > FEASIBILITY_TOL:
        return LPSolution("infeasible", None, None, None, None, its1)
    # Drive any residual artificial out of the basis (degenerate rows).
    for row in range(m):
        if basis[row] >= n:
            candidates = np.nonzero(np.abs(tableau[row, :n]) > PIVOT_TOL)[0]
            if candidates.size:
                _pivot(tableau, row, int(candidates[0]))
                basis[row] = int(candidates[0])
    if np.any(basis >= n):
        # A basic artificial with no pivot left means a redundant row.
        raise RuntimeError("constraint matrix has linearly dependent rows")

    # Phase two on the original objective.
    tableau = np.delete(tableau, np.s_[n : n + m], axis=1)
    tableau[-1, :] = 0.0
    tableau[-1, :n] = lp.objective
    tableau[-1] -= lp.objective[basis] @ tableau[:m]
    status, its2 = _run_simplex(tableau, basis, pricing, max_iters)
    if status != "optimal":
        return LPSolution(status, None, None, None, None, its1 + its2)
    sol = _solution_from_basis(lp, basis, its1 + its2)
    if not _verify(lp, sol):
        raise RuntimeError("simplex produced a basis whose recomputed solution fails verification")
    return sol


@dataclass(frozen=True)
class MaxMinSolution:
    """Output of the exact max-min solve on a model."""

    value: float
    occupancy: np.ndarray
    policy: np.ndarray
    weights: np.ndarray
    lp_solution: LPSolution


def _crash_basis(model: TabularMOMDP) -> Optional[np.ndarray]:
    """Feasible starting basis when all rewards are nonnegative.

    The occupancy of the always-first-action policy satisfies the balance
    rows, and with c = 0 every objective slack delta_k is the policy's
    nonnegative total return, so (d(., a_0), delta_1..delta_K) is feasible.
    """
    if model.reward.min() < 0:
        return None
    p, q, K = model.num_states, model.num_actions, model.num_objectives
    return np.concatenate([np.arange(p) * q, p * q + np.arange(K)])


def maxmin_exact(model: TabularMOMDP, pricing: str = "auto") -> MaxMinSolution:
    """Solve the max-min problem exactly via the occupancy LP.

    Returns the optimal value, the optimal occupancy and its induced policy,
    and the scalarization weights read off the LP dual (negated last K dual
    variables), validated to lie on the simplex.
    """
    lp = build_maxmin_lp(model)
    sol = simplex_solve(lp, pricing=pricing, initial_basis=_crash_basis(model))
    if sol.status != "optimal":
        raise RuntimeError(f"max-min LP terminated with status {sol.status}")
    p, q, K = model.num_states, model.num_actions, model.num_objectives
    occupancy = np.maximum(sol.x[: p * q].reshape(p, q), 0.0)
    weights = -sol.y[p : p + K]
    if abs(weights.sum() - 1.0) > FEASIBILITY_TOL or weights.min() < -FEASIBILITY_TOL:
        raise RuntimeError(f"dual weights {weights} do not lie on the simplex")
    weights = np.maximum(weights, 0.0)
    weights /= weights.sum()
    policy = policy_from_occupancy(occupancy)
    returns = occupancy.reshape(-1) @ model.reward.reshape(p * q, K)
    return MaxMinSolution(float(returns.min()), occupancy, policy, weights, sol)


def format_lp(lp: StandardFormLP) -> str:
    """Plain-text export: dimensions header, objective, rhs, dense rows."""
    m, n = lp.constraints.shape
    lines = [f"maxmin-lp 1 rows {m} cols {n}"]
    lines.append("objective " + " ".join(repr(float(v)) for v in lp.objective))
    lines.append("rhs " + " ".join(repr(float(v)) for v in lp.rhs))
    for i in range(m):
        lines.append("row " + " ".join(repr(float(v)) for v in lp.constraints[i]))
    return "\n".join(lines) + "\n"


def parse_lp(text: str) -> StandardFormLP:
    """Inverse of :func:`format_lp`."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split()
    if header[:2] != ["maxmin-lp", "1"] or header[2] != "rows" or header[4] != "cols":
        raise ValueError(f"unrecognized LP header: {lines[0]!r}")
    m, n = int(header[3]), int(header[5])
    if len(lines) != 3 + m:
        raise ValueError(f"expected {3 + m} lines, got {len(lines)}")

    def parse_vector(line, tag, size):
        parts = line.split()
        if parts[0] != tag or len(parts) != size + 1:
            raise ValueError(f"bad {tag} line: {line!r}")
        return np.array([float(v) for v in parts[1:]])

    objective = parse_vector(lines[1], "objective", n)
    rhs = parse_vector(lines[2], "rhs", m)
    rows = [parse_vector(lines[3 + i], "row", n) for i in range(m)]
    return StandardFormLP(objective, np.vstack(rows), rhs)
