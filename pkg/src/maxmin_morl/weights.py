"""Zeroth-order minimization over the probability simplex.

The gradient of a black-box objective is estimated by sampling Gaussian
perturbations around the current point, evaluating the objective there, and
reading off the slope of a least-squares linear fit.  As the sample count
grows the slope converges to the gradient of the Gaussian smoothing of the
objective.  Iterates are kept on the simplex by Euclidean projection
(sort-and-threshold); perturbed sample points are evaluated unprojected,
since projecting them would bias the smoothing estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class SmoothingConfig:
    """Perturbation sampling parameters for gradient estimation."""

    num_samples: int = 20
    perturbation: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be positive, got {self.num_samples}")
        if self.perturbation <= 0:
            raise ValueError(f"perturbation must be positive, got {self.perturbation}")


@dataclass(frozen=True)
class PGDSchedule:
    """Inverse-square-root learning-rate schedule for projected descent."""

    initial_rate: float = 0.01
    max_iters: int = 100

    def __post_init__(self):
        if self.initial_rate <= 0:
            raise ValueError(f"initial_rate must be positive, got {self.initial_rate}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be nonnegative, got {self.max_iters}")

    def rate(self, iteration: int) -> float:
        return self.initial_rate / np.sqrt(iteration + 1.0)


def sample_perturbations(center, cfg: SmoothingConfig, rng: np.random.Generator) -> np.ndarray:
    """N points center + mu * u with u drawn i.i.d. standard normal; (N, K)."""
    w = np.asarray(center, dtype=float).ravel()
    u = rng.standard_normal((cfg.num_samples, w.size))
    return w[None, :] + cfg.perturbation * u


def regression_gradient(points, values) -> np.ndarray:
    """Slope of the least-squares linear fit through (point, value) pairs.

    Solved by normal equations on mean-centered data.  Raises if the points
    do not affinely span the space (fewer than K+1 independent points).
    """
    x = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError(f"need matching points/values, got {x.shape} and {y.shape}")
    n, k = x.shape
    if n < k + 1:
        raise ValueError(f"need at least {k + 1} points for a {k}-dimensional fit, got {n}")
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    if np.linalg.matrix_rank(xc) < k:
        raise ValueError("design matrix is rank deficient: points are affinely dependent")
    gram = xc.T @ xc
    return np.linalg.solve(gram, xc.T @ yc)


def project_simplex(x) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sort-and-threshold: with entries sorted in descending order,
    rho = max{ j : x_(j) + (1 - sum_{i<=j} x_(i)) / j > 0 }, then shift by
    the corresponding constant and clip at zero.
    """
    v = np.asarray(x, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u + (1.0 - cumsum) / j > 0)[0][-1]
    shift = (1.0 - cumsum[rho]) / (rho + 1.0)
    return np.maximum(v + shift, 0.0)


@dataclass(frozen=True)
class OptimizeResult:
    best_weights: np.ndarray
    best_value: float
    trajectory: list


def minimize_on_simplex(
    objective: Callable[[np.ndarray], float],
    w0,
    cfg: SmoothingConfig,
    sched: PGDSchedule,
    rng: Optional[np.random.Generator] = None,
) -> OptimizeResult:
    """Projected zeroth-order descent of a black-box objective on the simplex.

    Each iteration samples perturbations, evaluates the objective at the raw
    (unprojected) sample points, fits the regression gradient, and takes one
    projected step at the scheduled rate.  The objective must therefore be
    defined on a neighborhood of the simplex.  Returns the best iterate seen
    (by objective value) along with the full trajectory; rows carry
    (iteration, weights, value, gradient norm, learning rate).
    """
    w = project_simplex(np.asarray(w0, dtype=float))
    if cfg.num_samples < w.size + 1:
        raise ValueError(
            f"num_samples={cfg.num_samples} cannot fit a {w.size}-dimensional gradient; "
            f"need at least {w.size + 1}"
        )
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    trajectory = []
    best_w, best_value = None, np.inf
    for m in range(sched.max_iters):
        value = float(objective(w))
        if value < best_value:
            best_w, best_value = w.copy(), value
        points = sample_perturbations(w, cfg, rng)
        samples = np.array([float(objective(pt)) for pt in points])
        grad = regression_gradient(points, samples)
        lr = float(sched.rate(m))
        trajectory.append(
            {
                "iteration": m,
                "weights": w.copy(),
                "value": value,
                "gradient_norm": float(np.linalg.norm(grad)),
                "learning_rate": lr,
            }
        )
        w = project_simplex(w - lr * grad)
    final_value = float(objective(w))
    if best_w is None or final_value < best_value:
        best_w, best_value = w.copy(), final_value
    trajectory.append(
        {
            "iteration": sched.max_iters,
            "weights": w.copy(),
            "value": final_value,
            "gradient_norm": float("nan"),
            "learning_rate": float("nan"),
        }
    )
    return OptimizeResult(best_w, best_value, trajectory)


def write_trajectory_csv(path, trajectory) -> None:
    """Dump an optimization trajectory in the flat CSV export format."""
    if not trajectory:
        raise ValueError("empty trajectory")
    k = len(trajectory[0]["weights"])
    header = ["iteration"] + [f"w{i}" for i in range(k)] + [
        "value",
        "gradient_norm",
        "learning_rate",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in trajectory:
            writer.writerow(
                [row["iteration"]]
                + [repr(float(x)) for x in row["weights"]]
                + [repr(row["value"]), repr(row["gradient_norm"]), repr(row["learning_rate"])]
            )
