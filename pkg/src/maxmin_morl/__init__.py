"""Max-min multi-objective RL on tabular MOMDPs.

Exact LP oracle, entropy-regularized convex solvers, a zeroth-order weight
optimizer, and the model-free training loop that ties them together.
"""

from .agent import AgentConfig, ReplayBuffer, Transition, act, estimate_objective, soft_q_update, train
from .envs import (
    EpisodeSampler,
    EpisodicEnv,
    FourRoomConfig,
    env_step,
    four_room_env,
    one_state_env,
    one_state_episodic,
    random_momdp,
)
from .harness import (
    RunConfig,
    RunResult,
    evaluate_policy,
    mdqn_backup,
    pareto_sweep,
    run,
    utilitarian_train,
)
from .lp import LPSolution, StandardFormLP, build_maxmin_lp, maxmin_exact, simplex_solve
from .momdp import (
    TabularMOMDP,
    balance_residual,
    occupancy_from_policy,
    policy_from_occupancy,
    policy_return_vector,
    validate,
)
from .solvers import (
    SoftQTable,
    bellman_backup,
    scalarized_objective,
    soft_bellman_backup,
    soft_optimal_policy,
    soft_value_iteration,
    solve_regularized,
    value_iteration,
)
from .weights import (
    PGDSchedule,
    SmoothingConfig,
    minimize_on_simplex,
    project_simplex,
    regression_gradient,
    sample_perturbations,
)

__version__ = "0.1.0"
