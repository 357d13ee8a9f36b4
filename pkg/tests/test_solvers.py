import numpy as np
import pytest

from maxmin_morl.envs import random_momdp
from maxmin_morl.momdp import TabularMOMDP, policy_return_vector
from maxmin_morl.solvers import (
    SoftQTable,
    bellman_backup,
    check_simplex,
    greedy_actions,
    objective_fn,
    scalarized_objective,
    soft_bellman_backup,
    soft_optimal_policy,
    soft_value_iteration,
    solve_regularized,
    value_iteration,
)

from conftest import make_models

GAMMA = 0.9
HALF = np.array([0.5, 0.5])


def closed_form_soft_value(alpha, gamma=GAMMA, w1=0.5):
    """One-state fixed point: v = a/(1-g) * log(e^{3w1/a} + e^{3(1-w1)/a} + e^{1/a})."""
    return alpha / (1 - gamma) * np.logaddexp.reduce(
        np.array([3 * w1, 3 * (1 - w1), 1.0]) / alpha
    )


def test_bellman_backup_one_state(one_state):
    v = bellman_backup(one_state, HALF, np.zeros(1))
    assert np.allclose(v, [1.5])


def test_bellman_backup_zero_discount():
    model = random_momdp(17, 4, 3, 2, 0.9)
    zero_gamma = TabularMOMDP(model.transition, model.reward, model.initial_dist, 0.0)
    rng = np.random.default_rng(2)
    w = rng.normal(size=2)
    v = bellman_backup(zero_gamma, w, rng.normal(size=4))
    assert np.allclose(v, (model.reward @ w).max(axis=1))


def test_bellman_backup_is_contraction():
    rng = np.random.default_rng(5)
    for model in make_models(3, seed0=300):
        w = rng.normal(size=model.num_objectives)
        for _ in range(10):
            v1 = rng.normal(size=model.num_states)
            v2 = rng.normal(size=model.num_states)
            lhs = np.abs(bellman_backup(model, w, v1) - bellman_backup(model, w, v2)).max()
            assert lhs <= model.discount * np.abs(v1 - v2).max() + 1e-12


def test_value_iteration_one_state(one_state):
    v = value_iteration(one_state, HALF, tol=1e-12)
    assert np.allclose(v, [15.0], atol=1e-10)


def test_value_iteration_zero_rewards():
    model = random_momdp(23, 5, 2, 2, 0.9)
    zero = TabularMOMDP(model.transition, np.zeros_like(model.reward), model.initial_dist, 0.9)
    assert np.allclose(value_iteration(zero, HALF, 1e-12), 0.0, atol=1e-11)


def test_value_iteration_matches_greedy_policy_evaluation():
    for model in make_models(4, seed0=310):
        w = np.full(model.num_objectives, 1.0 / model.num_objectives)
        v = value_iteration(model, w, tol=1e-11)
        greedy = greedy_actions(model, w, v)
        policy = np.zeros((model.num_states, model.num_actions))
        policy[np.arange(model.num_states), greedy] = 1.0
        scalar = TabularMOMDP(
            model.transition, (model.reward @ w)[:, :, None], model.initial_dist, model.discount
        )
        J = policy_return_vector(scalar, policy)
        assert abs(float(model.initial_dist @ v) - float(J[0])) <= 1e-10 * 10


def test_soft_backup_one_state_fixed_point_formula(one_state):
    alpha = 0.1
    v_star = np.array([closed_form_soft_value(alpha)])
    backed = soft_bellman_backup(one_state, HALF, v_star, alpha)
    assert np.allclose(backed, v_star, atol=1e-10)


def test_soft_backup_approaches_hard_backup():
    model = random_momdp(31, 4, 3, 2, 0.9)
    rng = np.random.default_rng(1)
    v = rng.normal(size=4)
    hard = bellman_backup(model, HALF, v)
    soft = soft_bellman_backup(model, HALF, v, temperature=1e-4)
    assert np.abs(soft - hard).max() <= 1e-3


def test_soft_backup_dominates_hard_backup():
    rng = np.random.default_rng(9)
    for model in make_models(3, seed0=320):
        w = rng.normal(size=model.num_objectives)
        v = rng.normal(size=model.num_states)
        assert np.all(
            soft_bellman_backup(model, w, v, 0.2) >= bellman_backup(model, w, v) - 1e-12
        )


def test_soft_backup_rejects_tiny_temperature(one_state):
    with pytest.raises(ValueError, match="temperature"):
        soft_bellman_backup(one_state, HALF, np.zeros(1), 1e-8)


def test_soft_backup_anchor_uniform_shifts_by_log_q(one_state):
    # A proper uniform anchor subtracts alpha*log(q) from the plain backup.
    alpha = 0.25
    v = np.array([2.0])
    plain = soft_bellman_backup(one_state, HALF, v, alpha)
    anchored = soft_bellman_backup(one_state, HALF, v, alpha, anchor=np.full((1, 3), 1.0 / 3))
    assert np.allclose(anchored, plain - alpha * np.log(3.0), atol=1e-12)


def test_soft_backup_anchor_requires_positive(one_state):
    with pytest.raises(ValueError, match="anchor"):
        soft_bellman_backup(one_state, HALF, np.zeros(1), 0.1, anchor=np.array([[1.0, 0.0, 0.0]]))


def test_soft_value_iteration_one_state_closed_form(one_state):
    alpha = 0.1
    v, q = soft_value_iteration(one_state, HALF, alpha, tol=1e-12)
    assert abs(v[0] - closed_form_soft_value(alpha)) < 1e-10
    assert q.temperature == alpha


def test_soft_value_iteration_zero_rewards_constant():
    model = random_momdp(37, 4, 3, 2, 0.9)
    zero = TabularMOMDP(model.transition, np.zeros_like(model.reward), model.initial_dist, 0.9)
    alpha = 0.2
    v, _ = soft_value_iteration(zero, HALF, alpha, tol=1e-12)
    assert np.allclose(v, alpha * np.log(3) / 0.1, atol=1e-9)


def test_soft_value_iteration_normalization_identity():
    for model in make_models(4, seed0=330):
        w = np.full(model.num_objectives, 1.0 / model.num_objectives)
        alpha = 0.15
        v, q = soft_value_iteration(model, w, alpha, tol=1e-12)
        totals = np.exp((q.values - v[:, None]) / alpha).sum(axis=1)
        assert np.allclose(totals, 1.0, atol=1e-8)


def test_scalarized_objective_one_state(one_state):
    assert abs(scalarized_objective(one_state, HALF, "hard") - 15.0) < 1e-9
    # Scalarization (1, 0) makes the first action dominant: value 3/(1-g).
    assert abs(scalarized_objective(one_state, np.array([1.0, 0.0]), "hard") - 30.0) < 1e-9


def test_soft_objective_dominates_hard():
    for model in make_models(3, seed0=340):
        w = np.full(model.num_objectives, 1.0 / model.num_objectives)
        hard = scalarized_objective(model, w, "hard")
        soft = scalarized_objective(model, w, "soft", temperature=0.1)
        assert soft >= hard - 1e-10


def test_objective_fn_warm_start_matches_cold(one_state):
    # Each solve stops within tol/(1-gamma) of the fixed point, so two
    # independently stopped solves may differ by about twice that.
    fn = objective_fn(one_state, "soft", temperature=0.1)
    for w1 in (0.3, 0.35, 0.4):
        w = np.array([w1, 1 - w1])
        assert abs(fn(w) - scalarized_objective(one_state, w, "soft", 0.1)) < 1e-8


def test_soft_optimal_policy_one_state_closed_form(one_state):
    alpha = 0.1
    _, q = soft_value_iteration(one_state, HALF, alpha, tol=1e-12)
    policy = soft_optimal_policy(q)
    expected_main = 1.0 / (2.0 + np.exp(-1.0 / (2 * alpha)))
    expected_last = np.exp(-1.0 / (2 * alpha)) / (2.0 + np.exp(-1.0 / (2 * alpha)))
    assert np.allclose(policy, [[expected_main, expected_main, expected_last]], atol=1e-12)
    assert abs(policy.sum() - 1.0) < 1e-12


def test_soft_optimal_policy_small_alpha_recovers_maxmin_mixture(one_state):
    alpha = 0.01
    _, q = soft_value_iteration(one_state, HALF, alpha, tol=1e-12)
    policy = soft_optimal_policy(q)
    assert np.allclose(policy[0, :2], 0.5, atol=1e-4)


def test_soft_optimal_policy_sharp_gap():
    q = SoftQTable(np.array([[5.0, 0.0, 0.0], [0.0, 7.0, 0.0]]), temperature=0.05)
    policy = soft_optimal_policy(q)
    assert policy[0, 0] > 0.999 and policy[1, 1] > 0.999


def test_convexity_of_hard_and_soft_objectives():
    rng = np.random.default_rng(77)
    for model in make_models(4, seed0=350):
        K = model.num_objectives
        for _ in range(10):
            w1 = rng.normal(size=K)
            w2 = rng.normal(size=K)
            lam = rng.random()
            mid = lam * w1 + (1 - lam) * w2
            for mode in ("hard", "soft"):
                f = lambda w: scalarized_objective(model, w, mode, temperature=0.1, tol=1e-12)
                assert f(mid) <= lam * f(w1) + (1 - lam) * f(w2) + 1e-8


def test_piecewise_linearity_on_constant_greedy_profiles():
    rng = np.random.default_rng(13)
    for model in make_models(3, seed0=360):
        K = model.num_objectives
        for _ in range(5):
            a = rng.normal(size=K)
            b = rng.normal(size=K)
            ts = np.linspace(0.0, 1.0, 7)
            vs, profiles = [], []
            for t in ts:
                w = a + t * (b - a)
                v = value_iteration(model, w, tol=1e-12)
                vs.append(v)
                profiles.append(tuple(greedy_actions(model, w, v)))
            for i in range(1, len(ts) - 1):
                if profiles[i - 1] == profiles[i] == profiles[i + 1]:
                    second_diff = vs[i - 1] - 2 * vs[i] + vs[i + 1]
                    assert np.abs(second_diff).max() <= 1e-6


def test_soft_fixed_point_lipschitz_in_weights():
    rng = np.random.default_rng(31)
    for model in make_models(3, seed0=370):
        K = model.num_objectives
        constant = model.max_reward_l1() / (1.0 - model.discount)
        for _ in range(10):
            w = rng.normal(size=K)
            eps = 0.3 * rng.normal(size=K)
            v1, _ = soft_value_iteration(model, w, 0.1, tol=1e-12)
            v2, _ = soft_value_iteration(model, w + eps, 0.1, tol=1e-12)
            assert np.abs(v2 - v1).max() <= constant * np.abs(eps).max() + 1e-8


def test_regularization_gap_one_state_within_entropy_envelope(one_state):
    # Exact minima: hard 15.0 (LP), soft from the closed form; the gap must
    # stay below the per-step entropy envelope alpha*log(q)/(1-gamma).
    for alpha in (0.01, 0.05, 0.1):
        soft_min = closed_form_soft_value(alpha)
        gap = abs(soft_min - 15.0)
        assert gap <= alpha * np.log(3) / 0.1


def test_check_simplex():
    check_simplex(np.array([0.25, 0.75]))
    with pytest.raises(ValueError):
        check_simplex(np.array([0.4, 0.4]))
    with pytest.raises(ValueError):
        check_simplex(np.array([1.2, -0.2]))


def test_solve_regularized_one_state_closed_form(one_state):
    alpha = 0.1
    sol = solve_regularized(one_state, alpha, w0=np.array([0.85, 0.15]))
    assert np.allclose(sol.weights, HALF, atol=1e-6)
    assert abs(sol.value - closed_form_soft_value(alpha)) < 1e-8
    expected_main = 1.0 / (2.0 + np.exp(-1.0 / (2 * alpha)))
    assert np.allclose(sol.policy[0, :2], expected_main, atol=1e-6)


def test_solve_regularized_vertex_optimum():
    # One objective strictly dominating pushes the weight to a vertex.
    t = np.ones((1, 2, 1))
    r = np.array([[[1.0, 0.2], [0.5, 0.1]]])
    model = TabularMOMDP(t, r, np.array([1.0]), 0.5)
    sol = solve_regularized(model, 0.05)
    assert sol.weights[1] > 0.999
