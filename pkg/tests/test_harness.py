import json

import numpy as np
import pytest

from maxmin_morl.agent import AgentConfig, Transition
from maxmin_morl.envs import EpisodicEnv, one_state_episodic, random_momdp
from maxmin_morl.harness import (
    RunConfig,
    build_environment,
    evaluate_policy,
    mdqn_backup,
    mdqn_train,
    pareto_sweep,
    run,
    utilitarian_train,
)
from maxmin_morl.lp import maxmin_exact
from maxmin_morl.momdp import policy_return_vector


def one_state_cfg(**overrides):
    base = dict(
        total_steps=4000,
        temperature=0.1,
        batch_size=16,
        q_learning_rate=0.05,
        warmup_steps=40,
        num_perturbations=8,
        explore_fraction=0.2,
        seed=0,
    )
    base.update(overrides)
    return AgentConfig(**base)


def test_build_environment_kinds(tmp_path):
    env = build_environment({"kind": "one-state", "gamma": 0.8})
    assert env.model.discount == 0.8
    env = build_environment({"kind": "random", "seed": 1, "p": 4, "q": 2, "K": 2})
    assert env.model.num_states == 4
    env = build_environment({"kind": "four-room", "max_episode_steps": 50})
    assert env.max_episode_steps == 50
    from maxmin_morl.momdp import save_momdp

    path = tmp_path / "model.json"
    save_momdp(env.model, path)
    env2 = build_environment({"kind": "momdp-json", "path": str(path)})
    assert env2.model.num_states == env.model.num_states
    with pytest.raises(ValueError, match="unknown environment"):
        build_environment({"kind": "maze"})


def test_evaluate_policy_deterministic_env_matches_exact():
    # Deterministic two-state cycle with a deterministic policy: the
    # Monte-Carlo return equals the exact evaluation up to truncation.
    t = np.zeros((2, 1, 2))
    t[0, 0, 1] = 1.0
    t[1, 0, 0] = 1.0
    from maxmin_morl.momdp import TabularMOMDP

    model = TabularMOMDP(t, np.ones((2, 1, 1)), np.array([1.0, 0.0]), 0.5)
    env = EpisodicEnv(model, max_episode_steps=120)
    result = evaluate_policy(env, np.ones((2, 1)), episodes=3, seed=0)
    assert np.allclose(result.mc_mean, result.exact, atol=1e-12)
    assert np.allclose(result.mc_stderr, 0.0)


def test_evaluate_policy_one_state_mixture_within_band(one_state):
    env = one_state_episodic(0.9, max_episode_steps=400)
    policy = np.array([[0.5, 0.5, 0.0]])
    result = evaluate_policy(env, policy, episodes=400, seed=1)
    assert np.allclose(result.exact, 15.0, atol=1e-9)
    assert np.all(np.abs(result.mc_mean - 15.0) <= 3.0 * result.mc_stderr + 0.02)


def test_evaluate_policy_monte_carlo_agrees_with_exact_on_random_model():
    model = random_momdp(91, 5, 3, 2, 0.9)
    env = EpisodicEnv(model, max_episode_steps=300)
    rng = np.random.default_rng(2)
    policy = rng.dirichlet(np.ones(3), size=5)
    result = evaluate_policy(env, policy, episodes=4000, seed=3)
    assert np.all(np.abs(result.mc_mean - result.exact) <= 3.0 * result.mc_stderr + 1e-3)


def test_utilitarian_one_state_supported_on_first_two_actions():
    env = one_state_episodic(0.9, max_episode_steps=50)
    result = utilitarian_train(env, one_state_cfg())
    # Averaged reward makes both mixing actions optimal (1.5 > 1), so the
    # greedy policy must pick one of them.
    action = int(result.policy[0].argmax())
    assert action in (0, 1)


def test_utilitarian_reward_averaging_is_identity():
    # Duplicating the objective leaves the averaged reward unchanged, so the
    # run must match the single-objective run table for table.
    from maxmin_morl.momdp import TabularMOMDP

    model = random_momdp(101, 3, 2, 1, 0.9)
    doubled = TabularMOMDP(
        model.transition,
        np.repeat(model.reward, 2, axis=2),
        model.initial_dist,
        model.discount,
    )
    cfg = one_state_cfg(total_steps=2000)
    single = utilitarian_train(EpisodicEnv(model, max_episode_steps=40), cfg)
    double = utilitarian_train(EpisodicEnv(doubled, max_episode_steps=40), cfg)
    assert np.array_equal(single.q_values, double.q_values)
    assert np.array_equal(single.policy, double.policy)


def test_mdqn_backup_full_step_sets_vector_target():
    q = np.zeros((2, 2, 2))
    target = np.zeros((2, 2, 2))
    target[1] = [[1.0, 5.0], [4.0, 2.0]]
    batch = [Transition(0, 1, np.array([1.0, 0.5]), 1, False)]
    out = mdqn_backup(q, target, batch, gamma=0.9, learning_rate=1.0)
    # Bootstrap action maximizes min_k(r + g*target): action 0 gives
    # min(1+0.9, 0.5+4.5)=1.9; action 1 gives min(1+3.6, 0.5+1.8)=2.3.
    assert np.allclose(out[0, 1], [1.0 + 0.9 * 4.0, 0.5 + 0.9 * 2.0])
    assert np.all(out[1] == 0.0)


def test_mdqn_one_state_reaches_its_own_fixed_point():
    # Enumeration oracle: deterministic policies earn min-returns 0, 0, 10.
    env = one_state_episodic(0.9, max_episode_steps=50)
    for a, expected in ((0, 0.0), (1, 0.0), (2, 10.0)):
        policy = np.zeros((1, 3))
        policy[0, a] = 1.0
        J = policy_return_vector(env.model, policy)
        assert abs(J.min() - expected) < 1e-9
    # The min-backup bootstraps each reward context on its own best action,
    # so its fixed point (exact synchronous iteration: min_k Q = 14.21,
    # 14.21, 13.79) overstates every deterministic policy's min-return and
    # prefers a mixing arm it cannot actually realize.  That overestimation
    # is the known failure mode of the baseline.
    result = mdqn_train(env, one_state_cfg(total_steps=25_000))
    greedy = int(result.policy[0].argmax())
    assert greedy in (0, 1)
    assert abs(result.q_values[0, greedy] - 3.0 * 0.9 / (1 - 0.81)) < 0.5
    assert result.q_values[0, 2] < result.q_values[0, greedy]


def test_pareto_sweep_identity_scaling_matches_maxmin(one_state):
    points = pareto_sweep(one_state, [(1.0, 1.0)])
    exact = maxmin_exact(one_state)
    assert np.allclose(points[0][1], [15.0, 15.0], atol=1e-9)
    assert abs(min(points[0][1]) - exact.value) < 1e-12


def test_pareto_sweep_equalizer_rule_on_one_state(one_state):
    # Scaling (1, 2) equalizes 1*J1 = 2*J2: closed form gives J = (20, 10).
    points = pareto_sweep(one_state, [(1.0, 2.0)])
    assert np.allclose(points[0][1], [20.0, 10.0], atol=1e-8)


def test_pareto_sweep_points_mutually_nondominated(one_state):
    scalings = [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (1.0, 3.0), (3.0, 1.0)]
    points = pareto_sweep(one_state, scalings)
    returns = [r for _, r in points]
    for i, a in enumerate(returns):
        for j, b in enumerate(returns):
            if i != j:
                dominates = np.all(a >= b - 1e-9) and np.any(a > b + 1e-9)
                assert not dominates


def test_pareto_sweep_rejects_nonpositive_scaling(one_state):
    with pytest.raises(ValueError, match="positive"):
        pareto_sweep(one_state, [(1.0, 0.0)])


def test_run_solve_lp_writes_deterministic_result(tmp_path):
    config = RunConfig(kind="solve-lp", environment={"kind": "one-state", "gamma": 0.9}, seeds=(0,))
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    r1 = run(config, out1)
    r2 = run(config, out2)
    assert abs(r1.value - 15.0) < 1e-9
    assert (out1 / "result.json").read_bytes() == (out2 / "result.json").read_bytes()
    doc = json.loads((out1 / "result.json").read_text())
    assert doc["schema_version"] == 1
    assert (out1 / "meta.json").exists()


def test_run_solve_exact_one_state(tmp_path):
    config = RunConfig(
        kind="solve-exact", environment={"kind": "one-state", "gamma": 0.9}, temperature=0.1, seeds=(0,)
    )
    result = run(config, tmp_path / "reg")
    expected = 0.1 / 0.1 * np.logaddexp.reduce(np.array([15.0, 15.0, 10.0]))
    assert abs(result.value - expected) < 1e-8
    assert np.allclose(result.learned_weights, [0.5, 0.5], atol=1e-6)


def test_run_train_writes_metrics_and_min_consistency(tmp_path):
    config = RunConfig(
        kind="train",
        environment={"kind": "one-state", "gamma": 0.9, "max_episode_steps": 25},
        algorithm="proposed",
        agent=dict(total_steps=300, warmup_steps=40, batch_size=16, num_perturbations=6, seed=0),
        evaluation_episodes=20,
        seeds=(0, 1),
    )
    result = run(config, tmp_path / "train")
    assert result.min_return == min(result.per_objective_mean)
    assert (tmp_path / "train" / "metrics_seed0.csv").exists()
    assert (tmp_path / "train" / "policy.json").exists()
    # Determinism of the result document.
    again = run(config, tmp_path / "train2")
    assert (tmp_path / "train" / "result.json").read_bytes() == (
        tmp_path / "train2" / "result.json"
    ).read_bytes()


def test_run_evaluate_roundtrip(tmp_path):
    policy_path = tmp_path / "policy.json"
    policy_path.write_text(json.dumps([[0.5, 0.5, 0.0]]))
    config = RunConfig(
        kind="evaluate",
        environment={"kind": "one-state", "gamma": 0.9, "max_episode_steps": 200},
        policy_path=str(policy_path),
        evaluation_episodes=100,
        seeds=(0, 1, 2),
    )
    result = run(config, tmp_path / "eval")
    assert abs(result.min_return - 15.0) < 0.5
    assert np.allclose(result.details["exact_return"], [15.0, 15.0], atol=1e-9)


def test_run_config_validation():
    with pytest.raises(ValueError, match="kind"):
        RunConfig(kind="bogus", environment={"kind": "one-state"})
    with pytest.raises(ValueError, match="seeds"):
        RunConfig(kind="solve-lp", environment={"kind": "one-state"}, seeds=())
    with pytest.raises(ValueError, match="scalings"):
        RunConfig(kind="pareto-sweep", environment={"kind": "one-state"})
    with pytest.raises(ValueError, match="policy_path"):
        RunConfig(kind="evaluate", environment={"kind": "one-state"})
