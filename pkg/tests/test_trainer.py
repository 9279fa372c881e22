import math

import numpy as np
import pytest

from fnndse.design_space import smallest_point
from fnndse.harness import build_hf, build_problem, init_state, oracle
from fnndse.trainer import (
    HF, LF, BestSet, BudgetExhausted, InfeasibleConfig, Problem, Schedule, compute_metrics, hf_reward,
    hf_train, hf_transition, lf_reward, lf_train, new_state, policy_update, rollout,
)


def test_reward_examples():
    assert lf_reward(1.30, 1.25, 0.05) == pytest.approx(0.10)
    assert lf_reward(1.20, 1.25, 0.05) == pytest.approx(0.0)
    assert hf_reward(0.9, 1.0, 0.05) == pytest.approx(-0.05)


def test_metrics_examples():
    m = compute_metrics(1.302, 1.083, 1.0)
    assert m.improvement == pytest.approx(0.302 / 0.083)
    assert round(m.improvement, 2) == 3.64
    assert compute_metrics(1.299, 1.001, 1.0).improvement == pytest.approx(299.0)
    assert compute_metrics(1.1, 1.0, 1.0).improvement == math.inf
    assert compute_metrics(1.0, 1.0, 1.0).improvement == 1.0
    m = compute_metrics(0.99, 1.0, 1.0)
    assert m.beat_oracle and m.regret_lf == 0.0


def test_best_set_orders_and_dedups():
    b = BestSet(3)
    assert b.add((0,), 1.0) and b.add((1,), 3.0) and b.add((2,), 2.0)
    assert not b.add((1,), 9.0)
    assert not b.add((3,), 0.5)
    assert b.add((4,), 2.5)
    assert b.points() == [(1,), (4,), (2,)]


def test_zero_reward_leaves_weights_unchanged(toy_problem):
    st = new_state(toy_problem, 0)
    traces = [rollout(st, toy_problem) for _ in range(4)]
    before = st.weights.copy()
    policy_update(st, traces, [0.0] * 4)
    assert st.weights.state_equal(before)


def test_positive_reward_raises_chosen_action_probability(toy_problem):
    from fnndse.fnn_core import forward, policy_distribution

    st = new_state(toy_problem, 1)
    tr = rollout(st, toy_problem)
    s0 = tr.steps[0]
    T = st.temperature()
    p_before = policy_distribution(forward(st.weights, s0.metric_values, s0.group_values).scores, s0.mask, T)
    policy_update(st, [tr], [1.0])
    p_after = policy_distribution(forward(st.weights, s0.metric_values, s0.group_values).scores, s0.mask, T)
    assert p_after[s0.action] > p_before[s0.action]


def test_rollout_respects_area(toy_problem):
    st = new_state(toy_problem, 2)
    for _ in range(30):
        tr = rollout(st, toy_problem)
        assert tr.final_area <= toy_problem.area_limit
        assert tr.fidelity == LF
        assert len(tr.actions) == sum(np.subtract(tr.final_point, tr.start))


def test_zero_step_episode():
    from fnndse.config import load_config

    cfg = load_config("toy.yaml")
    p = build_problem(cfg)
    limit = p.area(smallest_point(cfg.space))
    tight = Problem(cfg.space, p.workloads, p.model_cfg, p.area_model, limit)
    st = new_state(tight, 0)
    tr = rollout(st, tight)
    assert tr.final_point == smallest_point(cfg.space)
    assert tr.reverted is not None and tr.actions == []


def test_infeasible_limit(toy_problem):
    p = Problem(toy_problem.space, toy_problem.workloads, toy_problem.model_cfg, toy_problem.area_model, 0.1)
    with pytest.raises(InfeasibleConfig):
        lf_train(new_state(p, 0), p)


def test_ipc_star_monotone_and_records(toy_problem):
    st = new_state(toy_problem, 3, Schedule(max_episodes=64, min_episodes=16, batch_size=8))
    lf_train(st, toy_problem)
    h = st.ipc_star_history
    assert all(b >= a for a, b in zip(h, h[1:]))
    ep = [r for r in st.records if r["type"] == "episode"]
    assert len(ep) == st.episode
    assert {"episode", "phase", "design", "area", "cpi", "reward", "ipc_star", "temperature"} <= set(ep[0])
    assert all(r["area"] <= toy_problem.area_limit for r in ep)


def test_temperature_schedule(toy_problem):
    st = new_state(toy_problem, 0)
    assert st.temperature() == 1.0
    st.episode = 100
    assert st.temperature() == pytest.approx(0.995 ** 100)
    st.episode = 10_000
    assert st.temperature() == 0.1


def test_hf_budget_accounting(toy_cfg):
    problem = build_problem(toy_cfg)
    hf = build_hf(toy_cfg)
    st = init_state(toy_cfg, problem, 0)
    lf_train(st, problem)
    st.set_budget(10)
    hf_transition(st, problem, hf)
    used = st.hf_budget_initial - st.hf_budget_remaining
    assert used == 1 + len(st.hf_scored) <= 1 + st.schedule.subset_size
    assert st.ipc_h0 == pytest.approx(1.0 / st.hf_results[st.converged_point])
    st, best, cpi = hf_train(st, problem, hf)
    hf_recs = [r for r in st.records if r["type"] == "hf"]
    assert len(hf_recs) == len(st.hf_results) == 10 - st.hf_budget_remaining <= 10
    assert [r["budget_remaining"] for r in hf_recs] == list(range(9, 9 - len(hf_recs), -1))
    assert cpi == min(st.hf_results.values())
    assert all(r["area"] <= problem.area_limit for r in hf_recs)
    assert any(r["phase"] == HF for r in st.records if r["type"] == "episode")


def test_transition_needs_budget(toy_cfg):
    problem = build_problem(toy_cfg)
    st = init_state(toy_cfg, problem, 0)
    lf_train(st, problem)
    st.set_budget(2)
    with pytest.raises(BudgetExhausted):
        hf_transition(st, problem, build_hf(toy_cfg), subset_size=4)


def test_toy_greedy_reaches_optimum(toy_cfg):
    problem = build_problem(toy_cfg)
    best = oracle(problem, lambda p: problem.lf(p).cpi, exhaustive_cap=10_000).best_cpi
    hits = 0
    for seed in range(5):
        st = init_state(toy_cfg, problem, seed)
        lf_train(st, problem)
        if problem.lf(st.converged_point).cpi <= 1.02 * best:
            hits += 1
    assert hits >= 4


def test_deterministic_training(toy_problem):
    a = lf_train(new_state(toy_problem, 7, Schedule(max_episodes=48, min_episodes=16)), toy_problem)
    b = lf_train(new_state(toy_problem, 7, Schedule(max_episodes=48, min_episodes=16)), toy_problem)
    assert a.weights.state_equal(b.weights) and a.records == b.records
