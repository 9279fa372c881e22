import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fnndse import fnn_core
from fnndse.design_space import preference_boundary, table1_space
from fnndse.fnn_core import (
    BELL, INV_SIGMOID, SIGMOID, CheckpointError, DegenerateFiring, EmptyMask, FnnError, MembershipFn,
    backward, build_weights, default_metric_input, forward, greedy_action, loads_checkpoint, dumps_checkpoint,
    mf_eval, policy_distribution, rule_antecedent, rule_count, rule_index, set_preference,
)

from gradcheck import fd_gradients, random_inputs, random_weights, rel_err


def table1_weights(seed=0):
    rng = np.random.default_rng(seed)
    return build_weights(table1_space(), [default_metric_input("IPC", 0.0, 5.0)], rng)


def test_mf_examples():
    assert mf_eval(MembershipFn(SIGMOID, 3.0, slope=4.0), 3.0) == 0.5
    assert mf_eval(MembershipFn(BELL, 2.0, width=1.0), 2.0) == 1.0
    assert mf_eval(MembershipFn(SIGMOID, 5.0, slope=2.0), 6.0) == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-15)
    assert mf_eval(MembershipFn(SIGMOID, 5.0, slope=2.0), 6.0) == pytest.approx(0.8807970779778823, abs=1e-12)
    assert mf_eval(MembershipFn(INV_SIGMOID, 5.0, slope=2.0), 6.0) == pytest.approx(0.11920292202211755, abs=1e-12)


def test_mf_validation():
    with pytest.raises(FnnError):
        MembershipFn(SIGMOID, 0.0, slope=0.0)
    with pytest.raises(FnnError):
        MembershipFn(BELL, 0.0, width=1.0, shape=0.5)
    with pytest.raises(FnnError):
        MembershipFn("TRIANGLE", 0.0)


@given(st.sampled_from([SIGMOID, INV_SIGMOID, BELL]), st.floats(-5, 5), st.floats(0.1, 20), st.floats(-50, 50))
def test_mf_bounded(kind, c, s, x):
    mu = mf_eval(MembershipFn(kind, c, slope=s, width=s, shape=2.0), x)
    assert 0.0 <= mu <= 1.0


def test_metric_defaults():
    m = default_metric_input("IPC", 0.0, 4.0)
    centers = [mf.center for _, mf in m.sets]
    assert centers == [1.0, 2.0, 3.0]
    assert m.sets[0][1].slope == 2.0 and m.sets[1][1].width == 1.0 and m.sets[1][1].shape == 2.0
    assert not any(mf.trainable_center for _, mf in m.sets)


def test_rule_count_and_bijection():
    w = table1_weights()
    assert w.n_rules == rule_count(1, 7) == 384
    for r in range(w.n_rules):
        assert rule_index(w, rule_antecedent(w, r)) == r
    # metrics outermost, first group most significant after them
    assert rule_antecedent(w, 0) == (0,) * 8
    assert rule_antecedent(w, 1) == (0,) * 7 + (1,)
    assert rule_antecedent(w, 128) == (1,) + (0,) * 7


def test_twelve_rules_for_one_metric_two_groups():
    rng = np.random.default_rng(0)
    w = random_weights(rng, n_metrics=1, n_groups=2, n_params=2)
    assert w.n_rules == 12


def test_forward_zero_C():
    w = table1_weights()
    w.C[:] = 0.0
    out = forward(w, [2.0], [0.3] * 7)
    assert np.all(out.scores == 0.0)


def test_forward_single_active_rule():
    rng = np.random.default_rng(1)
    w = random_weights(rng, n_metrics=1, n_groups=2, n_params=2)
    out = forward(w, [1.0], [0.2, 0.7])
    r = 5
    firing = np.zeros(w.n_rules)
    firing[r] = 1.0
    norm = firing / firing.sum()
    assert np.allclose(norm @ w.C, w.C[r])
    assert out.scores.shape == (w.n_params,)


def test_degenerate_firing():
    # every metric label vanishes at x=0.5, so no rule fires
    metric = fnn_core.FuzzyInput("IPC", fnn_core.METRIC, [
        ("low", MembershipFn(INV_SIGMOID, 0.0, slope=1e4)),
        ("avg", MembershipFn(BELL, 10.0, width=1e-3, shape=10.0)),
        ("high", MembershipFn(SIGMOID, 1.0, slope=1e4)),
    ])
    w = build_weights(table1_space(), [metric], np.random.default_rng(0))
    with pytest.raises(DegenerateFiring):
        forward(w, [0.5], [0.5] * 7)


def test_backward_zero_upstream_and_frozen():
    rng = np.random.default_rng(2)
    w = random_weights(rng, frozen_frac=0.3)
    mv, gv = random_inputs(rng, w)
    dC, dc = backward(w, mv, gv, np.zeros(w.n_params))
    assert np.all(dC == 0) and np.all(dc == 0)
    dC, dc = backward(w, mv, gv, rng.normal(size=w.n_params))
    assert np.all(dC[w.frozen] == 0.0)
    assert dc[0] == 0.0  # metric centers are not trainable


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(10):
        w = random_weights(rng)
        mv, gv = random_inputs(rng, w)
        g = rng.normal(size=w.n_params)
        dC, dc = backward(w, mv, gv, g)
        fC, fc = fd_gradients(w, mv, gv, g)
        assert rel_err(dC, fC).max() < 1e-4
        assert rel_err(dc, fc).max() < 1e-4


def test_policy_examples():
    p = policy_distribution(np.arange(4.0), [False, False, True, False])
    assert p.tolist() == [0.0, 0.0, 1.0, 0.0]
    p = policy_distribution(np.zeros(11), np.ones(11, bool))
    assert np.allclose(p, 1 / 11)
    with pytest.raises(EmptyMask):
        policy_distribution(np.zeros(3), np.zeros(3, bool))


def test_low_temperature_concentrates_on_argmax():
    rng = np.random.default_rng(4)
    scores = np.array([0.3, 0.9, 0.1, 0.5])
    mask = np.array([True, False, True, True])
    p = policy_distribution(scores, mask, 1e-3)
    draws = rng.choice(4, size=1000, p=p)
    assert np.mean(draws == 3) >= 0.99
    assert greedy_action(scores, mask) == 3


def test_greedy_ties_go_to_lowest_index():
    assert greedy_action([1.0, 2.0, 2.0, 2.0], [True, False, True, True]) == 2


def test_set_preference_decode():
    sp = table1_space()
    w = table1_weights()
    before = w.C.copy()
    b = preference_boundary(sp, "decode", 3, 4)
    set_preference(w, "decode", b, "decode", strength=1.0)
    i = w.input_index("decode")
    low = w.combos[:, i] == 0
    d = sp.index_of("decode")
    assert np.allclose(w.C[low, d] - before[low, d], 1.0)
    assert np.array_equal(w.C[~low, d], before[~low, d])
    assert np.array_equal(np.delete(w.C, d, 1), np.delete(before, d, 1))
    assert np.all(w.frozen[low, d]) and not w.frozen[~low, d].any()
    assert w.inputs[i].center == pytest.approx(0.625) and not w.inputs[i].trainable


def test_set_preference_zero_strength():
    w = table1_weights()
    before = w.C.copy()
    set_preference(w, "L1", 0.3, "l1_way", strength=0.0)
    assert np.array_equal(w.C, before)
    assert w.inputs[w.input_index("L1")].center == 0.3


def test_set_preference_errors():
    w = table1_weights()
    with pytest.raises(fnn_core.UnknownGroup):
        set_preference(w, "IPC", 0.5, "decode")
    with pytest.raises(fnn_core.UnknownGroup):
        set_preference(w, "nope", 0.5, "decode")
    with pytest.raises(fnn_core.UnknownParam):
        set_preference(w, "decode", 0.5, "nope")


def test_checkpoint_round_trip(tmp_path):
    w = table1_weights(5)
    set_preference(w, "decode", 0.6, "decode")
    w.activity[:] = np.arange(w.n_rules)
    text = dumps_checkpoint(w, {"seed": 5})
    w2 = loads_checkpoint(text)
    assert w.state_equal(w2)
    assert np.array_equal(w.C, w2.C) and np.array_equal(w.frozen, w2.frozen)
    fnn_core.save_checkpoint(w, tmp_path / "c.json", {"seed": 5})
    assert fnn_core.load_checkpoint(tmp_path / "c.json").state_equal(w)


def test_corrupt_checkpoint():
    with pytest.raises(CheckpointError):
        loads_checkpoint("{}")
    with pytest.raises(CheckpointError):
        loads_checkpoint('{"format": "fnndse-checkpoint", "version": 1}')
    text = dumps_checkpoint(table1_weights()).replace('"rows": 384', '"rows": 383')
    with pytest.raises(CheckpointError):
        loads_checkpoint(text)


@given(st.integers(0, 2**32 - 1))
def test_normalized_firing_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    w = random_weights(rng, n_metrics=int(rng.integers(1, 3)), n_groups=int(rng.integers(1, 5)))
    mv, gv = random_inputs(rng, w)
    out = forward(w, mv, gv)
    assert abs(out.normalized_firing.sum() - 1.0) <= 1e-9
    assert np.all((out.firing >= 0) & (out.firing <= 1))
    assert w.n_rules == 3 ** w.n_metrics * 2 ** w.n_groups
