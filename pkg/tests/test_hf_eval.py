import sys

import numpy as np
import pytest

from fnndse.design_space import smallest_point, table1_space
from fnndse.hf_eval import (
    EvaluatorCrash, EvaluatorTimeout, MalformedResponse, MeanHf, SubprocessConfig, SubprocessHf, SyntheticHf,
    SyntheticHfConfig, decode_request, encode_request, parse_response, pseudo_noise, rob_stall_term,
    synthetic_hf_evaluate,
)
from fnndse.lf_model import ModelConfig, lf_evaluate

from test_lf_model import DIJKSTRA

STUB = [sys.executable, "-m", "fnndse.hf_eval"]


def test_degenerate_config_equals_lf():
    sp = table1_space()
    cfg = SyntheticHfConfig(bias=0.0, rob_stall_coeff=0.0, noise_amplitude=0.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = sp.random_point(rng)
        assert synthetic_hf_evaluate(sp, p, DIJKSTRA, cfg) == lf_evaluate(sp, p, DIJKSTRA).cpi


def test_rob_term_clamps_at_zero():
    sp = table1_space()
    p = tuple(len(pp.values) - 1 if pp.name == "rob" else 0 for pp in sp.params)
    lf = lf_evaluate(sp, p, DIJKSTRA)
    expected = max(0.0, 1.5 * lf.mean_latency - 160) / 160
    assert rob_stall_term(sp, p, lf, ModelConfig()) == pytest.approx(expected)
    assert rob_stall_term(sp, p, lf, ModelConfig(), demand_factor=1e-3) == 0.0


def test_small_rob_pays_more_than_large_rob():
    sp = table1_space()
    cfg = SyntheticHfConfig(noise_amplitude=0.0)
    small = list(smallest_point(sp))
    small[sp.index_of("decode")] = 4
    large = list(small)
    large[sp.index_of("rob")] = 4
    gap_small = synthetic_hf_evaluate(sp, tuple(small), DIJKSTRA, cfg) - 1.05 * lf_evaluate(sp, tuple(small), DIJKSTRA).cpi
    gap_large = synthetic_hf_evaluate(sp, tuple(large), DIJKSTRA, cfg) - 1.05 * lf_evaluate(sp, tuple(large), DIJKSTRA).cpi
    assert gap_small > gap_large >= 0.0


def test_deterministic_and_seeded():
    sp = table1_space()
    p = smallest_point(sp)
    a = SyntheticHf(sp).evaluate(p, DIJKSTRA)
    assert a == SyntheticHf(sp).evaluate(p, DIJKSTRA)
    assert pseudo_noise(p, "dijkstra", 0) != pseudo_noise(p, "dijkstra", 1)
    assert -1.0 <= pseudo_noise(p, "x", 3) <= 1.0


def test_fidelity_gap_is_moderate():
    sp = table1_space()
    hf = SyntheticHf(sp)
    rng = np.random.default_rng(1)
    lf, gap = [], []
    for _ in range(100):
        p = sp.random_point(rng)
        c = lf_evaluate(sp, p, DIJKSTRA).cpi
        lf.append(c)
        gap.append(abs(hf.evaluate(p, DIJKSTRA) - c))
    assert 0.0 < np.mean(gap) < 0.5 * np.mean(lf)


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticHfConfig(noise_amplitude=-0.1)
    with pytest.raises(ValueError):
        SyntheticHfConfig(rob_demand_factor=0.0)
    assert SyntheticHfConfig.from_dict({"seed": 3}).seed == 3


def test_protocol_round_trip():
    sp = table1_space()
    p = sp.random_point(np.random.default_rng(2))
    line = encode_request(sp, p, "mm")
    assert '"workload": "mm"' in line
    assert decode_request(sp, line) == (p, "mm")


@pytest.mark.parametrize("line,exc", [
    ("not json", MalformedResponse),
    ("[1]", MalformedResponse),
    ('{"ok": 1}', MalformedResponse),
    ('{"cpi": -1}', MalformedResponse),
    ('{"cpi": "x"}', MalformedResponse),
    ('{"error": "boom"}', EvaluatorCrash),
])
def test_parse_response_errors(line, exc):
    with pytest.raises(exc):
        parse_response(line)


def test_subprocess_fixed():
    sp = table1_space()
    hf = SubprocessHf(sp, SubprocessConfig(STUB + ["--fixed", "1.5"], timeout=30))
    assert hf.evaluate(smallest_point(sp), DIJKSTRA) == 1.5


def test_subprocess_synthetic_matches_in_process():
    sp = table1_space()
    p = smallest_point(sp)
    hf = SubprocessHf(sp, SubprocessConfig(STUB, timeout=60))
    from fnndse.config import load_config

    cfg = load_config()
    ref = SyntheticHf(cfg.space, cfg.hf.synthetic, cfg.model).evaluate(p, cfg.workloads["dijkstra"])
    assert hf.evaluate(p, cfg.workloads["dijkstra"]) == pytest.approx(ref, rel=1e-12)


def test_subprocess_failures():
    sp = table1_space()
    p = smallest_point(sp)
    with pytest.raises(EvaluatorCrash):
        SubprocessHf(sp, SubprocessConfig(STUB + ["--exit-code", "3"], timeout=30)).evaluate(p, DIJKSTRA)
    with pytest.raises(MalformedResponse):
        SubprocessHf(sp, SubprocessConfig(STUB + ["--drop-cpi"], timeout=30)).evaluate(p, DIJKSTRA)
    with pytest.raises(EvaluatorTimeout):
        SubprocessHf(sp, SubprocessConfig([sys.executable, "-c", "import time; time.sleep(10)"],
                                          timeout=0.5)).evaluate(p, DIJKSTRA)
    with pytest.raises(EvaluatorCrash):
        SubprocessHf(sp, SubprocessConfig([])).evaluate(p, DIJKSTRA)


def test_evaluate_many_returns_failures_in_place():
    sp = table1_space()
    hf = SubprocessHf(sp, SubprocessConfig(STUB + ["--fixed", "2.0"], timeout=30, max_concurrent=3))
    pts = [sp.random_point(np.random.default_rng(i)) for i in range(4)]
    assert hf.evaluate_many(pts, DIJKSTRA) == [2.0] * 4


def test_mean_hf():
    sp = table1_space()
    inner = SyntheticHf(sp)
    other = DIJKSTRA.__class__(**dict(DIJKSTRA.__dict__, name="other", footprint_bytes=4096))
    m = MeanHf(inner, [DIJKSTRA, other])
    p = smallest_point(sp)
    assert m.evaluate(p) == pytest.approx((inner.evaluate(p, DIJKSTRA) + inner.evaluate(p, other)) / 2)
