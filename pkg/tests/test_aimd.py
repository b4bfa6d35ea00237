import math

import pytest
from hypothesis import given, strategies as st

from evhil.aimd import (DECREASE, HOLD, INCREASE, AimdConfig, AimdState, aimd_decide, aimd_step,
                        aimd_tick, record_voltage, update_threshold)
from evhil.errors import ParameterError, SequencingError, ThresholdUnavailable

CFG = AimdConfig()


def straight_line(volts, p0=10_000.0, t_u=60, t_a=10, alpha=100.0, beta=0.5,
                  p_max=10_000.0, p_min=0.0):
    """Plain transcription of the algorithm over a 1 Hz trace starting at t = 0."""
    p = p0
    v_th = None
    out = []
    for t, v in enumerate(volts):
        if t > 0 and t % t_u == 0:
            v_th = min(volts[max(0, t - t_u): t + 1])
        if t > 0 and t % t_a == 0 and v_th is not None:
            if v > v_th:
                p = p + alpha
            else:
                p = p * beta
            p = min(max(p, p_min), p_max)
        out.append(p)
    return out


def run(volts, p0=10_000.0, cfg=CFG):
    st_ = AimdState.start(cfg, p0)
    return [aimd_tick(st_, v, float(t))[0] for t, v in enumerate(volts)]


def _traces():
    n = 600
    flat = [231.0] * n
    sag = [236.0 - 10.0 * t / n for t in range(n)]
    rise = [226.0 + 10.0 * t / n for t in range(n)]
    wave = [230.0 + round(3 * math.sin(2 * math.pi * t / 137), 1) for t in range(n)]
    # step down then back up; ties with the window minimum on the plateau
    step = [232.0 if t < 200 or t >= 400 else 228.0 for t in range(n)]
    saw = [229.0 + (t % 45) * 0.1 for t in range(n)]
    return {"flat": flat, "sag": sag, "rise": rise, "wave": wave, "step": step, "saw": saw}


@pytest.mark.parametrize("name", sorted(_traces()))
@pytest.mark.parametrize("p0", [10_000.0, 9_950.0, 150.0])
def test_matches_straight_line_interpreter(name, p0):
    volts = _traces()[name]
    assert run(volts, p0) == straight_line(volts, p0)


@given(st.lists(st.integers(2260, 2400), min_size=1, max_size=600), st.integers(0, 100))
def test_matches_interpreter_on_random_traces(deci, p0):
    volts = [d / 10 for d in deci]      # coarse grid makes ties common
    assert run(volts, p0 * 100.0) == straight_line(volts, p0 * 100.0)


def test_decision_examples():
    assert aimd_decide(5000, 230, 228, CFG) == (5100, INCREASE)
    assert aimd_decide(5000, 227, 228, CFG) == (2500, DECREASE)
    assert aimd_decide(9950, 240, 228, CFG) == (10_000, INCREASE)
    assert aimd_decide(5000, 228, 228, CFG) == (2500, DECREASE)


def test_window_eviction_and_minimum():
    st_ = AimdState.start()
    record_voltage(st_, 230.0, 0.0)
    assert len(st_.window) == 1
    for t in range(1, 61):
        record_voltage(st_, 230.0, float(t))
    assert len(st_.window) == 61
    record_voltage(st_, 230.0, 61.0)
    assert st_.window[0][0] == 1.0 and st_.window[-1][0] == 61.0
    st2 = AimdState.start()
    for t, v in enumerate([230, 229.5, 228.7, 229.1]):
        record_voltage(st2, v, float(t))
    assert update_threshold(st2, 3.0).v_th == 228.7


def test_time_backwards_rejected():
    st_ = AimdState.start()
    record_voltage(st_, 230.0, 5.0)
    with pytest.raises(SequencingError):
        record_voltage(st_, 230.0, 4.0)


def test_empty_window_threshold_unavailable():
    with pytest.raises(ThresholdUnavailable):
        update_threshold(AimdState.start(), 60.0)


def test_constant_window_threshold():
    st_ = AimdState.start()
    for t in range(61):
        record_voltage(st_, 240.0, float(t))
    assert update_threshold(st_, 60.0).v_th == 240.0


def test_threshold_non_increasing_under_falling_voltage():
    st_ = AimdState.start()
    ths = []
    for t in range(181):
        aimd_tick(st_, 235.0 - 0.02 * t, float(t))
        if t and t % 60 == 0:
            ths.append(st_.v_th)
    assert ths == sorted(ths, reverse=True)


def test_holds_before_first_threshold():
    st_ = AimdState.start(CFG, 4000.0)
    out = [aimd_tick(st_, 250.0, float(t)) for t in range(60)]
    assert all(p == 4000.0 and b == HOLD for p, b in out)
    assert aimd_step(AimdState.start(CFG, 4000.0), 250.0, 10.0) == 4000.0


def test_climbs_to_clamp_under_static_threshold():
    st_ = AimdState.start(CFG, 8000.0)
    st_.v_th = 228.0
    for k in range(40):
        aimd_step(st_, 235.0, 10.0 * k)
    assert st_.p_cmd == 10_000.0


@given(st.lists(st.floats(200, 250), min_size=61, max_size=61), st.floats(-5, 5))
def test_threshold_translation_equivariant(volts, delta):
    a, b = AimdState.start(), AimdState.start()
    for t, v in enumerate(volts):
        record_voltage(a, v, float(t))
        record_voltage(b, v + delta, float(t))
    assert update_threshold(b, 60.0).v_th == pytest.approx(update_threshold(a, 60.0).v_th + delta,
                                                           abs=1e-9)


@given(st.lists(st.floats(220, 245), min_size=1, max_size=400))
def test_replay_is_deterministic_and_clamped(volts):
    first, second = run(volts), run(volts)
    assert first == second
    assert all(0.0 <= p <= 10_000.0 for p in first)


@given(st.lists(st.integers(2260, 2400), min_size=60, max_size=600))
def test_sawtooth_between_decreases(deci):
    volts = [d / 10 for d in deci]
    st_ = AimdState.start(CFG, 5000.0)
    prev = 5000.0
    for t, v in enumerate(volts):
        p, branch = aimd_tick(st_, v, float(t))
        if branch == INCREASE:
            assert p == min(prev + 100.0, 10_000.0)
        elif branch == DECREASE:
            assert p == prev * 0.5
        else:
            assert p == prev
        prev = p


@pytest.mark.parametrize("kw", [dict(beta=1.0), dict(beta=0.0), dict(alpha=0.0),
                                dict(t_update=65.0), dict(p_min=10_000.0), dict(t_algo=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        AimdConfig(**kw)


def test_non_finite_sample_rejected():
    with pytest.raises(ParameterError):
        record_voltage(AimdState.start(), math.nan, 0.0)
