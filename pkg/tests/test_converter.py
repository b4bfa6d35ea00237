import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evhil.converter import (ConverterParams, ConverterState, bridge_powers, clamp_modulation,
                             grid_voltage, plant_tf, step_converter)
from evhil.errors import IntegrationError, ParameterError

P = ConverterParams()


def test_defaults_match_nameplate_table():
    assert (P.s_rated, P.v_grid_rms, P.f_sw) == (10_000.0, 240.0, 72_000.0)
    assert P.omega0 == pytest.approx(2 * math.pi * 60)
    assert (P.l_s, P.c_dc, P.r_dc) == (500e-6, 500e-6, 60.0)
    assert (P.v_dc_min, P.v_dc_max) == (340.0, 800.0)
    assert P.dt == pytest.approx(1 / 72_000)


@pytest.mark.parametrize("change", [dict(l_s=0.0), dict(r_dc=-1.0), dict(c_dc=math.nan),
                                    dict(v_dc_nom=900.0), dict(v_dc_nom=340.0)])
def test_invalid_params_rejected(change):
    with pytest.raises(ParameterError):
        ConverterParams(**change)


def test_plant_tf_coefficients_and_limits():
    g = plant_tf(P, 500.0)
    assert g.num == (0.0, 0.0, -500.0)
    assert g.den == (0.0, 5e-4, 0.05)
    assert abs(g(0j)) == pytest.approx(500 / 0.05)
    assert abs(g(1e6j)) == pytest.approx(500 / abs(0.05 + 1e6j * 5e-4), rel=1e-12)
    assert abs(g(1e6j)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("v", [339.0, 801.0])
def test_plant_tf_range_checked(v):
    with pytest.raises(ParameterError):
        plant_tf(P, v)


def test_grid_voltage_values():
    quarter = 1 / 240
    assert grid_voltage(0.0, 240, P.omega0) == 0.0
    assert grid_voltage(quarter, 240, P.omega0) == pytest.approx(339.411, abs=1e-3)
    assert grid_voltage(quarter, 226, P.omega0) == pytest.approx(319.612, abs=1e-3)
    with pytest.raises(ParameterError):
        grid_voltage(0.0, -1.0, P.omega0)


def test_zero_state_is_equilibrium_without_source():
    s = ConverterState()
    for _ in range(100):
        s = step_converter(s, 0.0, None, P, v_rms=0.0)
    assert (s.i_s, s.v_dc) == (0.0, 0.0)


def test_rc_discharge_matches_closed_form():
    s = ConverterState(0.0, 500.0, 0.0)
    n = int(round(0.030 * P.f_sw))
    for _ in range(n):
        s = step_converter(s, 0.0, None, P, v_rms=0.0)
    assert s.v_dc == pytest.approx(500 / math.e, rel=1e-9)
    assert s.v_dc == pytest.approx(183.94, abs=0.01)


def test_modulation_clamped_and_flagged():
    assert clamp_modulation(1.5) == (1.0, True)
    assert clamp_modulation(-2.0) == (-1.0, True)
    assert clamp_modulation(0.3) == (0.3, False)
    s = step_converter(ConverterState(0.0, 500.0), 1.7, None, P)
    assert s.saturated


@pytest.mark.parametrize("dt", [0.0, -1e-6, math.inf])
def test_bad_step_rejected(dt):
    with pytest.raises(IntegrationError):
        step_converter(ConverterState(), 0.0, dt, P)


def test_non_finite_state_rejected():
    with pytest.raises(IntegrationError):
        step_converter(ConverterState(math.nan, 1.0), 0.0, None, P)


def test_dc_voltage_never_negative():
    # full reverse modulation with negative current would pull v_dc below zero
    s = ConverterState(-200.0, 1.0)
    for _ in range(50):
        s = step_converter(s, 1.0, None, P, v_rms=0.0)
        assert s.v_dc >= 0.0


@given(st.floats(-1, 1), st.floats(-100, 100), st.floats(0, 800))
def test_lossless_bridge_identity(m, i, v):
    ac, dc = bridge_powers(ConverterState(i, v), m)
    assert ac == pytest.approx(dc, rel=1e-12, abs=1e-9)


def _balance(s, e0):
    return s.e_grid - (s.stored_energy(P) - e0) - s.e_rl - s.e_load


def test_energy_conservation_closed_loop():
    # crude current regulator keeps the link charged; the ledger must balance anyway
    dt = P.dt
    s = ConverterState(0.0, 500.0, 0.0)
    e0 = s.stored_energy(P)
    for k in range(int(0.1 / dt)):
        t = k * dt
        vs = grid_voltage(t + dt / 2, 240, P.omega0)
        m = (vs + 5 * (s.i_s - 42 * math.sin(P.omega0 * t))) / s.v_dc
        s = step_converter(s, m, dt, P)
        assert s.v_dc > 340
    assert abs(_balance(s, e0)) / s.e_grid <= 1e-6


def _lc_error(dt):
    # undamped-ish LC swing from the charged link; stays clear of the zero floor
    s = ConverterState(0.0, 500.0, 0.0)
    e0 = s.stored_energy(P)
    for _ in range(int(round(1e-3 / dt))):
        s = step_converter(s, 0.5, dt, P, v_rms=0.0)
    assert s.v_dc > 200
    return _balance(s, e0)


def test_energy_error_fourth_order():
    e1, e2, e3 = (_lc_error(1 / f) for f in (32_000, 64_000, 128_000))
    for a, b in ((e1, e2), (e2, e3)):
        assert 12 < a / b < 20


def _measured_gain(omega):
    """Open-loop response of i_s to a small modulation sinusoid, v_dc held fixed."""
    prm = P.with_(c_dc=1e6, r_dc=1e9)
    g_model = complex(plant_tf(prm, 500.0)(1j * omega))
    m0 = 1e-3
    period = 2 * math.pi / omega
    dt = period / 200
    # start on the analytic steady state; any model mismatch shows up as a transient
    s = ConverterState((m0 * g_model * -1j).real, 500.0, 0.0)
    warm, meas = 400, 800
    acc = 0j
    for k in range(warm + meas):
        t = k * dt
        m = m0 * math.sin(omega * (t + 0.5 * dt))   # midpoint sample of the held value
        s_next = step_converter(s, m, dt, prm, v_rms=0.0)
        if k >= warm:
            acc += s.i_s * np.exp(-1j * omega * t)
        s = s_next
    i_phasor = 2 * acc / meas          # i = Im(I e^{jwt}) convention below
    return (i_phasor * 1j) / m0, g_model


@pytest.mark.parametrize("omega", [1e2, 3e2, 1e3, 3e3, 1e4, 3e4, 1e5])
def test_plant_matches_simulated_linear_response(omega):
    measured, model = _measured_gain(omega)
    assert abs(measured - model) / abs(model) <= 0.01
