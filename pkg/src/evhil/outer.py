"""Outer V/P/Q loops feeding the inner current controller.

Cascade: the P loop sets the DC-link voltage reference, the V loop sets the
RMS current amplitude, the Q loop sets the current phase. Each loop adds a
PI trim to a feed-forward term computed from the setpoints, so a setpoint
step moves the reference immediately and the integrators only remove the
residual (inductor loss, grid-voltage error).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .converter import ConverterParams
from .errors import ParameterError
from .measurement import reference_amplitude


@dataclass
class PiController:
    """Clamped PI with conditional-integration anti-windup.

    ``u = clamp(ff + k_p * err + integrator)`` where the integrator has
    already absorbed ``k_i * err * dt`` for this step, unless that update
    would push a saturated output further into its rail.
    """

    k_p: float
    k_i: float
    u_min: float = -math.inf
    u_max: float = math.inf
    dt: float = 1e-3
    integrator: float = 0.0
    saturated: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ParameterError("u_min must be below u_max")


def pi_step(pi: PiController, err: float, dt: float | None = None, ff: float = 0.0) -> float:
    dt = pi.dt if dt is None else dt
    if dt <= 0:
        raise ParameterError("dt must be positive")
    trial = pi.integrator + pi.k_i * err * dt
    u = ff + pi.k_p * err + trial
    if u > pi.u_max:
        if err < 0:
            pi.integrator = trial
        u = ff + pi.k_p * err + pi.integrator
        pi.saturated = u > pi.u_max
        return min(u, pi.u_max)
    if u < pi.u_min:
        if err > 0:
            pi.integrator = trial
        u = ff + pi.k_p * err + pi.integrator
        pi.saturated = u < pi.u_min
        return max(u, pi.u_min)
    pi.integrator = trial
    pi.saturated = False
    return u


@dataclass(frozen=True)
class OuterGains:
    """PI gains and the per-unit bases they are expressed in.

    Each loop's gains act on ``error / in_base`` and produce
    ``output / out_base``: P-loop error in per-unit of rated power and output
    in per-unit of the nominal DC voltage; V-loop in volts to amps; Q-loop in
    per-unit of rated power to radians.
    """

    kp_v: float = 0.1
    ki_v: float = 20.0
    kp_p: float = 2.5
    ki_p: float = 2.5
    kp_q: float = 0.1
    ki_q: float = 20.0
    rate_hz: float = 1000.0
    ref_model_hz: float = 20.0
    theta_max: float = math.pi / 3
    current_margin: float = 1.2


@dataclass
class OuterLoopState:
    p_loop: PiController
    v_loop: PiController
    q_loop: PiController
    params: ConverterParams
    v_dc_ref: float = 0.0
    theta_cmd: float = 0.0
    i_amp_cmd: float = 0.0
    faulted: bool = False
    fault_reason: str = ""
    p_model: float = 0.0
    q_model: float = 0.0
    model_pole: float = 0.0

    @property
    def dt(self) -> float:
        return self.p_loop.dt


def make_outer_loops(params: ConverterParams, gains: OuterGains | None = None) -> OuterLoopState:
    g = gains or OuterGains()
    dt = 1.0 / g.rate_hz
    s = params.s_rated
    i_max = g.current_margin * params.i_rated
    return OuterLoopState(
        p_loop=PiController(g.kp_p * params.v_dc_nom / s, g.ki_p * params.v_dc_nom / s,
                            params.v_dc_min, params.v_dc_max, dt),
        v_loop=PiController(g.kp_v, g.ki_v, 0.0, i_max, dt),
        q_loop=PiController(g.kp_q / s, g.ki_q / s, -g.theta_max, g.theta_max, dt),
        params=params,
        model_pole=math.exp(-2.0 * math.pi * g.ref_model_hz * dt),
    )


def dc_voltage_for(p: float, params: ConverterParams) -> float:
    """DC-link voltage at which the load resistor absorbs ``p`` watts."""
    return math.sqrt(max(p, 0.0) * params.r_dc)


def initialize_at(state: OuterLoopState, p_ref: float, q_ref: float, v_rms: float) -> None:
    """Place the loops at the steady operating point for a setpoint (zero trims)."""
    i_rms, theta = reference_amplitude(p_ref, q_ref, v_rms)
    for pi in (state.p_loop, state.v_loop, state.q_loop):
        pi.integrator = 0.0
        pi.saturated = False
    state.i_amp_cmd = i_rms
    state.theta_cmd = theta
    state.v_dc_ref = min(max(dc_voltage_for(p_ref, state.params), state.params.v_dc_min),
                         state.params.v_dc_max)
    state.faulted = False
    state.fault_reason = ""
    state.p_model = p_ref
    state.q_model = v_rms * i_rms * math.sin(theta)


def outer_update(p_meas: float, q_meas: float, v_dc_meas: float, p_ref: float,
                 q_ref: float, state: OuterLoopState, v_rms: float) -> tuple[float, float]:
    """One outer-rate update; returns ``(i_amp_cmd, theta_cmd)``.

    Measurements are expected to be the low-pass filtered values. The P and
    Q trims compare them with the setpoints passed through a matching
    first-order lag, so a setpoint step does not look like a tracking error
    while the measurement filter catches up. A non-finite measurement
    latches a fault and commands zero current.
    """
    if state.faulted:
        return 0.0, 0.0
    if not all(math.isfinite(x) for x in (p_meas, q_meas, v_dc_meas, v_rms)):
        state.faulted = True
        state.fault_reason = "non-finite measurement"
        state.i_amp_cmd = 0.0
        state.theta_cmd = 0.0
        return 0.0, 0.0
    prm = state.params
    i_ff, theta_ff = reference_amplitude(p_ref, q_ref, v_rms)
    a = state.model_pole
    state.p_model = p_ref + a * (state.p_model - p_ref)
    state.q_model = q_ref + a * (state.q_model - q_ref)
    state.v_dc_ref = pi_step(state.p_loop, state.p_model - p_meas,
                             ff=dc_voltage_for(state.p_model, prm))
    state.i_amp_cmd = pi_step(state.v_loop, state.v_dc_ref - v_dc_meas, ff=i_ff)
    state.theta_cmd = pi_step(state.q_loop, state.q_model - q_meas, ff=theta_ff)
    return state.i_amp_cmd, state.theta_cmd
