"""Average model of the single-phase full-bridge AC/DC stage.

The bridge is replaced by two controlled sources tied together by the
modulation index ``m``: ``v_in = m * v_dc`` on the AC side and
``I_o = m * i_s`` into the DC RC network. ``i_s`` is positive when power
flows from the grid into the charger.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import IntegrationError, ParameterError
from .transfer import ContinuousTF2

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ConverterParams:
    """Electrical constants of the 10 kVA charger front end.

    ``r_l`` and ``v_dc_nom`` are not given for the hardware; the defaults
    (0.05 ohm, 500 V) are reconstructions. 500 V is the DC voltage at which
    the plant model puts the loop crossover at 100 krad/s with the scaled
    PR controller.
    """

    s_rated: float = 10_000.0
    v_grid_rms: float = 240.0
    omega0: float = 2.0 * math.pi * 60.0
    f_sw: float = 72_000.0
    l_s: float = 500e-6
    r_l: float = 0.05
    c_dc: float = 500e-6
    r_dc: float = 60.0
    v_dc_min: float = 340.0
    v_dc_max: float = 800.0
    v_dc_nom: float = 500.0

    def __post_init__(self):
        for name in ("s_rated", "v_grid_rms", "omega0", "f_sw", "l_s", "r_l",
                     "c_dc", "r_dc", "v_dc_min", "v_dc_max", "v_dc_nom"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be positive and finite, got {v!r}")
        if not self.v_dc_min < self.v_dc_nom <= self.v_dc_max:
            raise ParameterError("need v_dc_min < v_dc_nom <= v_dc_max")

    @property
    def dt(self) -> float:
        return 1.0 / self.f_sw

    @property
    def f0(self) -> float:
        return self.omega0 / (2.0 * math.pi)

    @property
    def i_rated(self) -> float:
        """Rated RMS line current at nominal grid voltage (A)."""
        return self.s_rated / self.v_grid_rms

    def with_(self, **changes) -> "ConverterParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ConverterState:
    """Continuous state plus optional energy ledgers (J).

    The three ledgers integrate grid input power, inductor resistive loss and
    DC load power alongside the electrical state, so an energy balance can be
    checked to integrator accuracy.
    """

    i_s: float = 0.0
    v_dc: float = 0.0
    t: float = 0.0
    saturated: bool = False
    e_grid: float = 0.0
    e_rl: float = 0.0
    e_load: float = 0.0

    def stored_energy(self, params: ConverterParams) -> float:
        return 0.5 * params.l_s * self.i_s ** 2 + 0.5 * params.c_dc * self.v_dc ** 2


def grid_voltage(t: float, v_rms: float, omega0: float) -> float:
    """Instantaneous grid voltage ``sqrt(2) * v_rms * sin(omega0 * t)``."""
    if v_rms < 0:
        raise ParameterError("v_rms must be non-negative")
    return SQRT2 * v_rms * math.sin(omega0 * t)


def plant_tf(params: ConverterParams, v_dc_design: float | None = None) -> ContinuousTF2:
    """Current-to-modulation plant ``-V_dc / (R_L + s L_s)`` at a fixed DC voltage."""
    v = params.v_dc_nom if v_dc_design is None else v_dc_design
    if not params.v_dc_min <= v <= params.v_dc_max:
        raise ParameterError(
            f"design DC voltage {v} V outside [{params.v_dc_min}, {params.v_dc_max}] V")
    return ContinuousTF2((0.0, 0.0, -v), (0.0, params.l_s, params.r_l))


def clamp_modulation(m: float) -> tuple[float, bool]:
    if m > 1.0:
        return 1.0, True
    if m < -1.0:
        return -1.0, True
    return m, False


def step_converter(state: ConverterState, m: float, dt: float | None,
                   params: ConverterParams, v_rms: float | None = None) -> ConverterState:
    """Advance the average model by one RK4 step with ``m`` held constant.

    Parameters
    ----------
    state : ConverterState
        State at the start of the step.
    m : float
        Modulation index, clamped to [-1, 1]; ``saturated`` flags a clamp.
    dt : float or None
        Step length in seconds; ``None`` means one switching period.
    params : ConverterParams
    v_rms : float, optional
        RMS of the grid voltage seen during this step (defaults to the
        nominal grid voltage). Pass 0 to short the source.

    Returns
    -------
    ConverterState
        New state at ``t + dt``. The DC voltage is floored at zero.
    """
    if dt is None:
        dt = params.dt
    if not (dt > 0 and math.isfinite(dt)):
        raise IntegrationError(f"invalid step {dt!r}")
    if not (math.isfinite(state.i_s) and math.isfinite(state.v_dc) and math.isfinite(m)):
        raise IntegrationError(f"non-finite state at t={state.t}: {state}")
    m, sat = clamp_modulation(m)
    vp = SQRT2 * (params.v_grid_rms if v_rms is None else v_rms)
    w0 = params.omega0
    inv_l = 1.0 / params.l_s
    inv_c = 1.0 / params.c_dc
    r_l = params.r_l
    g_dc = 1.0 / params.r_dc
    t = state.t

    def f(tt, i, v):
        vs = vp * math.sin(w0 * tt)
        return ((vs - r_l * i - m * v) * inv_l,
                (m * i - v * g_dc) * inv_c,
                vs * i, r_l * i * i, v * v * g_dc)

    i0, v0 = state.i_s, state.v_dc
    h = 0.5 * dt
    k1 = f(t, i0, v0)
    k2 = f(t + h, i0 + h * k1[0], v0 + h * k1[1])
    k3 = f(t + h, i0 + h * k2[0], v0 + h * k2[1])
    k4 = f(t + dt, i0 + dt * k3[0], v0 + dt * k3[1])
    w = dt / 6.0
    d = [w * (a + 2.0 * b + 2.0 * c + e) for a, b, c, e in zip(k1, k2, k3, k4)]
    i1 = i0 + d[0]
    v1 = v0 + d[1]
    if not (math.isfinite(i1) and math.isfinite(v1)):
        raise IntegrationError(f"integration blew up at t={t}")
    return ConverterState(i1, max(v1, 0.0), t + dt, sat,
                          state.e_grid + d[2], state.e_rl + d[3], state.e_load + d[4])


def bridge_powers(state: ConverterState, m: float) -> tuple[float, float]:
    """AC-side ``v_in * i_s`` and DC-side ``v_dc * I_o`` of the lossless bridge."""
    v_in = m * state.v_dc
    i_o = m * state.i_s
    return v_in * state.i_s, state.v_dc * i_o
