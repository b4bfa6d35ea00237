"""Charger models at two fidelities sharing one macro-step interface.

``EmtCharger`` runs the average converter model together with the complete
digital controller at the switching rate (one control update per RK4 step).
``EnvelopeCharger`` replaces all of that with a first-order lag from
commanded to delivered power, for long grid runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .converter import SQRT2, ConverterParams, ConverterState
from .errors import ControllerFault, IntegrationError, ParameterError
from .measurement import QuadratureDelayLine, RmsMeter, lowpass, reference_amplitude
from .outer import OuterGains, initialize_at, make_outer_loops, outer_update
from .transfer import DiscreteTF2, discretize, pr_synthesize


@dataclass(frozen=True)
class PrDesign:
    k_p: float = 1.0
    k_i: float = 500.0
    omega_c: float = 2.0 * math.pi
    gain: float = -0.1
    method: str = "zoh"


def design_current_controller(params: ConverterParams, pr: PrDesign | None = None) -> DiscreteTF2:
    pr = pr or PrDesign()
    g = pr_synthesize(pr.k_p, pr.k_i, pr.omega_c, params.omega0, pr.gain)
    return discretize(g, params.f_sw, pr.method)


@dataclass
class FastLog:
    """Per-step columns of an EMT run."""

    t: list = field(default_factory=list)
    v_s: list = field(default_factory=list)
    i_s: list = field(default_factory=list)
    v_dc: list = field(default_factory=list)
    m: list = field(default_factory=list)
    p: list = field(default_factory=list)
    q: list = field(default_factory=list)

    COLUMNS = ("t_s", "v_s_V", "i_s_A", "v_dc_V", "m", "p_W", "q_VAR")

    def rows(self):
        return zip(self.t, self.v_s, self.i_s, self.v_dc, self.m, self.p, self.q)

    def __len__(self):
        return len(self.t)


class EmtCharger:
    """Waveform-level charger: plant + PR inner loop + P-Q metering + outer PIs.

    Control runs once per converter step. The PR output is scaled by
    ``v_dc_nom / v_dc`` before becoming the modulation index, which keeps the
    inner loop gain at its design value while the DC link moves over
    340-800 V.
    """

    def __init__(self, params: ConverterParams | None = None, gains: OuterGains | None = None,
                 pr: PrDesign | None = None):
        self.params = p = params or ConverterParams()
        self.gains = gains or OuterGains()
        self.pr = design_current_controller(p, pr)
        self.lpf_p = lowpass(p.f_sw)
        self.lpf_q = lowpass(p.f_sw)
        self.lpf_v = lowpass(p.f_sw)
        self.dl_v = QuadratureDelayLine(p.f_sw, p.f0)
        self.dl_i = QuadratureDelayLine(p.f_sw, p.f0)
        self.meter = RmsMeter(p.f_sw, p.f0)
        self.outer = make_outer_loops(p, self.gains)
        ratio = p.f_sw / self.gains.rate_hz
        if abs(ratio - round(ratio)) > 1e-9:
            raise ParameterError("outer rate must divide the switching rate")
        self.outer_every = int(round(ratio))
        self.sat_limit = self.meter.n
        self.state = ConverterState()
        self.t0 = 0.0
        self.k = 0
        self.p_ref = 0.0
        self.q_ref = 0.0
        self.p_f = 0.0
        self.q_f = 0.0
        self.v_f = 0.0
        self.m = 0.0
        self.sat_run = 0
        self.sat_steps = 0

    @property
    def t(self) -> float:
        return self.t0 + self.k * self.params.dt

    def initialize(self, p_ref: float, q_ref: float, v_rms: float | None = None,
                   t0: float = 0.0) -> None:
        """Start at the steady operating point of a setpoint."""
        p = self.params
        v_rms = p.v_grid_rms if v_rms is None else v_rms
        i_rms, theta = reference_amplitude(p_ref, q_ref, v_rms)
        v_dc = math.sqrt(max(p_ref - i_rms * i_rms * p.r_l, 0.0) * p.r_dc)
        self.t0 = t0
        self.k = 0
        w0, dt = p.omega0, p.dt
        self.state = ConverterState(SQRT2 * i_rms * math.sin(w0 * t0 + theta), v_dc, t0)
        n = self.dl_v.n
        past = [t0 - (n - j) * dt for j in range(n)]
        self.dl_v.fill([SQRT2 * v_rms * math.sin(w0 * tt) for tt in past])
        self.dl_i.fill([SQRT2 * i_rms * math.sin(w0 * tt + theta) for tt in past])
        self.meter.preset(v_rms)
        q_meas = v_rms * i_rms * math.sin(theta)
        self.lpf_p.preload(p_ref)
        self.lpf_q.preload(q_meas)
        self.lpf_v.preload(v_dc)
        self.p_f, self.q_f, self.v_f = p_ref, q_meas, v_dc
        self.pr.reset()
        initialize_at(self.outer, p_ref, q_ref, v_rms)
        self.p_ref, self.q_ref = p_ref, q_ref
        self.sat_run = 0
        self.sat_steps = 0

    def set_reference(self, p_ref: float, q_ref: float) -> None:
        self.p_ref, self.q_ref = p_ref, q_ref

    def run(self, n_steps: int, v_rms: float, log: FastLog | None = None,
            tail: int = 0) -> tuple[float, float]:
        """Advance ``n_steps`` converter steps against a stiff sinusoid of RMS ``v_rms``.

        Returns the mean filtered (P, Q) over the last ``tail`` steps (or the
        final filtered values when ``tail`` is 0).
        """
        p = self.params
        dt = p.dt
        h = 0.5 * dt
        w = dt / 6.0
        w0 = p.omega0
        inv_l = 1.0 / p.l_s
        inv_c = 1.0 / p.c_dc
        r_l = p.r_l
        g_dc = 1.0 / p.r_dc
        v_nom = p.v_dc_nom
        vp = SQRT2 * v_rms
        sin = math.sin
        t0 = self.t0
        k = self.k

        pr = self.pr
        b0, b1, b2 = pr.num
        _, a1, a2 = pr.den
        z1, z2 = pr.z1, pr.z2
        lp_b0, lp_b1, _ = self.lpf_p.num
        lp_a1 = self.lpf_p.den[1]
        zp, zq, zv = self.lpf_p.z1, self.lpf_q.z1, self.lpf_v.z1
        dlv, dli = self.dl_v, self.dl_i
        vbuf, ibuf, di_n = dlv.buf, dli.buf, dlv.n
        didx = dlv.idx
        meter = self.meter
        outer = self.outer
        every = self.outer_every
        i_amp = outer.i_amp_cmd * SQRT2
        theta = outer.theta_cmd
        i_s, v_dc = self.state.i_s, self.state.v_dc
        p_f, q_f, v_f = self.p_f, self.q_f, self.v_f
        sat_run, sat_steps = self.sat_run, self.sat_steps
        m = self.m
        p_ref, q_ref = self.p_ref, self.q_ref
        acc_p = acc_q = 0.0
        start_tail = n_steps - tail
        if log is not None:
            lt, lv, li, ld, lm, lp, lq = (log.t, log.v_s, log.i_s, log.v_dc, log.m, log.p, log.q)

        t = t0 + k * dt
        vs = vp * sin(w0 * t)
        for n in range(n_steps):
            # measurement chain
            meter.push(vs)
            vb = vbuf[didx]
            ib = ibuf[didx]
            vbuf[didx] = vs
            ibuf[didx] = i_s
            didx += 1
            if didx == di_n:
                didx = 0
            praw = 0.5 * (vs * i_s + vb * ib)
            qraw = 0.5 * (vs * ib - vb * i_s)
            p_f = lp_b0 * praw + zp
            zp = lp_b1 * praw - lp_a1 * p_f
            q_f = lp_b0 * qraw + zq
            zq = lp_b1 * qraw - lp_a1 * q_f
            v_f = lp_b0 * v_dc + zv
            zv = lp_b1 * v_dc - lp_a1 * v_f

            if k % every == 0:
                v_meas = meter.value if meter.value is not None else v_rms
                ia, theta = outer_update(p_f, q_f, v_f, p_ref, q_ref, outer, v_meas)
                if outer.faulted:
                    self._store(k, i_s, v_dc, t, z1, z2, zp, zq, zv, didx, p_f, q_f, v_f, m,
                                sat_run, sat_steps)
                    raise ControllerFault(f"outer loop fault: {outer.fault_reason}", t=t,
                                          context={"p_f": p_f, "q_f": q_f, "v_dc_f": v_f})
                i_amp = SQRT2 * ia

            # PR current controller (DF-II transposed)
            e = i_amp * sin(w0 * t + theta) - i_s
            y = b0 * e + z1
            z1 = b1 * e - a1 * y + z2
            z2 = b2 * e - a2 * y
            m = y * v_nom / v_dc if v_dc > 1.0 else y * v_nom
            if m > 1.0 or m < -1.0:
                m = 1.0 if m > 0 else -1.0
                sat_run += 1
                sat_steps += 1
                if sat_run > self.sat_limit:
                    self._store(k, i_s, v_dc, t, z1, z2, zp, zq, zv, didx, p_f, q_f, v_f, m,
                                sat_run, sat_steps)
                    raise ControllerFault("modulation saturated for more than one grid cycle",
                                          t=t, context={"v_dc": v_dc, "i_s": i_s, "v_rms": v_rms})
            else:
                sat_run = 0

            if log is not None:
                lt.append(t)
                lv.append(vs)
                li.append(i_s)
                ld.append(v_dc)
                lm.append(m)
                lp.append(p_f)
                lq.append(q_f)
            if n >= start_tail:
                acc_p += p_f
                acc_q += q_f

            # RK4 on the average model, m held over the step
            vh = vp * sin(w0 * (t + h))
            k += 1
            t = t0 + k * dt
            vn = vp * sin(w0 * t)
            mv = m * v_dc
            di1 = (vs - r_l * i_s - mv) * inv_l
            dv1 = (m * i_s - v_dc * g_dc) * inv_c
            i2 = i_s + h * di1
            v2 = v_dc + h * dv1
            di2 = (vh - r_l * i2 - m * v2) * inv_l
            dv2 = (m * i2 - v2 * g_dc) * inv_c
            i3 = i_s + h * di2
            v3 = v_dc + h * dv2
            di3 = (vh - r_l * i3 - m * v3) * inv_l
            dv3 = (m * i3 - v3 * g_dc) * inv_c
            i4 = i_s + dt * di3
            v4 = v_dc + dt * dv3
            di4 = (vn - r_l * i4 - m * v4) * inv_l
            dv4 = (m * i4 - v4 * g_dc) * inv_c
            i_s += w * (di1 + 2.0 * di2 + 2.0 * di3 + di4)
            v_dc += w * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
            if v_dc < 0.0:
                v_dc = 0.0
            vs = vn

        self._store(k, i_s, v_dc, t, z1, z2, zp, zq, zv, didx, p_f, q_f, v_f, m,
                    sat_run, sat_steps)
        if not (math.isfinite(i_s) and math.isfinite(v_dc)):
            raise IntegrationError(f"non-finite converter state at t={t}")
        if tail:
            return acc_p / tail, acc_q / tail
        return p_f, q_f

    def _store(self, k, i_s, v_dc, t, z1, z2, zp, zq, zv, didx, p_f, q_f, v_f, m,
               sat_run, sat_steps):
        self.k = k
        self.state = ConverterState(i_s, v_dc, t, sat_run > 0)
        self.pr.z1, self.pr.z2 = z1, z2
        self.lpf_p.z1, self.lpf_q.z1, self.lpf_v.z1 = zp, zq, zv
        self.dl_v.idx = self.dl_i.idx = didx
        self.p_f, self.q_f, self.v_f = p_f, q_f, v_f
        self.m = m
        self.sat_run, self.sat_steps = sat_run, sat_steps

    def macro_step(self, v_rms: float, p_ref: float, q_ref: float, duration: float = 1.0,
                   log: FastLog | None = None) -> tuple[float, float]:
        """Run ``duration`` seconds and return cycle-averaged filtered (P, Q)."""
        n = int(round(duration * self.params.f_sw))
        if n <= 0:
            raise ParameterError("macro step shorter than one converter step")
        self.set_reference(p_ref, q_ref)
        return self.run(n, v_rms, log=log, tail=min(self.meter.n, n))


class EnvelopeCharger:
    """First-order lag from commanded to delivered power.

    Delivered real power cannot fall below what the DC load draws at the
    minimum link voltage, matching the EMT model's behaviour at light load.
    """

    def __init__(self, params: ConverterParams | None = None, tau: float = 0.2):
        if tau <= 0:
            raise ParameterError("tau must be positive")
        self.params = params or ConverterParams()
        self.tau = tau
        self.p = 0.0
        self.q = 0.0

    def initialize(self, p_ref: float, q_ref: float, v_rms: float | None = None,
                   t0: float = 0.0) -> None:
        self.p = p_ref
        self.q = q_ref

    def power_floor(self, v_rms: float) -> float:
        prm = self.params
        p_dc = prm.v_dc_min ** 2 / prm.r_dc
        return p_dc + (p_dc / v_rms) ** 2 * prm.r_l if v_rms > 0 else p_dc

    def macro_step(self, v_rms: float, p_ref: float, q_ref: float, duration: float = 1.0,
                   log=None) -> tuple[float, float]:
        if duration <= 0:
            raise ParameterError("duration must be positive")
        target = max(p_ref, self.power_floor(v_rms))
        a = math.exp(-duration / self.tau)
        self.p = target + (self.p - target) * a
        self.q = q_ref + (self.q - q_ref) * a
        return self.p, self.q


def make_charger(fidelity: str, params: ConverterParams | None = None, **kw):
    if fidelity == "emt":
        return EmtCharger(params, **kw)
    if fidelity == "envelope":
        return EnvelopeCharger(params, **kw)
    raise ParameterError(f"unknown fidelity {fidelity!r}")


def charger_macro_step(charger, node_v_rms: float, p_ref: float, q_ref: float,
                       dt_macro: float = 1.0, log=None) -> tuple[float, float]:
    """Advance either charger model by one co-simulation step; returns (P, Q)."""
    try:
        return charger.macro_step(node_v_rms, p_ref, q_ref, dt_macro, log=log)
    except ControllerFault as exc:
        exc.context.setdefault("node_v_rms", node_v_rms)
        exc.context.setdefault("p_ref", p_ref)
        raise
