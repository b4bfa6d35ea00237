"""Scenario execution: stiff-source transients and feeder co-simulation.

Grid runs use a one-step staggered exchange at the macro step: the power
flow at step ``k`` sees the charger output reported at step ``k - 1``; the
charger then advances one macro step against the node voltage of step
``k``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aimd import DECREASE, HOLD, INCREASE, AimdState, aimd_tick
from .charger import EmtCharger, EnvelopeCharger, FastLog, charger_macro_step
from .config import ScenarioConfig
from .errors import ConfigError, DivergenceError, ScenarioError
from .grid.feeder import FeederModel, build_default_feeder, read_feeder
from .grid.powerflow import node_voltage_rms, solve_power_flow
from .grid.profiles import (LoadProfileSet, ProfileParams, default_profile_params_path,
                            load_vector_at, read_profile_params, read_profiles,
                            synthesize_profiles)

SLOW_COLUMNS = ("t_s", "node_vrms_V", "p_cmd_W", "p_meas_W", "q_meas_VAR", "v_th_V",
                "aimd_branch")


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else format(x, ".10g")


@dataclass
class SlowLog:
    """Per-macro-step records of a grid run."""

    t: list = field(default_factory=list)
    v: list = field(default_factory=list)
    p_cmd: list = field(default_factory=list)
    p: list = field(default_factory=list)
    q: list = field(default_factory=list)
    v_th: list = field(default_factory=list)
    branch: list = field(default_factory=list)
    injected: list = field(default_factory=list)   # (P, Q) handed to the power flow

    COLUMNS = SLOW_COLUMNS

    def rows(self):
        return zip(self.t, self.v, self.p_cmd, self.p, self.q, self.v_th, self.branch)

    def __len__(self):
        return len(self.t)


def write_csv(log, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(log.COLUMNS)
        for row in log.rows():
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    return path


def read_csv(path: str | Path) -> dict[str, list]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        cols = {h: [] for h in header}
        for row in r:
            for h, c in zip(header, row):
                try:
                    cols[h].append(float(c))
                except ValueError:
                    cols[h].append(c)
    return cols


# -- transient ---------------------------------------------------------------

@dataclass
class TransientResult:
    log: FastLog
    p_ref: float
    q_ref: float
    p_final: float
    q_final: float


def run_transient(cfg: ScenarioConfig) -> TransientResult:
    """Pre-roll at the initial setpoint, step at t = 0, run ``cfg.duration`` more."""
    if cfg.fidelity != "emt":
        raise ConfigError("transient runs need emt fidelity")
    tr = cfg.transient
    prm = cfg.converter
    charger = EmtCharger(prm, cfg.outer, cfg.controller)
    charger.initialize(tr.p_before, tr.q_before, prm.v_grid_rms, t0=-tr.preroll)
    log = FastLog()
    n_pre = int(round(tr.preroll * prm.f_sw))
    n_post = int(round(cfg.duration * prm.f_sw))
    full = FastLog()
    charger.run(n_pre, prm.v_grid_rms, full)
    charger.set_reference(tr.p_after, tr.q_after)
    p, q = charger.run(n_post, prm.v_grid_rms, full, tail=charger.meter.n)
    step = tr.log_every
    for name in ("t", "v_s", "i_s", "v_dc", "m", "p", "q"):
        setattr(log, name, getattr(full, name)[::step])
    return TransientResult(log, tr.p_after, tr.q_after, p, q)


# -- grid ----------------------------------------------------------------------

@dataclass
class GridResult:
    log: SlowLog
    feeder: FeederModel
    node: str

    @property
    def v_min(self) -> float:
        return float(np.min(self.log.v))

    @property
    def p_mean(self) -> float:
        return float(np.mean(self.log.p))


def load_grid_inputs(cfg: ScenarioConfig) -> tuple[FeederModel, LoadProfileSet]:
    g = cfg.grid
    model = read_feeder(g.feeder) if g.feeder else build_default_feeder()
    if model.charger is None:
        raise ConfigError("feeder file does not name a charger node (@charger)")
    if g.profiles:
        prof = read_profiles(g.profiles)
    else:
        params = read_profile_params(g.profile_params or default_profile_params_path())
        changes = {}
        try:
            if g.seed:
                changes["seed"] = int(g.seed)
            if g.load_scale:
                changes["load_scale"] = float(g.load_scale)
        except ValueError as exc:
            raise ConfigError(f"[grid] {exc}") from None
        if changes:
            params = ProfileParams(**{**params.__dict__, **changes})
        prof = synthesize_profiles(model, params)
    prof.bind(model)
    return model, prof


def run_grid(cfg: ScenarioConfig, model: FeederModel | None = None,
             profiles: LoadProfileSet | None = None, progress=None) -> GridResult:
    """Feeder co-simulation at ``cfg.grid.dt_macro`` steps."""
    if model is None or profiles is None:
        model, profiles = load_grid_inputs(cfg)
    dt = cfg.grid.dt_macro
    n = int(round(cfg.duration / dt))
    if n < 1:
        raise ConfigError("duration shorter than one macro step")
    if (n - 1) * dt > profiles.duration + 1e-9:
        raise ScenarioError(f"profiles cover {profiles.duration:g} s, "
                            f"scenario needs {(n - 1) * dt:g} s")
    node = model.charger
    k_node = model.arrays()["pos"][node]
    prm = cfg.converter
    aimd = cfg.aimd
    p_init = float(cfg.grid.p_init) if cfg.grid.p_init else aimd.p_max
    q_ref = cfg.grid.q_ref
    state = AimdState.start(aimd, p_init) if cfg.aimd_enabled else None
    p_cmd = state.p_cmd if state else p_init

    log = SlowLog()
    p_out, q_out = p_cmd, q_ref
    charger = None
    v_prev = None
    for k in range(n):
        t = k * dt
        loads = load_vector_at(profiles, model, t)
        # meter convention: Q > 0 for leading current, i.e. injected VAR
        loads[k_node] += complex(p_out, -q_out)
        try:
            sol = solve_power_flow(model, loads, v_init=v_prev)
        except DivergenceError as exc:
            exc.t = t
            exc.args = (f"grid collapse at t={t:g} s: {exc.args[0]}",)
            raise
        v_prev = sol.v
        v_rms = node_voltage_rms(sol, node)
        if charger is None:
            charger = (EmtCharger(prm, cfg.outer, cfg.controller) if cfg.fidelity == "emt"
                       else EnvelopeCharger(prm))
            charger.initialize(p_out, q_out, v_rms, t0=0.0)
        log.injected.append((p_out, q_out))
        if state is not None:
            p_cmd, branch = aimd_tick(state, v_rms, t)
            v_th = state.v_th if state.v_th is not None else float("nan")
        else:
            branch, v_th = HOLD, float("nan")
        p_out, q_out = charger_macro_step(charger, v_rms, p_cmd, q_ref, dt)
        log.t.append(t)
        log.v.append(v_rms)
        log.p_cmd.append(p_cmd)
        log.p.append(p_out)
        log.q.append(q_out)
        log.v_th.append(v_th)
        log.branch.append(branch)
        if progress is not None:
            progress(k, n)
    return GridResult(log, model, node)


def sawtooth_violations(log: SlowLog, cfg: ScenarioConfig) -> list[str]:
    """Check every AIMD change against ``+alpha`` / ``x beta`` (clamps excepted)."""
    a = cfg.aimd
    bad = []
    prev = None
    for t, p, b in zip(log.t, log.p_cmd, log.branch):
        if prev is not None:
            if b == INCREASE:
                want = min(prev + a.alpha, a.p_max)
            elif b == DECREASE:
                want = max(prev * a.beta, a.p_min)
            else:
                want = prev
            if p != want:
                bad.append(f"t={t:g}: {prev} -> {p} on branch {b}")
        prev = p
    return bad
