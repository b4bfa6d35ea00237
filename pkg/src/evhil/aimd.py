"""Decentralized AIMD charging-power control with a moving-minimum voltage threshold.

Every ``t_update`` seconds the threshold becomes the lowest voltage seen over
the trailing window. Every ``t_algo`` seconds the command grows by ``alpha``
if the present voltage is strictly above the threshold and is multiplied by
``beta`` otherwise.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ParameterError, SequencingError, ThresholdUnavailable

INCREASE = "+"
DECREASE = "×"
HOLD = "hold"


@dataclass(frozen=True)
class AimdConfig:
    t_update: float = 60.0
    t_algo: float = 10.0
    alpha: float = 100.0
    beta: float = 0.5
    p_max: float = 10_000.0
    p_min: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ParameterError("beta must lie in (0, 1)")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if not (self.t_algo > 0 and self.t_update > 0):
            raise ParameterError("periods must be positive")
        ratio = self.t_update / self.t_algo
        if abs(ratio - round(ratio)) > 1e-9:
            raise ParameterError("t_update must be an integer multiple of t_algo")
        if not self.p_min < self.p_max:
            raise ParameterError("p_min must be below p_max")


@dataclass
class AimdState:
    config: AimdConfig
    p_cmd: float
    window: deque = field(default_factory=deque)
    v_th: float | None = None
    last_update_t: float | None = None
    last_algo_t: float | None = None
    last_t: float | None = None
    t0: float = 0.0

    @classmethod
    def start(cls, config: AimdConfig | None = None, p_cmd: float | None = None,
              t0: float = 0.0) -> "AimdState":
        config = config or AimdConfig()
        p = config.p_max if p_cmd is None else p_cmd
        return cls(config, min(max(p, config.p_min), config.p_max), t0=t0)


def _on_period(t: float, t0: float, period: float) -> bool:
    k = (t - t0) / period
    return abs(k - round(k)) < 1e-9 * max(1.0, abs(k))


def record_voltage(state: AimdState, v_rms: float, t: float) -> AimdState:
    """Append a sample and drop everything older than ``t - t_update``."""
    if state.last_t is not None and t < state.last_t:
        raise SequencingError(f"time went backwards: {t} < {state.last_t}")
    if not math.isfinite(v_rms):
        raise ParameterError(f"non-finite voltage sample at t={t}")
    state.window.append((t, v_rms))
    state.last_t = t
    horizon = t - state.config.t_update - 1e-9
    w = state.window
    while w and w[0][0] < horizon:
        w.popleft()
    return state


def update_threshold(state: AimdState, t: float) -> AimdState:
    """Set ``v_th`` to the window minimum; at most once per instant."""
    if not state.window:
        raise ThresholdUnavailable(f"no voltage samples at t={t}")
    if state.last_update_t == t:
        return state
    state.v_th = min(v for _, v in state.window)
    state.last_update_t = t
    return state


def aimd_decide(p: float, v_now: float, v_th: float, cfg: AimdConfig) -> tuple[float, str]:
    if v_now > v_th:
        p, branch = p + cfg.alpha, INCREASE
    else:
        p, branch = p * cfg.beta, DECREASE
    return min(max(p, cfg.p_min), cfg.p_max), branch


def aimd_step(state: AimdState, v_now: float, t: float) -> float:
    """One algorithm decision; holds the command while no threshold exists."""
    if state.v_th is None:
        return state.p_cmd
    state.p_cmd, _ = aimd_decide(state.p_cmd, v_now, state.v_th, state.config)
    state.last_algo_t = t
    return state.p_cmd


def aimd_tick(state: AimdState, v_rms: float, t: float) -> tuple[float, str]:
    """Feed one meter sample and run whatever algorithm actions fall on ``t``.

    Order within an instant: record, threshold update (at ``k * t_update``,
    ``k >= 1``), then the decision (at ``k * t_algo``). Returns the command and
    the branch taken, ``hold`` when no decision was made.
    """
    cfg = state.config
    record_voltage(state, v_rms, t)
    if t > state.t0 and _on_period(t, state.t0, cfg.t_update):
        update_threshold(state, t)
    if t > state.t0 and _on_period(t, state.t0, cfg.t_algo) and state.v_th is not None:
        state.p_cmd, branch = aimd_decide(state.p_cmd, v_rms, state.v_th, cfg)
        state.last_algo_t = t
        return state.p_cmd, branch
    return state.p_cmd, HOLD
