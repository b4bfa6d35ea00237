"""Backward-forward sweep power flow for radial feeders.

Each branch is an ideal transformer ``tap:1`` on the parent side followed
by a series impedance, so with ``J`` the child-side branch current::

    V_child = V_parent / tap - Z * J        parent-side current = J / tap

Unrolling both sweeps along the tree gives two products with one sparse
path-factor matrix ``F`` (``F[n, b]`` is the product of ``1/tap`` over the
branches strictly between bus ``n`` and branch ``b``, zero off-path)::

    J = F.T @ I_load        V = V_slack * g - F @ (Z * J)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import DivergenceError, ParameterError, ScenarioError
from .feeder import FeederModel


@dataclass
class PowerFlowSolution:
    names: list
    pos: dict
    v: np.ndarray            # complex per-unit, BFS order
    v_nom: np.ndarray        # nominal volts of each bus
    branch_current: np.ndarray  # child-side current of the branch into each bus, A
    losses_w: float
    losses_var: float
    slack_power: complex     # VA drawn from the slack
    load_power: complex      # VA, sum of the specified loads
    iterations: int
    mismatch: float          # max nodal power mismatch, per-unit
    converged: bool = True

    def balance_residual(self) -> float:
        """|slack - loads - losses| relative to the slack injection."""
        lost = complex(self.losses_w, self.losses_var)
        ref = max(abs(self.slack_power), 1e-12)
        return abs(self.slack_power - self.load_power - lost) / ref

    @property
    def v_volts(self) -> np.ndarray:
        return np.abs(self.v) * self.v_nom

    def voltage(self, node: str) -> complex:
        return self.v[self.pos[node]]


def load_vector(model: FeederModel, loads: Mapping[str, complex] | np.ndarray) -> np.ndarray:
    """Complex load (VA, consumption positive) per bus in solver order."""
    arr = model.arrays()
    n = len(arr["names"])
    if isinstance(loads, np.ndarray):
        if loads.shape != (n,):
            raise ParameterError(f"load vector must have shape ({n},)")
        return loads.astype(complex)
    out = np.zeros(n, dtype=complex)
    pos = arr["pos"]
    for name, s in loads.items():
        if name not in pos:
            raise ParameterError(f"load on unknown bus {name!r}")
        out[pos[name]] += s
    return out


def solve_power_flow(model: FeederModel, loads, slack_pu: complex = 1.0, tol: float = 1e-8,
                     max_iter: int = 50, v_init: np.ndarray | None = None) -> PowerFlowSolution:
    """Constant-power load flow; raises ``DivergenceError`` after ``max_iter`` sweeps."""
    arr = model.arrays()
    s_base = model.base_mva * 1e6
    s_va = load_vector(model, loads)
    if not np.all(np.isfinite(s_va)):
        raise ParameterError("loads must be finite")
    s = s_va / s_base
    s[0] = 0.0
    F, Ft, z, g = arr["F"], arr["Ft"], arr["z"], arr["g"]
    v_flat = slack_pu * g
    v = v_flat.copy() if v_init is None else np.array(v_init, dtype=complex)
    dv = np.inf
    it = 0
    while it < max_iter:
        it += 1
        if np.any(np.abs(v) < 1e-6):
            raise DivergenceError("voltage collapsed to zero", dv, it)
        i_load = np.conj(s / v)
        j = Ft @ i_load
        v_new = v_flat - F @ (z * j)
        dv = float(np.max(np.abs(v_new - v)))
        v = v_new
        if not np.isfinite(dv):
            raise DivergenceError("power flow produced non-finite voltages", dv, it)
        if dv < tol:
            break
    else:
        raise DivergenceError(f"power flow did not converge in {max_iter} iterations "
                              f"(last update {dv:.3e} pu)", dv, it)
    i_load = np.conj(s / v)
    j = Ft @ i_load
    # residual: nodal powers implied by the voltages a further sweep would give
    v_check = v_flat - F @ (z * j)
    mismatch = float(np.max(np.abs(v_check[1:] * np.conj(i_load[1:]) - s[1:]))) \
        if len(s) > 1 else 0.0
    tap, parent = arr["tap"], arr["parent"]
    out_to_children = np.zeros_like(j)
    np.add.at(out_to_children, parent[1:], j[1:] / tap[1:])
    i_base = s_base / arr["v_nom"]
    j2 = np.abs(j) ** 2
    losses = float(np.sum(j2 * z.real)) * s_base
    losses_q = float(np.sum(j2 * z.imag)) * s_base
    slack = complex(v[0] * np.conj(out_to_children[0])) * s_base
    return PowerFlowSolution(arr["names"], arr["pos"], v, arr["v_nom"], np.abs(j) * i_base,
                             losses, losses_q, slack, complex(s_va[1:].sum()), it, mismatch)


def node_voltage_rms(sol: PowerFlowSolution, node: str) -> float:
    """RMS voltage of ``node`` in volts on its own nominal base."""
    if not sol.converged:
        raise DivergenceError("solution did not converge", sol.mismatch, sol.iterations)
    if node not in sol.pos:
        raise ScenarioError(f"unknown node {node!r}")
    k = sol.pos[node]
    return float(abs(sol.v[k]) * sol.v_nom[k])
