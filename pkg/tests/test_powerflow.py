import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import root

from evhil.errors import ConfigError, DivergenceError, ParameterError, ScenarioError, TopologyError
from evhil.grid.feeder import Bus, FeederModel, format_feeder, parse_feeder, read_feeder, write_feeder
from evhil.grid.powerflow import load_vector, node_voltage_rms, solve_power_flow
from evhil.grid.profiles import load_vector_at

atol = 1e-8


def pu_feeder(layout):
    """``layout`` rows (parent_index, r, x, tap); 1000 V / 1 MVA makes ohms equal per-unit."""
    buses = [Bus("b0", None, 1000.0, kind="slack")]
    for k, (par, r, x, tap) in enumerate(layout, 1):
        buses.append(Bus(f"b{k}", f"b{par}", 1000.0, r, x, tap))
    return FeederModel(buses, 1.0)


def newton_oracle(layout, s_pu):
    """Direct nonlinear solve of nodal current balance with scipy.optimize.root."""
    n = len(layout)
    z = [complex(r, x) for _, r, x, _ in layout]
    tap = [t for *_, t in layout]
    par = [p for p, *_ in layout]

    def residual(xv):
        v = np.concatenate([[1.0 + 0j], xv[:n] + 1j * xv[n:]])
        j = [(v[par[k]] / tap[k] - v[k + 1]) / z[k] for k in range(n)]
        out = []
        for k in range(n):
            r = j[k] - np.conj(s_pu[k] / v[k + 1])
            for c in range(n):
                if par[c] == k + 1:
                    r -= j[c] / tap[c]
            out.append(r)
        out = np.array(out)
        return np.concatenate([out.real, out.imag])

    sol = root(residual, np.concatenate([np.ones(n), np.zeros(n)]), method="hybr", tol=1e-13)
    assert np.max(np.abs(residual(sol.x))) < 1e-12
    return sol.x[:n] + 1j * sol.x[n:]


def test_default_feeder_counts(feeder):
    assert feeder.is_tree()
    assert feeder.count("primary") == 37
    assert feeder.n_transformers == 10
    assert len(feeder.end_nodes) == 320
    assert feeder.count("house") == feeder.count("ev") == 160
    assert feeder.charger in feeder.end_nodes


def test_every_bus_reaches_slack(feeder):
    for b in feeder.buses:
        path = feeder.path_to_slack(b.name)
        assert path[-1] == feeder.slack
        assert len(path) == len(set(path))


def test_feeder_file_round_trip(feeder, tmp_path):
    p = tmp_path / "f.txt"
    write_feeder(feeder, p, "copy")
    again = read_feeder(p)
    assert format_feeder(again) == format_feeder(feeder)
    assert again.charger == feeder.charger


@pytest.mark.parametrize("text", [
    "a - 1000 0 0 1 slack - -\nb c 1000 1 1 1 primary - -\n",          # unknown parent
    "a - 1000 0 0 1 slack - -\nb - 1000 1 1 1 slack - -\n",            # two slacks
    "a - 1000 0 0 1 slack - -\nb c 1000 1 1 1 primary - -\nc b 1000 1 1 1 primary - -\n",
    "a - 1000 0 0 1 slack - -\nb a 1000 -1 1 1 primary - -\n",         # negative R
    "a - 1000 0 0 1 slack - -\nb a 1000 1 1 0 primary - -\n",          # zero tap
])
def test_bad_topology_rejected(text):
    with pytest.raises(TopologyError):
        parse_feeder(text)


def test_malformed_table_rejected():
    with pytest.raises(ConfigError):
        parse_feeder("a - 1000 0 0 1 slack\n")
    with pytest.raises(ConfigError):
        parse_feeder("@colour blue\n")


def test_zero_load_is_flat(feeder):
    sol = solve_power_flow(feeder, {})
    assert np.all(sol.v == 1.0)
    assert sol.losses_w == 0.0 and sol.losses_var == 0.0
    for name, (_, _, kind) in feeder.end_nodes.items():
        assert node_voltage_rms(sol, name) == 240.0


def test_two_bus_closed_form():
    m = pu_feeder([(0, 0.01, 0.01, 1.0)])
    s = 0.1 + 0.0j
    sol = solve_power_flow(m, {"b1": s * 1e6})
    z = 0.01 + 0.01j
    b = 1 - 2 * (s.real * z.real + s.imag * z.imag)
    u = (b + math.sqrt(b * b - 4 * abs(z) ** 2 * abs(s) ** 2)) / 2
    v2 = 1 / (1 + z * s.conjugate() / u)
    assert abs(sol.voltage("b1") - v2) <= atol


trees = st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.tuples(*[st.integers(0, k) for k in range(n)]),
    st.lists(st.tuples(st.floats(0.001, 0.03), st.floats(0.001, 0.05), st.floats(0.95, 1.05)),
             min_size=n, max_size=n),
    st.lists(st.tuples(st.floats(0.0, 0.3), st.floats(-0.05, 0.15)), min_size=n, max_size=n)))


@given(trees)
def test_sweep_matches_newton_on_small_feeders(case):
    parents, branches, loads = case
    layout = [(p, r, x, t) for p, (r, x, t) in zip(parents, branches)]
    s_pu = np.array([complex(p, q) for p, q in loads])
    m = pu_feeder(layout)
    sol = solve_power_flow(m, {f"b{k + 1}": s * 1e6 for k, s in enumerate(s_pu)})
    v_ref = newton_oracle(layout, s_pu)
    got = np.array([sol.voltage(f"b{k + 1}") for k in range(len(layout))])
    assert np.max(np.abs(got - v_ref)) <= atol
    assert sol.balance_residual() <= 1e-6 or abs(sol.slack_power) < 1e-3


def test_power_balance_at_peak(feeder, profiles):
    loads = load_vector_at(profiles, feeder, 2976.0)
    loads[feeder.arrays()["pos"][feeder.charger]] += 10_000.0
    sol = solve_power_flow(feeder, loads)
    assert sol.balance_residual() <= 1e-6
    assert sol.mismatch <= 1e-8
    assert node_voltage_rms(sol, feeder.charger) == pytest.approx(226.0, abs=1.5)


def test_monotone_loading(feeder, profiles):
    base = load_vector_at(profiles, feeder, 2976.0)
    base[feeder.arrays()["pos"][feeder.charger]] += 10_000.0
    volts = [node_voltage_rms(solve_power_flow(feeder, k * base), feeder.charger)
             for k in np.linspace(0.05, 1.2, 12)]
    assert all(a > b for a, b in zip(volts, volts[1:]))
    assert volts[-1] < 240.0


def test_voltage_falls_along_every_path(feeder, profiles):
    sol = solve_power_flow(feeder, load_vector_at(profiles, feeder, 2976.0))
    for name in feeder.end_nodes:
        path = feeder.path_to_slack(name)[::-1]
        mags = [abs(sol.voltage(n)) for n in path]
        assert all(a >= b - 1e-12 for a, b in zip(mags, mags[1:]))


def test_overload_diverges(feeder):
    with pytest.raises(DivergenceError) as ei:
        solve_power_flow(feeder, {feeder.charger: 5e6})
    assert ei.value.iterations >= 1


def test_load_vector_validation(feeder):
    with pytest.raises(ParameterError):
        load_vector(feeder, {"nope": 1.0})
    with pytest.raises(ParameterError):
        load_vector(feeder, np.zeros(3))
    with pytest.raises(ParameterError):
        solve_power_flow(feeder, {feeder.charger: math.nan})


def test_node_voltage_errors(feeder):
    sol = solve_power_flow(feeder, {})
    with pytest.raises(ScenarioError):
        node_voltage_rms(sol, "missing")
    sol.converged = False
    with pytest.raises(DivergenceError):
        node_voltage_rms(sol, feeder.charger)
