"""``evhil`` command line: design report, charger and feeder experiments, power flow, plots.

Exit status: 0 success, 1 configuration error, 2 numerical divergence,
3 controller fault.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, load_config, write_resolved
from .errors import ConfigError, ControllerFault, EvHilError, NumericalError, ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAULT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _ov(over: dict, section: str, key: str, value) -> None:
    if value is not None:
        over.setdefault(section, {})[key] = str(value)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario file ([section] / key = value)")
    p.add_argument("--out", help="output directory (default: ./out)")


def _resolve(args, kind: str | None, over: dict) -> ScenarioConfig:
    _ov(over, "scenario", "out_dir", args.out)
    return load_config(args.config, kind, over)


# -- design -------------------------------------------------------------------

def cmd_design(args) -> int:
    from .converter import plant_tf
    from .plots import plot_bode
    from .transfer import Loop, discretize, freq_response, pr_synthesize, stability_margins

    over: dict = {}
    _ov(over, "controller", "k_p", args.k_p)
    _ov(over, "controller", "k_i", args.k_i)
    _ov(over, "controller", "omega_c", args.omega_c)
    _ov(over, "controller", "gain", args.gain)
    _ov(over, "controller", "method", args.method)
    _ov(over, "converter", "f_sw", args.f_s)
    _ov(over, "converter", "v_dc_nom", args.v_dc)
    _ov(over, "converter", "r_l", args.r_l)
    cfg = _resolve(args, None, over)
    prm, pr = cfg.converter, cfg.controller
    try:
        plant = plant_tf(prm)
        gc = pr_synthesize(pr.k_p, pr.k_i, pr.omega_c, prm.omega0, pr.gain)
        gz = discretize(gc, prm.f_sw, pr.method)
        loop = Loop(gc, plant)
        mg = stability_margins(loop)
    except ParameterError as exc:
        raise ConfigError(f"design parameters rejected: {exc} "
                          f"(k_p={pr.k_p}, k_i={pr.k_i}, omega_c={pr.omega_c}, "
                          f"gain={pr.gain}, f_s={prm.f_sw}, v_dc={prm.v_dc_nom})") from None

    def poly(c):
        return "[" + ", ".join(f"{x:.6g}" for x in c) + "]"

    print(f"plant        G_P(s)  num {poly(plant.num)}  den {poly(plant.den)}")
    print(f"PR (cont.)   G_c(s)  num {poly(gc.num)}  den {poly(gc.den)}")
    print(f"PR ({pr.method}, {prm.f_sw:g} Hz) G_c(z)  num {poly(gz.num)}  den {poly(gz.den)}")
    print(f"|G_c(j w0)|  {abs(gc(1j * prm.omega0)):.6g}")
    gm = "inf" if math.isinf(mg.gain_margin_db) else f"{mg.gain_margin_db:.3f} dB"
    print(f"crossover    {mg.crossover:.6g} rad/s")
    print(f"phase margin {mg.phase_margin_deg:.3f} deg")
    print(f"gain margin  {gm}")

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w = np.logspace(0, 8, 801)
    resp = freq_response(loop, w)
    with open(out / "design_freq_response.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["omega_rad_s", "mag_db", "phase_deg"])
        for om, (m, ph) in zip(w, resp):
            wr.writerow([f"{om:.10g}", f"{m:.10g}", f"{ph:.10g}"])
    plot_bode(w, [r[0] for r in resp], [r[1] for r in resp], out / "design_bode.svg",
              "Current loop G_c(s) G_P(s)")
    write_resolved(cfg, out, "design.config.ini")
    return EXIT_OK


# -- transient ----------------------------------------------------------------

TEST_KINDS = {"0": "transient_zero_step", "1": "transient_test_1", "2": "transient_test_2"}


def cmd_transient(args) -> int:
    from .cosim import read_csv, run_transient, write_csv
    from .plots import plot_transient

    over: dict = {}
    _ov(over, "scenario", "duration", args.duration)
    _ov(over, "transient", "preroll", args.preroll)
    _ov(over, "transient", "log_every", args.log_every)
    kind = TEST_KINDS[args.test] if args.test is not None else None
    cfg = _resolve(args, kind, over)
    t0 = time.perf_counter()
    res = run_transient(cfg)
    out = Path(cfg.out_dir)
    csv_path = write_csv(res.log, out / f"{cfg.kind}.csv")
    plot_transient(read_csv(csv_path), out / f"{cfg.kind}.svg")
    write_resolved(cfg, out, f"{cfg.kind}.config.ini")
    print(f"{cfg.kind}: final filtered P = {res.p_final:.1f} W, Q = {res.q_final:.1f} VAR "
          f"(setpoint {res.p_ref:g} W, {res.q_ref:g} VAR); {time.perf_counter() - t0:.2f} s")
    print(f"wrote {csv_path}")
    return EXIT_OK


# -- grid -----------------------------------------------------------------------

def cmd_grid(args) -> int:
    from .cosim import read_csv, run_grid, write_csv
    from .plots import plot_grid

    over: dict = {}
    kind = None
    if args.aimd is not None:
        kind = "grid_aimd" if args.aimd == "on" else "grid_baseline"
    _ov(over, "scenario", "duration", args.duration)
    _ov(over, "scenario", "fidelity", args.fidelity)
    _ov(over, "grid", "feeder", args.feeder)
    _ov(over, "grid", "profiles", args.profiles)
    _ov(over, "grid", "profile_params", args.profile_params)
    _ov(over, "grid", "seed", args.seed)
    _ov(over, "grid", "load_scale", args.load_scale)
    _ov(over, "grid", "dt_macro", args.dt_macro)
    cfg = _resolve(args, kind, over)
    if not cfg.kind.startswith("grid"):
        raise ConfigError(f"grid command cannot run scenario kind {cfg.kind!r}")
    t0 = time.perf_counter()
    res = run_grid(cfg)
    out = Path(cfg.out_dir)
    csv_path = write_csv(res.log, out / f"{cfg.kind}.csv")
    plot_grid(read_csv(csv_path), out / f"{cfg.kind}.svg")
    write_resolved(cfg, out, f"{cfg.kind}.config.ini")
    print(f"{cfg.kind} ({cfg.fidelity}, {cfg.duration:g} s): charger node {res.node} "
          f"min {res.v_min:.2f} V, mean power {res.p_mean / 1e3:.3f} kW; "
          f"{time.perf_counter() - t0:.1f} s wall")
    print(f"wrote {csv_path}")
    return EXIT_OK


# -- powerflow ------------------------------------------------------------------

def read_load_table(path: str) -> dict[str, complex]:
    """``node  P_W  Q_VAR`` per line (``#`` comments)."""
    loads = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read loads file: {exc}") from None
    for n, raw in enumerate(lines, 1):
        s = raw.split("#", 1)[0].split()
        if not s:
            continue
        if len(s) != 3:
            raise ConfigError(f"{path}:{n}: expected 'node P_W Q_VAR'")
        try:
            loads[s[0]] = loads.get(s[0], 0) + complex(float(s[1]), float(s[2]))
        except ValueError as exc:
            raise ConfigError(f"{path}:{n}: {exc}") from None
    return loads


def cmd_powerflow(args) -> int:
    from .cosim import load_grid_inputs
    from .grid.feeder import read_feeder
    from .grid.powerflow import load_vector, solve_power_flow
    from .grid.profiles import default_profile_params_path, load_vector_at, read_profile_params

    over: dict = {}
    _ov(over, "grid", "feeder", args.net)
    _ov(over, "grid", "profile_params", args.profile_params)
    cfg = _resolve(args, "grid_baseline", over)
    if args.loads:
        model = read_feeder(cfg.grid.feeder) if cfg.grid.feeder else None
        if model is None:
            from .grid.feeder import build_default_feeder
            model = build_default_feeder()
        vec = load_vector(model, read_load_table(args.loads))
        label = args.loads
    else:
        model, prof = load_grid_inputs(cfg)
        if args.time is not None:
            t = args.time
        else:
            t = read_profile_params(cfg.grid.profile_params or default_profile_params_path()).peak_s
        vec = load_vector_at(prof, model, t)
        if model.charger:
            vec[model.arrays()["pos"][model.charger]] += args.charger_kw * 1e3
        label = f"profiles at t={t:g} s, charger {args.charger_kw:g} kW"
    sol = solve_power_flow(model, vec)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "powerflow.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus", "v_pu", "angle_deg", "v_V", "branch_current_A"])
        for k, name in enumerate(sol.names):
            v = sol.v[k]
            w.writerow([name, f"{abs(v):.10g}", f"{math.degrees(np.angle(v)):.10g}",
                        f"{abs(v) * sol.v_nom[k]:.10g}", f"{sol.branch_current[k]:.10g}"])
    write_resolved(cfg, out, "powerflow.config.ini")
    print(f"loads: {label}")
    print(f"converged in {sol.iterations} iterations, mismatch {sol.mismatch:.3e} pu")
    print(f"load {sol.load_power.real / 1e3:.2f} kW, losses {sol.losses_w / 1e3:.3f} kW, "
          f"slack {sol.slack_power.real / 1e3:.2f} kW")
    if not args.quiet:
        for k, name in enumerate(sol.names):
            print(f"  {name:16s} {abs(sol.v[k]):.6f} pu {abs(sol.v[k]) * sol.v_nom[k]:10.2f} V")
    if model.charger:
        k = sol.pos[model.charger]
        print(f"charger node {model.charger}: {abs(sol.v[k]) * sol.v_nom[k]:.2f} V")
    return EXIT_OK


# -- plot ---------------------------------------------------------------------

def cmd_plot(args) -> int:
    from .cosim import read_csv
    from .plots import plot_grid, plot_transient

    try:
        cols = read_csv(args.csv)
    except (OSError, StopIteration) as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from None
    out = args.out or str(Path(args.csv).with_suffix(".svg"))
    try:
        if args.kind == "transient":
            plot_transient(cols, out)
        else:
            plot_grid(cols, out)
    except KeyError as exc:
        raise ConfigError(f"{args.csv} lacks column {exc}") from None
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evhil", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"evhil {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="controller design report and Bode data")
    _common(d)
    d.add_argument("--k-p", type=float, help="PR proportional gain K_p")
    d.add_argument("--k-i", type=float, help="PR resonant gain K_i")
    d.add_argument("--omega-c", type=float, help="PR resonance bandwidth (rad/s)")
    d.add_argument("--gain", type=float, help="overall PR scaling (default -0.1)")
    d.add_argument("--f-s", type=float, help="sampling frequency (Hz)")
    d.add_argument("--v-dc", type=float, help="design DC-link voltage (V)")
    d.add_argument("--r-l", type=float, help="inductor resistance (ohm)")
    d.add_argument("--method", choices=("zoh", "tustin"), help="discretization method")
    d.set_defaults(func=cmd_design)

    t = sub.add_parser("transient", help="stiff-source setpoint step (tests 1/2)")
    _common(t)
    t.add_argument("--test", choices=tuple(TEST_KINDS), help="1, 2, or 0 for no step")
    t.add_argument("--duration", type=float, help="seconds after the step")
    t.add_argument("--preroll", type=float, help="seconds before the step")
    t.add_argument("--log-every", type=int, help="keep every N-th step in the CSV")
    t.set_defaults(func=cmd_transient)

    g = sub.add_parser("grid", help="feeder co-simulation (baseline or AIMD)")
    _common(g)
    g.add_argument("--aimd", choices=("on", "off"), help="enable the AIMD controller")
    g.add_argument("--duration", type=float, help="simulated seconds")
    g.add_argument("--fidelity", choices=("emt", "envelope"), help="charger model")
    g.add_argument("--feeder", help="feeder table file")
    g.add_argument("--profiles", help="load profile file (node t,v pairs)")
    g.add_argument("--profile-params", help="synthetic profile parameter file")
    g.add_argument("--seed", type=int, help="profile synthesis seed")
    g.add_argument("--load-scale", type=float, help="override the calibrated load scale")
    g.add_argument("--dt-macro", type=float, help="co-simulation macro step (s)")
    g.set_defaults(func=cmd_grid)

    f = sub.add_parser("powerflow", help="single power-flow solve")
    _common(f)
    f.add_argument("--net", help="feeder table file (default: shipped feeder)")
    f.add_argument("--loads", help="load table: node P_W Q_VAR per line")
    f.add_argument("--profile-params", help="synthetic profile parameter file")
    f.add_argument("--time", type=float, help="profile time in s (default: calibrated peak)")
    f.add_argument("--charger-kw", type=float, default=10.0,
                   help="charger power added when loads come from profiles")
    f.add_argument("--quiet", action="store_true", help="omit the per-bus listing")
    f.set_defaults(func=cmd_powerflow)

    pl = sub.add_parser("plot", help="re-draw an SVG from a CSV log")
    pl.add_argument("kind", choices=("transient", "grid"))
    pl.add_argument("csv")
    pl.add_argument("--out", help="SVG path (default: next to the CSV)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ControllerFault as exc:
        where = f" at t={exc.t:.6f} s" if exc.t is not None else ""
        print(f"evhil: controller fault{where}: {exc} {exc.context or ''}", file=sys.stderr)
        return EXIT_FAULT
    except NumericalError as exc:
        print(f"evhil: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParameterError) as exc:
        print(f"evhil: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvHilError as exc:
        print(f"evhil: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
