"""End-node load profiles: container, interpolation, file format and synthesis.

Profile files hold one end-node per line: the node id, then ``time,value``
pairs (seconds from the scenario start, watts). Header comments
``# start 17:30`` and ``# pf 0.95`` carry the clock offset and power factor.

The shipped default is synthetic and generated on load from a small
parameter file, so the calibration is a single editable scalar
(``load_scale``) rather than a large data blob.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from ..errors import ConfigError, ParameterError, ScenarioError
from .feeder import FeederModel


@dataclass
class LoadProfileSet:
    nodes: list[str]
    t: np.ndarray            # seconds from scenario start, strictly increasing
    p: np.ndarray            # (len(nodes), len(t)) watts
    start_clock: str = "17:30"
    pf: float = 0.95
    _bound: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (len(self.nodes), len(self.t)):
            raise ParameterError("profile matrix shape does not match nodes x times")
        if len(self.t) < 2 or np.any(np.diff(self.t) <= 0):
            raise ParameterError("profile times must be strictly increasing (>= 2 samples)")
        if np.any(self.p < 0) or not np.all(np.isfinite(self.p)):
            raise ParameterError("profile powers must be finite and non-negative")
        if not 0 < self.pf <= 1:
            raise ParameterError("power factor must lie in (0, 1]")
        dt = np.diff(self.t)
        self._step = float(dt[0]) if np.allclose(dt, dt[0]) else None

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def tan_phi(self) -> float:
        return math.tan(math.acos(self.pf))

    def total(self) -> np.ndarray:
        return self.p.sum(axis=0)

    def real_at(self, t: float) -> np.ndarray:
        t0, t1 = self.t[0], self.t[-1]
        if not (t0 - 1e-9 <= t <= t1 + 1e-9):
            raise ScenarioError(f"t={t} s outside profile span [{t0}, {t1}] s")
        if self._step is not None:
            x = (t - t0) / self._step
            k = int(math.floor(x + 1e-9))
            if abs(x - k) < 1e-9 or k >= len(self.t) - 1:
                return self.p[:, min(k, len(self.t) - 1)].copy()
            f = x - k
            return self.p[:, k] * (1.0 - f) + self.p[:, k + 1] * f
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        k = min(max(k, 0), len(self.t) - 2)
        f = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        return self.p[:, k] * (1.0 - f) + self.p[:, k + 1] * f

    def bind(self, model: FeederModel) -> np.ndarray:
        """Solver-order positions of the profile nodes in ``model`` (cached)."""
        key = id(model)
        if key not in self._bound:
            pos = model.arrays()["pos"]
            missing = [n for n in self.nodes if n not in pos]
            if missing:
                raise ConfigError(f"profile nodes missing from feeder: {missing[:5]}")
            self._bound[key] = np.array([pos[n] for n in self.nodes], dtype=np.int64)
        return self._bound[key]


def loads_at(profiles: LoadProfileSet, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-node (W, VAR) at ``t`` by linear interpolation; Q lags at the profile pf."""
    p = profiles.real_at(t)
    return p, p * profiles.tan_phi


def load_vector_at(profiles: LoadProfileSet, model: FeederModel, t: float) -> np.ndarray:
    idx = profiles.bind(model)
    p, q = loads_at(profiles, t)
    out = np.zeros(len(model.order), dtype=complex)
    out[idx] = p + 1j * q
    return out


# -- file format --------------------------------------------------------------

def format_profiles(prof: LoadProfileSet) -> str:
    lines = [f"# start {prof.start_clock}", f"# pf {prof.pf:g}"]
    ts = [f"{x:g}" for x in prof.t]
    for name, row in zip(prof.nodes, prof.p):
        lines.append(name + " " + " ".join(f"{a},{b:.6g}" for a, b in zip(ts, row)))
    return "\n".join(lines) + "\n"


def write_profiles(prof: LoadProfileSet, path: str | Path) -> None:
    Path(path).write_text(format_profiles(prof))


def parse_profiles(text: str, source: str = "<string>") -> LoadProfileSet:
    start, pf = "17:30", 0.95
    nodes, series = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s:
            continue
        if s.startswith("#"):
            f = s[1:].split()
            if len(f) == 2 and f[0] == "start":
                start = f[1]
            elif len(f) == 2 and f[0] == "pf":
                pf = float(f[1])
            continue
        f = s.split()
        try:
            pairs = [tuple(float(x) for x in item.split(",")) for item in f[1:]]
            if not pairs or any(len(pr) != 2 for pr in pairs):
                raise ValueError("expected time,value pairs")
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        nodes.append(f[0])
        series.append(np.array(pairs))
    if not nodes:
        raise ConfigError(f"{source}: no profiles")
    t = series[0][:, 0]
    if all(len(a) == len(t) and np.array_equal(a[:, 0], t) for a in series):
        p = np.vstack([a[:, 1] for a in series])
    else:
        t = np.unique(np.concatenate([a[:, 0] for a in series]))
        p = np.vstack([np.interp(t, a[:, 0], a[:, 1]) for a in series])
    try:
        return LoadProfileSet(nodes, t, p, start, pf)
    except ParameterError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def read_profiles(path: str | Path) -> LoadProfileSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read profile file: {exc}") from None
    return parse_profiles(text, str(path))


# -- synthesis ----------------------------------------------------------------

@dataclass(frozen=True)
class Appliance:
    name: str
    power_w: float
    mean_on_s: float
    mean_off_s: float


@dataclass(frozen=True)
class ProfileParams:
    seed: int = 1
    duration_s: float = 3600.0
    resolution_s: float = 1.0
    start_clock: str = "17:30"
    pf: float = 0.95
    load_scale: float = 1.0
    peak_s: float = 0.0
    base_w: tuple[float, float] = (400.0, 1200.0)
    ramp_gain: float = 1.0
    ramp_center_s: float = 1500.0
    ramp_width_s: float = 500.0
    noise_w: float = 30.0
    noise_tau_s: float = 0.0
    appliances: tuple[Appliance, ...] = ()
    ev_share: float = 0.3
    ev_power_w: tuple[float, ...] = (3300.0, 7200.0)
    ev_arrival_s: tuple[float, float] = (0.0, 2400.0)
    ev_duration_s: tuple[float, float] = (3600.0, 7200.0)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


def read_profile_params(path: str | Path) -> ProfileParams:
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read profile parameters {path}")
        g = cp["profile"]
        h = cp["house"]
        e = cp["ev"]
        apps = []
        for sec in cp.sections():
            if sec.startswith("appliance."):
                a = cp[sec]
                apps.append(Appliance(sec.split(".", 1)[1], a.getfloat("power_w"),
                                      a.getfloat("mean_on_s"), a.getfloat("mean_off_s")))
        return ProfileParams(
            seed=g.getint("seed"), duration_s=g.getfloat("duration_s"),
            resolution_s=g.getfloat("resolution_s"), start_clock=g.get("start_clock"),
            pf=g.getfloat("pf"), load_scale=g.getfloat("load_scale"),
            peak_s=g.getfloat("peak_s", 0.0),
            base_w=_floats(h["base_w"]), ramp_gain=h.getfloat("ramp_gain"),
            ramp_center_s=h.getfloat("ramp_center_s"), ramp_width_s=h.getfloat("ramp_width_s"),
            noise_w=h.getfloat("noise_w"), noise_tau_s=h.getfloat("noise_tau_s", 0.0),
            appliances=tuple(apps),
            ev_share=e.getfloat("share"), ev_power_w=_floats(e["power_w"]),
            ev_arrival_s=_floats(e["arrival_s"]), ev_duration_s=_floats(e["duration_s"]))
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigError(f"{path}: bad profile parameters ({exc})") from None


def default_profile_params_path() -> Path:
    return Path(str(resources.files("evhil") / "data" / "default_profiles.ini"))


def evening_ramp(t: np.ndarray, center: float, width: float) -> np.ndarray:
    """Logistic 0 -> 1 activity curve."""
    return 1.0 / (1.0 + np.exp(-(t - center) / width))


def _ar1(rng: np.random.Generator, n: int, dt: float, tau: float) -> np.ndarray:
    """Unit-variance first-order autoregressive noise with correlation time ``tau``."""
    e = rng.standard_normal(n)
    if tau <= 0:
        return e
    a = math.exp(-dt / tau)
    return lfilter([math.sqrt(1.0 - a * a)], [1.0, -a], e, zi=[a * e[0]])[0]


def _markov(rng: np.random.Generator, n: int, dt: float, on_s: float, off_s: float,
            activity: np.ndarray) -> np.ndarray:
    """Two-state on/off sequence; off periods shorten as ``activity`` rises."""
    out = np.zeros(n)
    k = 0
    on = rng.random() < on_s / (on_s + off_s) * activity[0]
    while k < n:
        if on:
            d = rng.exponential(on_s)
        else:
            d = rng.exponential(off_s / max(activity[k], 0.05))
        m = max(1, int(round(d / dt)))
        if on:
            out[k:k + m] = 1.0
        k += m
        on = not on
    return out


def synthesize_profiles(model: FeederModel, params: ProfileParams,
                        seed: int | None = None) -> LoadProfileSet:
    """Seeded synthetic house and passive-EV demand for every end-node.

    The active charger node is left out; the co-simulated charger supplies
    its own power there.
    """
    rng = np.random.default_rng(params.seed if seed is None else seed)
    dt = params.resolution_s
    t = np.arange(0.0, params.duration_s + 0.5 * dt, dt)
    n = len(t)
    ramp = evening_ramp(t, params.ramp_center_s, params.ramp_width_s)
    activity = 0.3 + 0.7 * ramp
    lo, hi = params.base_w
    nodes, rows = [], []
    ends = sorted(model.end_nodes.items(), key=lambda kv: (kv[1][0], kv[1][1], kv[1][2]))
    for name, (_nb, _home, kind) in ends:
        if name == model.charger:
            continue
        if kind == "house":
            base = rng.uniform(lo, hi) * (1.0 + params.ramp_gain * ramp)
            p = base + params.noise_w * _ar1(rng, n, dt, params.noise_tau_s)
            for app in params.appliances:
                p += app.power_w * _markov(rng, n, dt, app.mean_on_s, app.mean_off_s, activity)
        else:
            p = np.zeros(n)
            if rng.random() < params.ev_share:
                power = params.ev_power_w[rng.integers(len(params.ev_power_w))]
                start = rng.uniform(*params.ev_arrival_s)
                stop = start + rng.uniform(*params.ev_duration_s)
                p[(t >= start) & (t < stop)] = power
        nodes.append(name)
        rows.append(np.maximum(p, 0.0) * params.load_scale)
    return LoadProfileSet(nodes, t, np.vstack(rows), params.start_clock, params.pf)


def default_profiles(model: FeederModel, params_path: str | Path | None = None,
                     seed: int | None = None, load_scale: float | None = None) -> LoadProfileSet:
    params = read_profile_params(params_path or default_profile_params_path())
    if load_scale is not None:
        params = ProfileParams(**{**params.__dict__, "load_scale": load_scale})
    return synthesize_profiles(model, params, seed)
