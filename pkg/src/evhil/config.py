"""Scenario configuration: ``[section]`` / ``key = value`` files and their resolution.

Every field has a default, so an empty file is a valid configuration. The
CLI layers flags on top of a file and writes the fully resolved result next
to its outputs; feeding that file back reproduces the run.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .aimd import AimdConfig
from .charger import PrDesign
from .converter import ConverterParams
from .errors import ConfigError, ParameterError
from .outer import OuterGains

TRANSIENT_KINDS = ("transient_test_1", "transient_test_2", "transient_zero_step")
GRID_KINDS = ("grid_baseline", "grid_aimd")
KINDS = TRANSIENT_KINDS + GRID_KINDS + ("custom",)
FIDELITIES = ("emt", "envelope")

# setpoint after the step for each transient kind (W, VAR)
TRANSIENT_STEPS = {
    "transient_test_1": (7070.0, 7070.0),
    "transient_test_2": (7070.0, -7070.0),
    "transient_zero_step": (10_000.0, 0.0),
}


@dataclass
class TransientSettings:
    preroll: float = 1.0
    p_before: float = 10_000.0
    q_before: float = 0.0
    p_after: float = 7070.0
    q_after: float = 7070.0
    log_every: int = 1


@dataclass
class GridSettings:
    feeder: str = ""
    profiles: str = ""
    profile_params: str = ""
    seed: str = ""
    load_scale: str = ""
    dt_macro: float = 1.0
    q_ref: float = 0.0
    p_init: str = ""


@dataclass
class ScenarioConfig:
    kind: str = "grid_baseline"
    duration: float = 3000.0
    fidelity: str = "envelope"
    out_dir: str = "out"
    converter: ConverterParams = field(default_factory=ConverterParams)
    controller: PrDesign = field(default_factory=PrDesign)
    outer: OuterGains = field(default_factory=OuterGains)
    aimd: AimdConfig = field(default_factory=AimdConfig)
    aimd_enabled: bool = False
    transient: TransientSettings = field(default_factory=TransientSettings)
    grid: GridSettings = field(default_factory=GridSettings)

    def validate(self) -> "ScenarioConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if not self.duration > 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.fidelity not in FIDELITIES:
            raise ConfigError(f"unknown fidelity {self.fidelity!r}")
        if self.kind in TRANSIENT_KINDS and self.fidelity != "emt":
            raise ConfigError("transient scenarios run at emt fidelity only")
        if self.kind == "grid_aimd" and not self.aimd_enabled:
            raise ConfigError("grid_aimd requires aimd enabled")
        if self.kind == "grid_baseline" and self.aimd_enabled:
            raise ConfigError("grid_baseline runs without aimd")
        if self.transient.preroll < 0 or self.transient.log_every < 1:
            raise ConfigError("bad transient settings")
        if not self.grid.dt_macro > 0:
            raise ConfigError("dt_macro must be positive")
        return self

    @property
    def is_transient(self) -> bool:
        return self.kind in TRANSIENT_KINDS or (self.kind == "custom" and self.fidelity == "emt"
                                                and not self.grid.feeder)


def scenario_defaults(kind: str) -> ScenarioConfig:
    """Defaults for a named experiment."""
    if kind not in KINDS:
        raise ConfigError(f"unknown scenario kind {kind!r}")
    cfg = ScenarioConfig(kind=kind)
    if kind in TRANSIENT_KINDS:
        cfg.fidelity = "emt"
        cfg.duration = 0.5
        p, q = TRANSIENT_STEPS[kind]
        cfg.transient = TransientSettings(p_after=p, q_after=q)
    elif kind == "grid_aimd":
        cfg.aimd_enabled = True
    return cfg


# -- ini mapping ---------------------------------------------------------------

_SECTIONS = {
    "converter": "converter",
    "controller": "controller",
    "outer": "outer",
    "aimd": "aimd",
    "transient": "transient",
    "grid": "grid",
}


def _coerce(value: str, like):
    if isinstance(like, bool):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def _apply(obj, items: dict, section: str):
    names = {f.name: f for f in fields(obj)}
    changes = {}
    for key, raw in items.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        try:
            changes[key] = _coerce(raw, getattr(obj, key))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        return dataclasses.replace(obj, **changes)
    except ParameterError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def apply_mapping(cfg: ScenarioConfig, data: dict[str, dict[str, str]]) -> ScenarioConfig:
    """Overlay ``{section: {key: text}}`` onto ``cfg``; unknown keys are errors."""
    ordered = sorted(data.items(), key=lambda kv: kv[0] != "scenario")
    for section, items in ordered:
        if section == "scenario":
            for key, raw in items.items():
                if key == "kind":
                    if raw.strip() != cfg.kind:
                        base = scenario_defaults(raw.strip())
                        base.out_dir = cfg.out_dir
                        cfg = base
                elif key == "duration":
                    cfg.duration = _num(raw, "duration")
                elif key == "fidelity":
                    cfg.fidelity = raw.strip()
                elif key == "out_dir":
                    cfg.out_dir = raw.strip()
                elif key == "aimd":
                    cfg.aimd_enabled = _coerce(raw, True)
                else:
                    raise ConfigError(f"unknown key {key!r} in [scenario]")
        elif section in _SECTIONS:
            attr = _SECTIONS[section]
            setattr(cfg, attr, _apply(getattr(cfg, attr), items, section))
        else:
            raise ConfigError(f"unknown section [{section}]")
    return cfg


def _num(raw: str, what: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{what}: not a number: {raw!r}") from None


def read_config_file(path: str | Path) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(cp[s]) for s in cp.sections()}


def load_config(path: str | Path | None, kind: str | None = None,
                overrides: dict[str, dict[str, str]] | None = None) -> ScenarioConfig:
    """File values over kind defaults, flags over file values."""
    data = read_config_file(path) if path else {}
    file_kind = data.get("scenario", {}).get("kind")
    cfg = scenario_defaults(kind or (file_kind.strip() if file_kind else "grid_baseline"))
    if kind and file_kind and file_kind.strip() != kind:
        data["scenario"] = {k: v for k, v in data["scenario"].items() if k != "kind"}
    cfg = apply_mapping(cfg, data)
    if overrides:
        cfg = apply_mapping(cfg, overrides)
    return cfg.validate()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"kind": cfg.kind, "duration": _fmt(cfg.duration),
                      "fidelity": cfg.fidelity, "out_dir": cfg.out_dir,
                      "aimd": _fmt(cfg.aimd_enabled)}
    for section, attr in _SECTIONS.items():
        obj = getattr(cfg, attr)
        cp[section] = {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def write_resolved(cfg: ScenarioConfig, out_dir: str | Path, name: str = "config.resolved.ini") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(dump_config(cfg))
    return path
