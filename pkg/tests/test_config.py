import pytest

from evhil.config import dump_config, load_config, scenario_defaults, write_resolved
from evhil.errors import ConfigError


def test_empty_file_is_valid(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("")
    cfg = load_config(p)
    assert cfg.kind == "grid_baseline" and cfg.duration == 3000.0


def test_dump_round_trip(tmp_path):
    cfg = load_config(None, "grid_aimd", {"aimd": {"alpha": "150"}, "grid": {"seed": "4"}})
    path = write_resolved(cfg, tmp_path)
    again = load_config(path)
    assert dump_config(again) == dump_config(cfg)
    assert again.aimd.alpha == 150.0


def test_flags_override_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[scenario]\nkind = grid_aimd\nduration = 50\n")
    cfg = load_config(p, None, {"scenario": {"duration": "70"}})
    assert cfg.kind == "grid_aimd" and cfg.duration == 70.0


def test_transient_defaults():
    cfg = scenario_defaults("transient_test_2")
    assert cfg.fidelity == "emt"
    assert (cfg.transient.p_after, cfg.transient.q_after) == (7070.0, -7070.0)


@pytest.mark.parametrize("data", [
    {"nope": {"a": "1"}},
    {"aimd": {"beta": "2"}},
    {"aimd": {"alpha": "many"}},
    {"scenario": {"kind": "grid_baseline", "aimd": "on"}},
    {"scenario": {"kind": "transient_test_1", "fidelity": "envelope"}},
    {"scenario": {"fidelity": "phasor"}},
    {"scenario": {"colour": "red"}},
    {"converter": {"l_s": "0"}},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        load_config(None, None, data)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    bad = tmp_path / "bad.ini"
    bad.write_text("no section header\n")
    with pytest.raises(ConfigError):
        load_config(bad)
