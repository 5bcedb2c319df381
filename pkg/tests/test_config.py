import json
from pathlib import Path

import pytest

from holotweezers.config import apply_profile, build_config, read_config, validate_file
from holotweezers.errors import ConfigError

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.*"))


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    rep = validate_file(path)
    assert rep["status"] == "ok", rep
    assert len(rep["config_hash"]) == 64


def test_shipped_configs_cover_every_pipeline():
    names = {read_config(p).pipeline for p in CONFIGS}
    assert names == {"holo", "flicker", "transport", "halfloss", "thermo", "lifetime"}


def test_missing_seed_is_named(tmp_path):
    p = _write(tmp_path, "c.toml", 'pipeline = "transport"\n')
    rep = validate_file(p)
    assert rep["status"] == "error"
    assert any(i["loc"] == "seed" and "required" in i["msg"].lower() for i in rep["issues"])


def test_negative_waist_reports_constraint_and_line(tmp_path):
    p = _write(tmp_path, "c.toml", 'pipeline = "transport"\nseed = 1\n\n[trap]\nwaist_um = -0.5\n')
    rep = validate_file(p)
    assert rep["status"] == "error"
    (issue,) = rep["issues"]
    assert issue["loc"] == "trap.waist_um"
    assert "greater than 0" in issue["msg"]
    assert issue["line"] == 5


def test_unknown_key_rejected(tmp_path):
    p = _write(tmp_path, "c.toml", 'pipeline = "holo"\nseed = 1\n[holo]\ngridd = 64\n')
    rep = validate_file(p)
    assert rep["status"] == "error"
    assert rep["issues"][0]["loc"] == "holo.gridd"
    assert rep["issues"][0]["line"] == 4


def test_json_input_and_line_numbers(tmp_path):
    good = _write(tmp_path, "g.json", json.dumps({"pipeline": "thermo", "seed": 0}))
    assert read_config(good).pipeline == "thermo"
    bad = _write(tmp_path, "b.json", '{\n  "pipeline": "thermo",\n  "seed": -1\n}\n')
    rep = validate_file(bad)
    assert rep["issues"][0]["loc"] == "seed" and rep["issues"][0]["line"] == 3


def test_syntax_error_is_config_error(tmp_path):
    rep = validate_file(_write(tmp_path, "s.toml", "pipeline = \n"))
    assert rep["status"] == "error"
    assert rep["issues"][0]["type"] == "toml_syntax"


def test_seed_override_and_pipeline_mismatch(tmp_path):
    p = _write(tmp_path, "c.toml", 'pipeline = "transport"\nseed = 1\n')
    assert read_config(p, {"seed": 9}).seed == 9
    with pytest.raises(ConfigError):
        read_config(p, {"pipeline": "holo"})


def test_hash_ignores_output_dir_but_not_seed():
    a = build_config({"pipeline": "holo", "seed": 1, "output_dir": "x"})
    b = build_config({"pipeline": "holo", "seed": 1, "output_dir": "y"})
    c = build_config({"pipeline": "holo", "seed": 2})
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_omitted_block_equals_explicit_defaults():
    a = build_config({"pipeline": "transport", "seed": 1})
    b = build_config({"pipeline": "transport", "seed": 1, "transport": {}})
    assert a.config_hash() == b.config_hash()


def test_grid_must_be_power_of_two():
    with pytest.raises(ConfigError):
        build_config({"pipeline": "holo", "seed": 1, "holo": {"grid": 100}})


@pytest.mark.parametrize("pipeline", ["holo", "flicker", "transport", "halfloss", "thermo", "lifetime"])
def test_smoke_profile_caps(pipeline):
    cfg = apply_profile(build_config({"pipeline": pipeline, "seed": 0}), "smoke")
    b = cfg.params
    assert cfg.profile == "smoke"
    if hasattr(b, "n_trials"):
        assert b.n_trials <= 50
    if hasattr(b, "grid"):
        assert b.grid <= 128


def test_unknown_profile():
    with pytest.raises(ConfigError):
        apply_profile(build_config({"pipeline": "holo", "seed": 0}), "fast")


def test_trap_overrides():
    cfg = build_config({"pipeline": "thermo", "seed": 0, "trap": {"depth_mK": 2.0, "waist_um": 1.2}})
    p = cfg.trap_params()
    assert p.depth_mK == pytest.approx(2.0)
    assert p.waist == pytest.approx(1.2e-6)
