import json

import pytest

from signsynth.config import (ConfigError, GenerationConfig, apply_overrides, config_hash, get_path,
                              identity_imaging, load_config, parse_override, raster_preset, save_config, set_path,
                              to_dict, validate_config)
from signsynth.distributions import Const, Uniform


def test_defaults_validate():
    validate_config(GenerationConfig())


def test_save_load_round_trip(tmp_path):
    cfg = GenerationConfig(master_seed=5, classes=[1, 2])
    p = tmp_path / "c.json"
    save_config(cfg, p)
    back = load_config(p)
    assert to_dict(back) == to_dict(cfg)
    assert config_hash(back) == config_hash(cfg)


def test_hash_ignores_paths_and_workers():
    a = GenerationConfig(output_dir="a", workers=1)
    b = GenerationConfig(output_dir="b", workers=8)
    b.render.threads = 4
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(GenerationConfig(master_seed=1))


def test_override_pins_distribution():
    cfg = apply_overrides(GenerationConfig(), ["imaging.motion_blur.length=0"])
    assert get_path(cfg, "imaging.motion_blur.length") == Const(0.0)


def test_override_with_distribution_dict():
    cfg = set_path(GenerationConfig(), "scene.fov_deg", 30)
    assert cfg.scene.fov_deg == 30
    cfg = set_path(cfg, "defects.dirt_gray", {"dist": "uniform", "low": 0.1, "high": 0.2})
    assert cfg.defects.dirt_gray == Uniform(0.1, 0.2)


def test_unknown_path_rejected():
    with pytest.raises(ConfigError):
        set_path(GenerationConfig(), "scene.nope", 1)
    with pytest.raises(ConfigError):
        parse_override("no-equals-sign")


def test_blur_beyond_cap_rejected():
    with pytest.raises(ConfigError):
        set_path(GenerationConfig(), "imaging.motion_blur.length", 12)


def test_bad_probability_rejected():
    with pytest.raises(ConfigError):
        set_path(GenerationConfig(), "scene.occluder_probability", 1.5)


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text(json.dumps({"scene": {"unknown_key": 1}}))
    with pytest.raises(ConfigError):
        load_config(p)


def test_raster_preset_and_identity():
    cfg = raster_preset(GenerationConfig())
    assert (cfg.render.spp, cfg.render.max_bounces) == (1, 0)
    ident = identity_imaging()
    assert ident.flare.probability == 0.0
    assert ident.demosaic.probability == 0.0
