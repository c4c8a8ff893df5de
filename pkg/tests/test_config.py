import pytest

from interference_lab.config import ExperimentConfig, config_from_dict, load_config
from interference_lab.errors import ConfigError


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.seeds == (42, 123, 456, 789, 1024)
    assert (cfg.decay.beta, cfg.decay.psi) == (0.2, 0.5)
    assert cfg.noise.sigma == 0.5 and cfg.spacing.sigma == 0.25
    assert cfg.n_boot == 10_000
    assert cfg.forgetting.levels[-1] == 10_000 and cfg.forgetting.bins == 10
    assert cfg.drm.grid()[0] == 0.5 and cfg.drm.grid()[-1] == 0.95 and len(cfg.drm.grid()) == 46


def test_empty_file_is_valid(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("")
    assert load_config(p) == ExperimentConfig()


def test_unknown_keys_rejected_with_path():
    with pytest.raises(ConfigError, match="forgetting.nope"):
        config_from_dict({"forgetting": {"nope": 1}})
    with pytest.raises(ConfigError, match="bogus"):
        config_from_dict({"bogus": 1})


def test_type_checks_and_numeric_strings():
    cfg = config_from_dict({"capmass": {"n_samples": "1e6"}, "decay": {"beta": 0.3}})
    assert cfg.capmass.n_samples == 1_000_000 and cfg.decay.beta == 0.3
    with pytest.raises(ConfigError):
        config_from_dict({"capmass": {"n_samples": 1.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"decay": {"beta": "fast"}})
    with pytest.raises(ConfigError):
        config_from_dict({"forgetting": {"backends": ["vector", "magic"]}})
    with pytest.raises(ConfigError):
        config_from_dict({"seeds": []})


def test_bad_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("a: [1, 2")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
