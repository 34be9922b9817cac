"""INI config loading, canonical rendering, digests."""

import pytest

from spike_diffuser.config import (
    config_digest,
    default_config,
    load_config,
    render_config,
    write_effective_config,
)
from spike_diffuser.errors import ConfigError


def test_defaults_load_without_file():
    cfg = load_config()
    assert cfg == default_config()


def test_roundtrip_through_rendered_file(tmp_path):
    cfg = default_config()
    path = tmp_path / "c.ini"
    write_effective_config(cfg, path)
    assert load_config(path) == cfg


def test_file_values_applied(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[model]\nd_model = 16\nn_heads = 2\n"
                    "[train]\nepochs = 3\n[run]\nn_episodes = 2\n")
    cfg = load_config(path)
    assert cfg.model.d_model == 16
    assert cfg.train.epochs == 3
    assert cfg.n_episodes == 2
    # untouched fields keep defaults
    assert cfg.model.d_ff == default_config().model.d_ff


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nepochs = 3\n")
    cfg = load_config(path, overrides={"train.epochs": 9})
    assert cfg.train.epochs == 9


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(path)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nepoch = 3\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(path)


def test_bad_literal_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nepochs = soon\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_invalid_value_surfaces_as_config_error(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nepochs = 0\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_override_key_rejected():
    with pytest.raises(ConfigError):
        load_config(overrides={"train.nope": 1})


def test_digest_stable_and_sensitive():
    a = default_config()
    assert config_digest(a) == config_digest(load_config())
    b = load_config(overrides={"train.seed": 1})
    assert config_digest(a) != config_digest(b)
    assert len(config_digest(a)) == 16


def test_render_lists_every_section():
    text = render_config(default_config())
    for section in ("[lif]", "[model]", "[run]", "[sampler]", "[train]"):
        assert section in text
    assert "lif =" not in text
