import numpy as np
import pytest

from tensorfill.config import DEFAULTS, parse_config_file, resolve_options
from tensorfill.exceptions import ConfigError


def test_defaults_pass_through():
    opts = resolve_options({}, {})
    assert opts == DEFAULTS


def test_file_overrides_default(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("trials = 7\nprotocol = speed-matched\n")
    opts = resolve_options({}, parse_config_file(cfg))
    assert opts["trials"] == "7"
    assert opts["protocol"] == "speed-matched"
    assert opts["seed"] == DEFAULTS["seed"]


def test_cli_overrides_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("trials = 7\n")
    opts = resolve_options({"trials": "9"}, parse_config_file(cfg))
    assert opts["trials"] == "9"


def test_absent_cli_flag_does_not_shadow_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 123\n")
    opts = resolve_options({"seed": None}, parse_config_file(cfg))
    assert opts["seed"] == "123"


def test_comments_and_blanks(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# a comment\n\ntrials = 3  # trailing comment\n")
    assert parse_config_file(cfg) == {"trials": "3"}


def test_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config_file(cfg)
    with pytest.raises(ConfigError):
        resolve_options({"bogus": "1"}, {})


def test_malformed_line(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("just some words\n")
    with pytest.raises(ConfigError):
        parse_config_file(cfg)


def test_precedence_over_random_key_subsets():
    rng = np.random.default_rng(0)
    keys = sorted(DEFAULTS)
    for trial in range(50):
        file_keys = {k for k in keys if rng.random() < 0.5}
        cli_keys = {k for k in keys if rng.random() < 0.5}
        file_values = {k: f"file_{k}_{trial}" for k in file_keys}
        cli_values = {k: (f"cli_{k}_{trial}" if rng.random() < 0.8 else None) for k in cli_keys}
        merged = resolve_options(cli_values, file_values)
        for k in keys:
            if cli_values.get(k) is not None:
                assert merged[k] == cli_values[k]
            elif k in file_values:
                assert merged[k] == file_values[k]
            else:
                assert merged[k] == DEFAULTS[k]
