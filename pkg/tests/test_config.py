from pathlib import Path

import pytest

from ambireg.config import OUT_ENV, ConfigError, ExperimentConfig, load_config, parse_config


def test_defaults():
    cfg = load_config()
    assert cfg == ExperimentConfig()
    assert cfg.train.lam == 0.001
    assert [p[1] for p in cfg.train.informed] == [0.05, 0.5, 1.5]
    assert cfg.test.lambdas == (0.01, 0.05, 0.1, 0.5, 1.0, 1.5)


def test_empty_text_gives_defaults():
    assert parse_config("") == ExperimentConfig()


def test_nested_override():
    cfg = parse_config("seed: 4\ntrain:\n  scenes: 2\n  t60: [0.3, 0.9]\nclassifier:\n  epochs: 3\n")
    assert cfg.seed == 4 and cfg.train.scenes == 2 and cfg.train.t60 == (0.3, 0.9)
    assert cfg.classifier.epochs == 3
    assert cfg.test == ExperimentConfig().test


def test_digest_tracks_content():
    a = parse_config("seed: 1\n")
    assert a.digest() == parse_config("seed: 1\n").digest()
    assert a.digest() != parse_config("seed: 2\n").digest()


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as e:
        parse_config("seed: 1\ntrain:\n  scenes: 2\n  colour: red\n", "exp.yaml")
    assert e.value.line == 4
    assert str(e.value) == "exp.yaml:4: train.colour: unknown key"


def test_invalid_value_reports_line():
    with pytest.raises(ConfigError) as e:
        parse_config("order: 3\ntest:\n  fractions: [5, 150]\n", "exp.yaml")
    assert e.value.line == 3 and "test.fractions" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_config("order: 3\nsim_order: 2\n")
    assert e.value.line == 2


def test_reversed_range_rejected():
    with pytest.raises(ConfigError, match="low < high"):
        parse_config("train:\n  t60: [1.0, 0.5]\n")


def test_yaml_syntax_error_line():
    with pytest.raises(ConfigError) as e:
        parse_config("seed: 1\ntrain:\n  scenes: [1, 2\n", "bad.yaml")
    assert e.value.line is not None and e.value.line >= 3
    assert str(e.value).startswith("bad.yaml:")


def test_top_level_must_be_mapping():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.yaml")


def test_output_precedence(monkeypatch):
    cfg = parse_config("output_dir: from_cfg\n")
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert cfg.resolve_output() == Path("from_cfg")
    monkeypatch.setenv(OUT_ENV, "from_env")
    assert cfg.resolve_output() == Path("from_env")
    assert cfg.resolve_output("from_cli") == Path("from_cli")
