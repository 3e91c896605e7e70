"""Experiment configuration read from a YAML file.

Validation errors name the file and line of the offending entry, e.g.
``exp.yaml:14: test.lambdas: values must be >= 0``.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .dpd import TrainConfig
from .pipeline import DEFAULT_BAND, DEFAULT_BANDS

OUT_ENV = "AMBIREG_OUT"


class ConfigError(ValueError):
    """Invalid configuration; ``str(err)`` is ``path:line: message``."""

    def __init__(self, message, source="<config>", line=None):
        self.source = source
        self.line = line
        self.message = message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class TrainSetConfig:
    scenes: int = 12
    duration: float = 5.0
    seed: int = 1
    snr_db: tuple = (20.0, 40.0, 60.0)
    lam: float = 0.001
    # (snr_db, lambda) pairs cycled over the informed-mode scenes
    informed: tuple = ((20.0, 0.05), (10.0, 0.5), (5.0, 1.5))
    volume: tuple = (24.0, 480.0)
    t60: tuple = (0.25, 1.5)
    distance: tuple = (0.7, 1.5)


@dataclass(frozen=True)
class EvalSetConfig:
    scenes: int = 6
    seeds: tuple = (100, 101, 102, 103, 104)
    duration: float = 1.0
    snr_db: float = 10.0
    volume: tuple = (24.0, 480.0)
    t60: tuple = (0.3, 1.0)
    distance: tuple = (0.7, 1.5)
    lambdas: tuple = (0.01, 0.05, 0.1, 0.5, 1.0, 1.5)
    mixed_lambdas: tuple = (0.05, 0.5, 1.5)
    fractions: tuple = (1.0, 2.0, 5.0, 10.0, 20.0)
    band_fraction: float = 5.0
    bands: tuple = DEFAULT_BANDS


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    geometry: str = "builtin"
    order: int = 3
    sim_order: int = 6
    sample_rate: int = 16000
    window_len: int = 512
    hop: int = 256
    band: tuple = DEFAULT_BAND
    grid_resolution_deg: float = 2.0
    train: TrainSetConfig = field(default_factory=TrainSetConfig)
    test: EvalSetConfig = field(default_factory=EvalSetConfig)
    classifier: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """Short hash of the configuration, for report metadata."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def resolve_output(self, override=None):
        """Output directory: command-line override, then environment, then config."""
        return Path(override or os.environ.get(OUT_ENV) or self.output_dir)


_SECTIONS = {"train": TrainSetConfig, "test": EvalSetConfig, "classifier": TrainConfig}


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _line_map(text):
    """Map dotted key paths to 1-based line numbers."""
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}{k.value}"
                lines[key] = k.start_mark.line + 1
                walk(v, key + ".")

    root = yaml.compose(text)
    if root is not None:
        walk(root, "")
    return lines


def _check(cfg, fail):
    def positive(key, v):
        if not v > 0:
            fail(key, "must be > 0")

    def nonneg_all(key, vals):
        if any(not float(x) >= 0 for x in vals):
            fail(key, "values must be >= 0")

    def pair(key, v):
        if len(v) != 2 or not v[0] < v[1]:
            fail(key, "expected [low, high] with low < high")

    for key in ("order", "sim_order", "sample_rate", "window_len", "hop", "grid_resolution_deg"):
        positive(key, getattr(cfg, key))
    if cfg.sim_order < cfg.order:
        fail("sim_order", "must be >= order")
    pair("band", cfg.band)
    tr, te = cfg.train, cfg.test
    positive("train.scenes", tr.scenes)
    positive("train.duration", tr.duration)
    nonneg_all("train.lam", [tr.lam])
    nonneg_all("train.informed", [p[1] for p in tr.informed])
    if any(len(p) != 2 for p in tr.informed):
        fail("train.informed", "entries must be [snr_db, lambda] pairs")
    for key in ("volume", "t60", "distance"):
        pair(f"train.{key}", getattr(tr, key))
        pair(f"test.{key}", getattr(te, key))
    positive("test.scenes", te.scenes)
    positive("test.duration", te.duration)
    if not te.seeds:
        fail("test.seeds", "at least one seed is required")
    for key in ("lambdas", "mixed_lambdas"):
        nonneg_all(f"test.{key}", getattr(te, key))
    if any(not 0 < f <= 100 for f in (*te.fractions, te.band_fraction)):
        fail("test.fractions", "percentages must lie in (0, 100]")
    for b in te.bands:
        pair("test.bands", b)


def parse_config(text, source="<config>"):
    """Build an :class:`ExperimentConfig` from YAML text."""
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark or err.context_mark
        raise ConfigError(f"YAML syntax: {err.problem}", source, mark.line + 1 if mark else None) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source, 1)

    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", source, lines.get(key))

    def build(cls, mapping, prefix):
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for k, v in mapping.items():
            key = f"{prefix}{k}"
            if k not in known:
                fail(key, "unknown key")
            if k in _SECTIONS and cls is ExperimentConfig:
                if not isinstance(v, dict):
                    fail(key, "expected a mapping")
                kwargs[k] = build(_SECTIONS[k], v, key + ".")
            else:
                kwargs[k] = _tuplify(v)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as err:
            fail(prefix.rstrip(".") or "config", str(err))

    cfg = build(ExperimentConfig, data, "")
    try:
        _check(cfg, fail)
    except TypeError:
        raise ConfigError("malformed value type", source) from None
    return cfg


def load_config(path=None):
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read: {err.strerror}", str(path)) from None
    return parse_config(text, str(path))
