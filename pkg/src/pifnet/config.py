"""Run configuration: plain-text INI files with key=value entries.

Every field has a default (the starred values of the experiment grid where
one exists), every file entry is validated against the known field set,
and the fully resolved configuration is echoed into each run directory so
a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Tuple

from .errors import ParameterError


@dataclass
class DataSection:
    kind: str = "synth"                 # synth | csv
    path: str = ""
    features_path: str = ""             # optional covariate CSV joined on timestamp
    timestamp_column: str = "timestamp"
    load_column: str = "load"
    feature_columns: Tuple[str, ...] = ()  # empty = every remaining column
    n: int = 2000
    daily_amplitude: float = 3.0
    noise_std: float = 0.1
    spike_count: int = 10
    spike_magnitude: float = 8.0
    offset: float = 10.0
    seed: int = 7


@dataclass
class SplitSection:
    train_rows: int = 0                 # 0 = everything before the test rows
    test_rows: int = 100


@dataclass
class LofSection:
    k: int = 10
    contamination: float = 0.05
    embedding: str = "value"            # value | value_hour


@dataclass
class SvrSection:
    c: float = 10.0
    epsilon: float = 0.1
    gamma: float = 0.0                  # 0 = 1/F
    tol: float = 1e-3
    max_iter: int = 200000
    max_rows: int = 512                 # seeded subsample cap for training


@dataclass
class ShapleySection:
    background_rows: int = 64
    max_samples: int = 256
    rule: str = "cumulative"            # cumulative | top_m
    tau: float = 0.90
    top_m: int = 0


@dataclass
class ModelSection:
    lookback: int = 24
    horizon: int = 1
    patch_length: int = 4
    stride: int = 2
    hidden: int = 64
    layers: int = 2
    dropout: float = 0.2
    head: str = "linear"                # linear | decoder_gru


@dataclass
class LossSection:
    kind: str = "ewal"                  # ewal | mse | mae
    c: float = 1.0
    eps: float = 1e-8
    sigma_mode: str = "population_std"  # population_std | rms


@dataclass
class TrainingSection:
    lr: float = 0.001
    max_epoch: int = 300
    batch_size: int = 64
    seed: int = 0
    early_stop_patience: int = 0        # 0 = off


@dataclass
class AblationSection:
    data_correction: bool = True
    feature_selection: bool = True
    patching: bool = True
    gating: bool = True
    ewal: bool = True
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)


@dataclass
class SensitivitySection:
    max_epoch_grid: Tuple[int, ...] = (100, 200, 300, 400)
    lookback_grid: Tuple[int, ...] = (12, 24, 48, 96)
    batch_size_grid: Tuple[int, ...] = (32, 64, 128, 256)


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    lof: LofSection = field(default_factory=LofSection)
    svr: SvrSection = field(default_factory=SvrSection)
    shapley: ShapleySection = field(default_factory=ShapleySection)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    sensitivity: SensitivitySection = field(default_factory=SensitivitySection)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        read = parser.read(path)
        if not read:
            raise ParameterError(f"config file not found: {path}")
        cfg = cls()
        for section_field in fields(cfg):
            section = getattr(cfg, section_field.name)
            if not parser.has_section(section_field.name):
                continue
            known = {f.name: f for f in fields(section)}
            for key, raw in parser.items(section_field.name):
                if key not in known:
                    raise ParameterError(
                        f"unknown option [{section_field.name}] {key}")
                setattr(section, key,
                        _coerce(raw, getattr(section, key), section_field.name, key))
        unknown = [s for s in parser.sections() if s not in {f.name for f in fields(cfg)}]
        if unknown:
            raise ParameterError(f"unknown config sections: {unknown}")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond: bool, message: str) -> None:
            if not cond:
                raise ParameterError(message)

        need(self.data.kind in ("synth", "csv"), "[data] kind must be synth or csv")
        if self.data.kind == "csv":
            need(bool(self.data.path), "[data] path is required when kind=csv")
        need(self.data.n > 0, "[data] n must be positive")
        need(self.data.noise_std >= 0, "[data] noise_std must be nonnegative")
        need(self.data.spike_count >= 0, "[data] spike_count must be nonnegative")
        need(self.split.test_rows >= 0, "[split] test_rows must be nonnegative")
        need(self.split.train_rows >= 0, "[split] train_rows must be nonnegative")
        need(self.lof.k >= 1, "[lof] k must be at least 1")
        need(0.0 < self.lof.contamination < 1.0, "[lof] contamination must be in (0, 1)")
        need(self.lof.embedding in ("value", "value_hour"),
             "[lof] embedding must be value or value_hour")
        need(self.svr.c > 0, "[svr] c must be positive")
        need(self.svr.epsilon >= 0, "[svr] epsilon must be nonnegative")
        need(self.svr.gamma >= 0, "[svr] gamma must be nonnegative (0 = auto)")
        need(self.svr.max_rows >= 2, "[svr] max_rows must be at least 2")
        need(self.shapley.background_rows >= 1, "[shapley] background_rows must be >= 1")
        need(self.shapley.max_samples >= 1, "[shapley] max_samples must be >= 1")
        need(self.shapley.rule in ("cumulative", "top_m"),
             "[shapley] rule must be cumulative or top_m")
        need(0.0 < self.shapley.tau <= 1.0, "[shapley] tau must be in (0, 1]")
        need(self.model.lookback >= 1 and self.model.horizon >= 1,
             "[model] lookback and horizon must be positive")
        need(1 <= self.model.patch_length <= self.model.lookback,
             "[model] patch_length must be in [1, lookback]")
        need(self.model.stride >= 1, "[model] stride must be at least 1")
        need(self.model.hidden >= 1 and self.model.layers >= 1,
             "[model] hidden and layers must be positive")
        need(0.0 <= self.model.dropout < 1.0, "[model] dropout must be in [0, 1)")
        need(self.model.head in ("linear", "decoder_gru"),
             "[model] head must be linear or decoder_gru")
        need(self.loss.kind in ("ewal", "mse", "mae"),
             "[loss] kind must be ewal, mse, or mae")
        need(self.loss.c > 0, "[loss] c must be positive")
        need(self.loss.eps > 0, "[loss] eps must be positive")
        need(self.loss.sigma_mode in ("population_std", "rms"),
             "[loss] sigma_mode must be population_std or rms")
        need(self.training.lr > 0, "[training] lr must be positive")
        need(self.training.max_epoch >= 1, "[training] max_epoch must be at least 1")
        need(self.training.batch_size >= 1, "[training] batch_size must be at least 1")
        need(self.training.early_stop_patience >= 0,
             "[training] early_stop_patience must be nonnegative")
        need(len(self.ablation.seeds) >= 1, "[ablation] seeds must not be empty")

    def copy(self) -> "RunConfig":
        sections = {f.name: dataclasses.replace(getattr(self, f.name)) for f in fields(self)}
        return RunConfig(**sections)

    def write(self, path) -> None:
        """Echo the fully resolved configuration in the input format."""
        parser = configparser.ConfigParser()
        for section_field in fields(self):
            section = getattr(self, section_field.name)
            parser[section_field.name] = {
                f.name: _render(getattr(section, f.name)) for f in fields(section)}
        with open(path, "w", encoding="utf-8") as fh:
            parser.write(fh)


def _coerce(raw: str, current, section: str, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            items = [token.strip() for token in raw.split(",") if token.strip()]
            if current and isinstance(current[0], int):
                return tuple(int(t) for t in items)
            return tuple(items)
        return raw
    except ValueError as exc:
        raise ParameterError(f"bad value for [{section}] {key}: {raw!r}") from exc


def _render(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
