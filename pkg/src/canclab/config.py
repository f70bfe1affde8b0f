"""Experiment configuration: a sectioned INI file parsed into typed configs.

Sections and keys (defaults in parentheses):

  [data]    source (synthetic) | file; path; n_scenes (20); scene_size (512);
            channels (1); m (32); tau_label (0.01); split (0.7,0.15,0.15);
            seed (0); building_count (8,24); building_side (16,64);
            building_intensity (0.55,0.95); background_intensity (0.05,0.45);
            pixel_noise (0.04)
  [noise]   type (none) | symmetric | antisymmetric; epsilon (0.0); seed (1);
            noise_modelsel (false)
  [train]   algo (canc); lr (0.05); t_max (30); t_k (10); batch_size (64);
            n_max (0 = one pass); tau_f (0.45); swap_rate (0.05);
            persist_swaps (false); ablation_s_equals_1_minus_r (false);
            seed (2); network (two convs + dense for 32x32 inputs)
  [output]  dir (run); formats (csv,json)

All randomness flows from the three named seeds (data, noise, train); the
train seed fans out into shuffle and two init seeds. Unknown sections or
keys are configuration errors, not warnings.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .training import TrainConfig

__all__ = [
    "DataConfig",
    "NoiseConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "derive_train_seeds",
    "DEFAULT_NETWORK",
]

DEFAULT_NETWORK = "conv(6,5,2) lrelu(0.1) conv(12,3,2) lrelu(0.1) dense(432,2)"

DATA_KEYS = {
    "source", "path", "n_scenes", "scene_size", "channels", "m", "tau_label",
    "split", "seed", "building_count", "building_side", "building_intensity",
    "background_intensity", "pixel_noise",
}
NOISE_KEYS = {"type", "epsilon", "seed", "noise_modelsel"}
TRAIN_KEYS = {
    "algo", "lr", "t_max", "t_k", "batch_size", "n_max", "tau_f", "swap_rate",
    "persist_swaps", "ablation_s_equals_1_minus_r", "seed", "network",
}
OUTPUT_KEYS = {"dir", "formats"}
SECTIONS = {"data": DATA_KEYS, "noise": NOISE_KEYS, "train": TRAIN_KEYS, "output": OUTPUT_KEYS}


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    path: str = ""
    n_scenes: int = 20
    scene_size: int = 512
    channels: int = 1
    m: int = 32
    tau_label: float = 0.01
    split: tuple = (0.7, 0.15, 0.15)
    seed: int = 0
    building_count: tuple = (8, 24)
    building_side: tuple = (16, 64)
    building_intensity: tuple = (0.55, 0.95)
    background_intensity: tuple = (0.05, 0.45)
    pixel_noise: float = 0.04

    def __post_init__(self):
        if self.source not in ("synthetic", "file"):
            raise ConfigError(f"data source must be synthetic or file, got {self.source!r}")
        if self.source == "file" and not self.path:
            raise ConfigError("data source 'file' requires a path")
        if self.source == "synthetic" and self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1")


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "none"
    epsilon: float = 0.0
    seed: int = 1
    noise_modelsel: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "symmetric", "antisymmetric"):
            raise ConfigError(f"noise type must be none/symmetric/antisymmetric, got {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0,1]")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "run"
    formats: tuple = ("csv", "json")

    def __post_init__(self):
        bad = set(self.formats) - {"csv", "json"}
        if bad or not self.formats:
            raise ConfigError(f"formats must be a subset of csv,json, got {self.formats}")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_seed: int = 2
    network: str = DEFAULT_NETWORK
    output: OutputConfig = field(default_factory=OutputConfig)


def derive_train_seeds(train_seed: int) -> tuple:
    """Fan one train seed out into (shuffle, init1, init2) seeds."""
    state = np.random.SeedSequence(train_seed).generate_state(3)
    return tuple(int(x) for x in state)


def _pair(text: str, name: str, conv=float) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{name} must be two comma-separated values, got {text!r}")
    try:
        return tuple(conv(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _split_triple(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"split must be three comma-separated fractions, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"split: {exc}") from exc


class _Section:
    """Typed accessors over one INI section with error context."""

    def __init__(self, cp, name):
        self.name = name
        self.raw = dict(cp[name]) if cp.has_section(name) else {}

    def get(self, key, default):
        return self.raw.get(key, default)

    def _convert(self, key, default, conv):
        if key not in self.raw:
            return default
        try:
            return conv(self.raw[key])
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key}: {exc}") from exc

    def get_int(self, key, default):
        return self._convert(key, default, int)

    def get_float(self, key, default):
        return self._convert(key, default, float)

    def get_bool(self, key, default):
        if key not in self.raw:
            return default
        text = self.raw[key].strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{self.name}] {key}: not a boolean: {text!r}")


def parse_config_text(text: str, base_dir: str = ".") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc

    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(cp[section]) - SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    d = _Section(cp, "data")
    path = d.get("path", "")
    if path and not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    data = DataConfig(
        source=d.get("source", "synthetic"),
        path=path,
        n_scenes=d.get_int("n_scenes", 20),
        scene_size=d.get_int("scene_size", 512),
        channels=d.get_int("channels", 1),
        m=d.get_int("m", 32),
        tau_label=d.get_float("tau_label", 0.01),
        split=_split_triple(d.get("split", "0.7,0.15,0.15")),
        seed=d.get_int("seed", 0),
        building_count=_pair(d.get("building_count", "8,24"), "building_count", int),
        building_side=_pair(d.get("building_side", "16,64"), "building_side", int),
        building_intensity=_pair(d.get("building_intensity", "0.55,0.95"), "building_intensity"),
        background_intensity=_pair(
            d.get("background_intensity", "0.05,0.45"), "background_intensity"
        ),
        pixel_noise=d.get_float("pixel_noise", 0.04),
    )
    if data.source == "file" and not os.path.isfile(data.path):
        raise ConfigError(f"[data] path does not exist: {data.path}")

    nz = _Section(cp, "noise")
    noise = NoiseConfig(
        kind=nz.get("type", "none"),
        epsilon=nz.get_float("epsilon", 0.0),
        seed=nz.get_int("seed", 1),
        noise_modelsel=nz.get_bool("noise_modelsel", False),
    )

    tr = _Section(cp, "train")
    train_seed = tr.get_int("seed", 2)
    shuffle_seed, init_seed_1, init_seed_2 = derive_train_seeds(train_seed)
    train = TrainConfig(
        algo=tr.get("algo", "canc"),
        lr=tr.get_float("lr", 0.05),
        t_max=tr.get_int("t_max", 30),
        t_k=tr.get_int("t_k", 10),
        batch_size=tr.get_int("batch_size", 64),
        n_max=tr.get_int("n_max", 0),
        tau_f=tr.get_float("tau_f", 0.45),
        swap_rate=tr.get_float("swap_rate", 0.05),
        swap_mode="one_minus_r" if tr.get_bool("ablation_s_equals_1_minus_r", False) else "fixed",
        persist_swaps=tr.get_bool("persist_swaps", False),
        shuffle_seed=shuffle_seed,
        init_seed_1=init_seed_1,
        init_seed_2=init_seed_2,
    )

    out = _Section(cp, "output")
    formats = tuple(p.strip() for p in out.get("formats", "csv,json").split(",") if p.strip())
    output = OutputConfig(dir=out.get("dir", "run"), formats=formats)

    return ExperimentConfig(
        data=data,
        noise=noise,
        train=train,
        train_seed=train_seed,
        network=tr.get("network", DEFAULT_NETWORK),
        output=output,
    )


def load_config(path) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, base_dir=os.path.dirname(os.path.abspath(path)))
