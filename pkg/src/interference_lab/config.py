"""Experiment configuration: nested dataclasses loaded from YAML.

Every section has complete defaults, so an empty file is a valid config.
Unknown keys anywhere are rejected with the dotted path of the offender.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import DEFAULT_SEEDS
from .errors import ConfigError


@dataclass
class DecaySection:
    beta: float = 0.20
    psi: float = 0.5


@dataclass
class NoiseSection:
    sigma: float = 0.5


@dataclass
class SynthSection:
    d_loc: int = 12
    d_nom: int = 1024
    curvature_mix: float = 0.8
    bandwidth: float = 3.0
    near_spread: float = 0.75
    data_seed: int = 2024
    n_targets: int = 100
    n_pool: int = 10_000


@dataclass
class DataSection:
    dir: str | None = None
    # first n_targets rows are targets, the rest the competitor pool
    embeddings: str | None = None
    # one whitespace-separated keyword document per stored row
    tokens: str | None = None
    drm_embeddings: str | None = None
    drm_lists: str | None = None
    synth: SynthSection = field(default_factory=SynthSection)


@dataclass
class SppSection:
    n_pairs: int = 100


@dataclass
class CapmassSection:
    dims: tuple = (8, 16, 32, 64, 128)
    angles_deg: tuple = (10, 20, 30, 45, 60)
    n_samples: int = 1_000_000
    min_hits: float = 20.0


@dataclass
class DimsSection:
    k: int = 10
    lb_sample: int | None = 2000


@dataclass
class HazardSection:
    mu: float = 0.01
    lambda0: float = 10.0
    alpha: float = 0.5
    n_items: int = 10_000
    t_grid: tuple = (1.0, 100.0, 20)  # geometric grid (start, stop, count), days
    beta_shape: float = 1.0
    c_scale: float = 1.0
    pop_grid: tuple = (1e3, 1e5, 21)
    stream_lambda0: float = 1.0
    stream_alpha: float = 0.459
    stream_horizon: float = 1e4
    n_streams: int = 20


@dataclass
class ForgettingSection:
    levels: tuple = (0, 10, 50, 100, 200, 500, 1000, 5000, 10000)
    bins: int = 10
    horizon: float = 30.0
    backends: tuple = ("vector", "graph", "bm25")
    edge_threshold: float = 0.7
    damping: float = 0.85


@dataclass
class DrmSection:
    theta_start: float = 0.50
    theta_stop: float = 0.95
    theta_step: float = 0.01
    n_lists: int = 24
    spread: float = 0.3
    delta_true: float = 0.0

    def grid(self) -> np.ndarray:
        n = int(round((self.theta_stop - self.theta_start) / self.theta_step)) + 1
        return np.round(self.theta_start + self.theta_step * np.arange(n), 10)


@dataclass
class SpacingSection:
    windows: dict = field(default_factory=lambda: {"massed": 120 / 86400, "short": 2 / 24, "medium": 2.0, "long": 14.0})
    sigma: float = 0.25
    n_distractors: int = 10_000
    n_reps: int = 3
    test_time: float = 30.0


@dataclass
class TotSection:
    pca_dim: int = 96
    noise: float = 1.5 / 96**0.5
    n_queries: int = 100


@dataclass
class SolutionsSection:
    n_competitors: int = 5000
    pca_dims: tuple = (64, 128, 256, 512)
    pad_dims: tuple = (2048, 4096)
    rp_dims: tuple = (32, 64, 128, 256)
    gs_vectors: int = 500
    kmeans_ks: tuple = (50, 100, 250, 500, 1000, 2500)
    pad_noise: str = "original"


@dataclass
class ExperimentConfig:
    seeds: tuple = DEFAULT_SEEDS
    n_boot: int = 10_000
    decay: DecaySection = field(default_factory=DecaySection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    data: DataSection = field(default_factory=DataSection)
    spp: SppSection = field(default_factory=SppSection)
    capmass: CapmassSection = field(default_factory=CapmassSection)
    dims: DimsSection = field(default_factory=DimsSection)
    hazard: HazardSection = field(default_factory=HazardSection)
    forgetting: ForgettingSection = field(default_factory=ForgettingSection)
    drm: DrmSection = field(default_factory=DrmSection)
    spacing: SpacingSection = field(default_factory=SpacingSection)
    tot: TotSection = field(default_factory=TotSection)
    solutions: SolutionsSection = field(default_factory=SolutionsSection)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _number(value, kind, path: str):
    # YAML 1.1 reads "1e6" as a string, so numeric strings are accepted too
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if kind is int:
        if x != int(x):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(x)
    return x


def _build(cls, raw, path: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(raw).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        where = ", ".join(f"{path}.{k}" if path else k for k in unknown)
        raise ConfigError(f"unknown config key(s): {where}")
    kwargs = {}
    for name, value in raw.items():
        f = known[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        sub = f"{path}.{name}" if path else name
        if value is None and not dataclasses.is_dataclass(default):
            kwargs[name] = None
        elif dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, sub)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{sub}: expected a list")
            kwargs[name] = tuple(value)
        elif isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{sub}: expected a mapping")
            kwargs[name] = {str(k): float(v) for k, v in value.items()}
        elif isinstance(default, bool) or default is None or isinstance(default, str):
            kwargs[name] = value
        elif isinstance(default, (int, float)):
            kwargs[name] = _number(value, int if isinstance(default, int) else float, sub)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, raw or {}, "")
    if not cfg.seeds:
        raise ConfigError("seeds must be nonempty")
    bad = set(cfg.forgetting.backends) - {"vector", "graph", "bm25"}
    if bad:
        raise ConfigError(f"forgetting.backends: unknown backend(s) {sorted(bad)}")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw)
