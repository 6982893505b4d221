"""Run configuration: one JSON document, every key optional."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .cleaning import L1Config
from .forest import ForestConfig
from .model import DEFAULT_CROPS, TimeGrid
from .preprocess import PreprocessConfig
from .synth import NoiseSpec

LEVELS = ("L1", "L2", "L3")
EVAL_LEVELS = ("UNCLEAN",) + LEVELS


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    plots: str | None = None
    pixels: str | None = None
    masks: str | None = None
    seeds: str | None = None
    truth: str | None = None

    @classmethod
    def from_dir(cls, d) -> "Paths":
        """Standard file names as written by ``gtclean synth``; absent files stay None."""
        d = Path(d)
        names = {"plots": "plots.geojson", "pixels": "pixels.csv", "masks": "masks.geojson",
                 "seeds": "seeds.csv", "truth": "truth.csv"}
        return cls(**{k: str(d / v) if (d / v).exists() else None for k, v in names.items()})


@dataclass
class CleaningConfig:
    ndvi_max_min: float = 0.40
    flat_var_max: float = 0.005
    rough_min: float = 0.01
    plot_survival_min: float = 0.3
    k: int = 8
    kmeans_max_iter: int = 300
    kmeans_n_init: int = 10
    k_diagnostics: tuple = (4, 12)
    min_seed_support: int = 5
    l1: L1Config = field(default_factory=L1Config)


@dataclass
class SynthConfig:
    n_plots_per_crop: int = 10
    pixels_per_plot: int = 20
    acquisition_step: int = 5
    seeds_per_crop: int = 10
    n_districts: int = 4
    season_year: int = 2024
    noise: NoiseSpec = field(default_factory=NoiseSpec)


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    crops: tuple = DEFAULT_CROPS
    grid: TimeGrid = field(default_factory=TimeGrid)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0
    levels: tuple = LEVELS
    test_fraction: float = 0.3

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self), default=str))

    def validate(self) -> "RunConfig":
        c = self.cleaning
        if not 0 <= c.ndvi_max_min <= 1:
            raise ConfigError("ndvi_max_min must be in [0, 1]")
        if not 0 <= c.plot_survival_min <= 1:
            raise ConfigError("plot_survival_min must be in [0, 1]")
        if c.k < 1 or c.kmeans_n_init < 1:
            raise ConfigError("k and kmeans_n_init must be >= 1")
        if c.flat_var_max < 0 or c.rough_min < 0:
            raise ConfigError("cluster thresholds must be >= 0")
        if len(self.crops) < 2:
            raise ConfigError("need at least two crops")
        w = self.preprocess.smooth_window
        if w < 1 or w % 2 == 0 or w > self.grid.n_steps:
            raise ConfigError(f"smooth_window must be odd and in [1, {self.grid.n_steps}]")
        bad = [lv for lv in self.levels if lv not in LEVELS]
        if bad:
            raise ConfigError(f"unknown level(s): {', '.join(bad)}; choose from {', '.join(LEVELS)}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        return self

    def check_inputs(self) -> None:
        p = self.paths
        for name in ("plots", "pixels"):
            if getattr(p, name) is None:
                raise ConfigError(f"no {name} file given (use --{name}, --data or paths.{name})")
        for name in ("plots", "pixels", "masks", "seeds", "truth"):
            v = getattr(p, name)
            if v is not None and not Path(v).is_file():
                raise ConfigError(f"{name} file not found: {v}")


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    kwargs = {}
    for k, v in data.items():
        sub = _NESTED.get((cls, k))
        if sub is not None:
            v = _build(sub, v, f"{where}.{k}")
        elif isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


_NESTED = {
    (RunConfig, "paths"): Paths,
    (RunConfig, "grid"): TimeGrid,
    (RunConfig, "preprocess"): PreprocessConfig,
    (RunConfig, "cleaning"): CleaningConfig,
    (RunConfig, "forest"): ForestConfig,
    (RunConfig, "synth"): SynthConfig,
    (CleaningConfig, "l1"): L1Config,
    (SynthConfig, "noise"): NoiseSpec,
}


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config").validate()


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from None
    return config_from_dict(data)


def stage_seed(master: int, stage: str) -> int:
    """Stable per-stage seed from the master seed and the stage name."""
    digest = hashlib.sha256(f"{master}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")
