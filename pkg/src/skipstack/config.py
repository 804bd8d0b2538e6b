"""Experiment configuration: one flat record driving every CLI verb.

A config comes from a JSON file plus flag overrides (flags win); its
canonical SHA-256 goes into every run manifest so outputs are traceable
to the exact settings that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .dataset import DatasetConfig
from .encoder import CodecConfig
from .features import SkipSchedule
from .pipeline import RecognitionConfig


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for the model, schedule, codec, classifier and harness."""

    seed: int
    # latent model
    k: int = 4
    d: int = 8
    gammas: tuple[float, ...] = (1.0, 1.0, 8.0, 8.0)
    c: float = 0.1
    sigma: float = 0.0
    # skip schedule: base_tau 0 derives the skip from the frame count
    base_tau: float = 0.01
    frames: int = 96
    levels: int = 3
    exclude: tuple[int, ...] = ()
    # descriptor/codec parameters
    window: int = 6
    pca_components: int = 0
    gmm_components: int = 8
    train_budget: int = 20000
    renormalize: bool = True
    # classifier: cv_folds 0 trains at the fixed C, > 0 cross-validates
    svm_c: float = 100.0
    cv_folds: int = 0
    # experiment harness
    trials: int = 200
    delta: float = 0.1
    out_dir: str = "out"
    # synthetic dataset
    n_classes: int = 5
    speeds: tuple[int, ...] = (1, 2, 4)
    samples_per_cell: int = 10
    channels: int = 3
    harmonics: int = 3
    jitter: float = 0.25
    noise_sigma: float = 0.33
    train_fraction: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        for name in ("gammas", "speeds", "exclude"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.base_tau < 0:
            raise ValueError(f"base_tau must be >= 0, got {self.base_tau}")
        if self.base_tau == 0 and self.frames < 1:
            raise ValueError("either base_tau or frames must be positive")
        if not 0 <= self.levels <= 5:
            raise ValueError(f"levels must lie in [0, 5], got {self.levels}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.cv_folds < 0:
            raise ValueError(f"cv_folds must be >= 0, got {self.cv_folds}")

    @property
    def schedule_base_tau(self) -> float:
        return self.base_tau if self.base_tau > 0 else 1.0 / self.frames


def schedule_of(config: ExperimentConfig) -> SkipSchedule:
    include = tuple(l not in config.exclude for l in range(config.levels + 1))
    return SkipSchedule(
        base_tau=config.schedule_base_tau, levels=config.levels, include=include
    )


def dataset_config_of(config: ExperimentConfig) -> DatasetConfig:
    return DatasetConfig(
        n_classes=config.n_classes,
        speeds=config.speeds,
        samples_per_cell=config.samples_per_cell,
        frames=config.frames,
        channels=config.channels,
        harmonics=config.harmonics,
        jitter=config.jitter,
        noise_sigma=config.noise_sigma,
        train_fraction=config.train_fraction,
        seed=config.seed,
    )


def codec_config_of(config: ExperimentConfig) -> CodecConfig:
    return CodecConfig(
        k_components=config.gmm_components,
        train_budget=config.train_budget,
        pca_components=config.pca_components,
        renormalize=config.renormalize,
    )


def recognition_config_of(config: ExperimentConfig) -> RecognitionConfig:
    return RecognitionConfig(
        window=config.window, codec=codec_config_of(config), svm_c=config.svm_c
    )


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional JSON file plus flag overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config fields: {', '.join(sorted(unknown))}")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    if "seed" not in data:
        raise ValueError("seed is mandatory: set it in the config file or pass --seed")
    return ExperimentConfig(**data)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    record = asdict(config)
    canonical = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
