"""End-to-end recognition runs: extract, encode, train, evaluate.

The grid runner reproduces the level-comparison experiment shape: each
single level on its own versus the stacked schedules, all sharing one
dataset and seed so the comparison is paired.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .classify import EvalReport, evaluate, svm_train
from .dataset import SyntheticActionDataset
from .encoder import CodecConfig, encode_dataset, fit_codec
from .features import (
    SeriesDescriptorSet,
    SkipSchedule,
    extract_series_descriptors,
    level_cost_report,
)
from .streams import stream


@dataclass(frozen=True)
class RecognitionConfig:
    window: int = 6
    codec: CodecConfig = field(default_factory=CodecConfig)
    svm_c: float = 100.0
    epochs: int = 200
    tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


@dataclass
class RecognitionRun:
    label: str
    report: EvalReport
    cost_total: float


def single_level_schedule(frames: int, level: int) -> SkipSchedule:
    """Schedule reading only level ``level`` (mask drops everything below)."""
    include = tuple(l == level for l in range(level + 1))
    return SkipSchedule.from_frames(frames, level, include)


def mifs_schedule(frames: int, levels: int) -> SkipSchedule:
    return SkipSchedule.from_frames(frames, levels)


def extract_all(
    dataset: SyntheticActionDataset, schedule: SkipSchedule, window: int
) -> list[SeriesDescriptorSet]:
    return [
        extract_series_descriptors(sample, schedule, window)
        for sample in dataset.series
    ]


def run_schedule(
    dataset: SyntheticActionDataset,
    schedule: SkipSchedule,
    config: RecognitionConfig,
    seed: int,
    salt: int = 0,
) -> RecognitionRun:
    """One full pass: codec fit on the training split only, report on test."""
    descriptors = extract_all(dataset, schedule, config.window)
    train_descs = [descriptors[i] for i in dataset.train_idx]
    test_descs = [descriptors[i] for i in dataset.test_idx]
    codec = fit_codec(train_descs, config.codec, rng=stream(seed, 2, salt))
    x_train, _ = encode_dataset(codec, train_descs)
    x_test, _ = encode_dataset(codec, test_descs)
    classifier = svm_train(
        x_train,
        dataset.labels[dataset.train_idx],
        c=config.svm_c,
        epochs=config.epochs,
        tol=config.tol,
        seed=(seed, 3, salt),
    )
    report = evaluate(classifier, x_test, dataset.labels[dataset.test_idx])
    return RecognitionRun(
        label=schedule.label,
        report=report,
        cost_total=level_cost_report(schedule).total_relative,
    )


def grid_schedules(frames: int, max_level: int) -> list[SkipSchedule]:
    """Single levels 0..max_level followed by stacks L=1..max_level."""
    return [single_level_schedule(frames, level) for level in range(max_level + 1)] + [
        mifs_schedule(frames, levels) for levels in range(1, max_level + 1)
    ]


def recognition_grid(
    dataset: SyntheticActionDataset,
    max_level: int,
    config: RecognitionConfig,
    seed: int,
) -> dict[str, RecognitionRun]:
    """One run per grid schedule, keyed by schedule label."""
    schedules = grid_schedules(dataset.frames, max_level)
    runs = {}
    for salt, schedule in enumerate(schedules):
        run = run_schedule(dataset, schedule, config, seed, salt=salt)
        runs[run.label] = run
    return runs
