"""Synthetic multi-speed action dataset.

Each class is a band-limited multichannel waveform template; a sample
replays its class template time-compressed by a speed factor, scaled by
a random amplitude, plus white noise. Speed is the nuisance the stacked
features must absorb: reading every s-th frame of a speed-1 sample
visits the same template phases as reading a speed-s sample frame by
frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .streams import stream

ALLOWED_SPEEDS = (1, 2, 3, 4)
MAX_TEMPLATE_ATTEMPTS = 500


@dataclass(frozen=True)
class DatasetConfig:
    """Generation parameters; every sample has ``frames`` x ``channels`` values."""

    n_classes: int = 5
    speeds: tuple[int, ...] = (1, 2, 3)
    samples_per_cell: int = 10
    frames: int = 96
    channels: int = 3
    harmonics: int = 3
    jitter: float = 0.25
    noise_sigma: float = 0.05
    train_fraction: float = 2.0 / 3.0
    max_template_correlation: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        speeds = tuple(self.speeds)
        object.__setattr__(self, "speeds", speeds)
        if not speeds or any(s not in ALLOWED_SPEEDS for s in speeds):
            raise ValueError(f"speeds must be a non-empty subset of {ALLOWED_SPEEDS}")
        if len(set(speeds)) != len(speeds):
            raise ValueError("speeds must not repeat")
        if self.samples_per_cell < 2:
            raise ValueError(
                f"every class/speed cell needs at least 2 samples, got {self.samples_per_cell}"
            )
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.harmonics < 1:
            raise ValueError(f"harmonics must be >= 1, got {self.harmonics}")
        # fastest replay must stay below Nyquist, else compression aliases
        if 2 * self.harmonics * max(speeds) >= self.frames:
            raise ValueError(
                f"{self.harmonics} harmonics at speed {max(speeds)} alias over "
                f"{self.frames} frames"
            )
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError(f"jitter must lie in [0, 1), got {self.jitter}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if not 0.0 < self.max_template_correlation <= 1.0:
            raise ValueError(
                f"max_template_correlation must lie in (0, 1], got "
                f"{self.max_template_correlation}"
            )

    @property
    def n_samples(self) -> int:
        return self.n_classes * len(self.speeds) * self.samples_per_cell


def render_template(coeffs: np.ndarray, frames: int, speed: int = 1) -> np.ndarray:
    """Evaluate one class template on a speed-compressed frame grid.

    ``coeffs`` has shape (channels, harmonics, 2) holding cosine and sine
    weights; frame j reads phase speed * j / frames of the unit-period
    waveform. Returns (frames, channels).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    phase = 2.0 * np.pi * speed * np.arange(frames)[:, None] / frames
    orders = np.arange(1, coeffs.shape[1] + 1)[None, :]
    return np.cos(phase * orders) @ coeffs[:, :, 0].T + np.sin(phase * orders) @ coeffs[:, :, 1].T


def template_correlation_matrix(coeffs: np.ndarray, frames: int) -> np.ndarray:
    """Pairwise correlation of the speed-1 class waveforms, channels flattened."""
    waves = np.stack([render_template(c, frames).ravel() for c in coeffs])
    return np.corrcoef(waves)


def _draw_templates(config: DatasetConfig, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample class templates until all pairs decorrelate."""
    for _ in range(MAX_TEMPLATE_ATTEMPTS):
        coeffs = rng.standard_normal(
            (config.n_classes, config.channels, config.harmonics, 2)
        )
        power = np.sum(coeffs**2, axis=(2, 3)) / 2.0
        coeffs /= np.sqrt(power)[:, :, None, None]  # unit-RMS waveform per channel
        corr = template_correlation_matrix(coeffs, config.frames)
        off_diagonal = corr[~np.eye(config.n_classes, dtype=bool)]
        if np.all(np.abs(off_diagonal) < config.max_template_correlation):
            return coeffs
    raise ValueError(
        f"no template set with pairwise correlation below "
        f"{config.max_template_correlation} in {MAX_TEMPLATE_ATTEMPTS} attempts"
    )


@dataclass
class SyntheticActionDataset:
    """Samples plus a stratified train/test split.

    ``series`` is (n, frames, channels) float32; every class appears at
    every speed on both sides of the split.
    """

    series: np.ndarray
    labels: np.ndarray
    speeds: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    template_coeffs: np.ndarray

    def __post_init__(self) -> None:
        n = self.series.shape[0]
        if self.series.ndim != 3:
            raise ValueError("series must be (n, frames, channels)")
        if not np.isfinite(self.series).all():
            raise ValueError("series must be finite")
        if self.labels.shape != (n,) or self.speeds.shape != (n,):
            raise ValueError("labels and speeds must have one entry per sample")
        merged = np.concatenate([self.train_idx, self.test_idx])
        if not np.array_equal(np.sort(merged), np.arange(n)):
            raise ValueError("train/test split must partition the samples")
        for side, idx in (("train", self.train_idx), ("test", self.test_idx)):
            cells = set(zip(self.labels[idx].tolist(), self.speeds[idx].tolist()))
            expected = {
                (c, s)
                for c in np.unique(self.labels).tolist()
                for s in np.unique(self.speeds).tolist()
            }
            if cells != expected:
                raise ValueError(f"{side} split is missing a class/speed cell")

    @property
    def n_classes(self) -> int:
        return int(np.unique(self.labels).size)

    @property
    def frames(self) -> int:
        return int(self.series.shape[1])


def _split_counts(n_cells: int, cell_size: int, fraction: float) -> np.ndarray:
    """Per-cell training counts: floors plus a remainder pass, each cell
    keeping at least one sample on both sides."""
    target = int(round(n_cells * cell_size * fraction))
    base = int(np.clip(np.floor(cell_size * fraction), 1, cell_size - 1))
    counts = np.full(n_cells, base, dtype=int)
    for i in range(n_cells):
        if counts.sum() >= target:
            break
        if counts[i] < cell_size - 1:
            counts[i] += 1
    return counts


def generate_dataset(config: DatasetConfig) -> SyntheticActionDataset:
    """Deterministic dataset from the config seed.

    Samples are laid out class-major, then by speed in config order, then
    by draw index; the split takes the leading draws of every cell.
    """
    coeffs = _draw_templates(config, stream(config.seed, 0))
    spc = config.samples_per_cell
    n = config.n_samples
    series = np.empty((n, config.frames, config.channels))
    labels = np.empty(n, dtype=int)
    speeds = np.empty(n, dtype=int)
    row = 0
    for cls in range(config.n_classes):
        for s in config.speeds:
            rng = stream(config.seed, 1, cls, s)
            base = render_template(coeffs[cls], config.frames, s)
            amplitude = rng.uniform(1.0 - config.jitter, 1.0 + config.jitter, size=spc)
            noise = config.noise_sigma * rng.standard_normal(
                (spc, config.frames, config.channels)
            )
            series[row : row + spc] = amplitude[:, None, None] * base[None] + noise
            labels[row : row + spc] = cls
            speeds[row : row + spc] = s
            row += spc
    n_cells = config.n_classes * len(config.speeds)
    counts = _split_counts(n_cells, spc, config.train_fraction)
    starts = np.arange(n_cells) * spc
    train_idx = np.concatenate(
        [start + np.arange(count) for start, count in zip(starts, counts)]
    )
    test_idx = np.setdiff1d(np.arange(n), train_idx)
    return SyntheticActionDataset(
        series=series.astype("<f4"),
        labels=labels,
        speeds=speeds,
        train_idx=train_idx,
        test_idx=test_idx,
        template_coeffs=coeffs,
    )


def save_dataset(path, ds: SyntheticActionDataset) -> None:
    """One JSON header line, then the series as little-endian float32."""
    header = {
        "channels": int(ds.series.shape[2]),
        "coeffs": ds.template_coeffs.tolist(),
        "frames": int(ds.series.shape[1]),
        "labels": ds.labels.tolist(),
        "speeds": ds.speeds.tolist(),
        "test_idx": ds.test_idx.tolist(),
        "train_idx": ds.train_idx.tolist(),
    }
    with open(Path(path), "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(ds.series, dtype="<f4").tobytes())


def load_dataset(path) -> SyntheticActionDataset:
    with open(Path(path), "rb") as fh:
        header = json.loads(fh.readline().decode())
        raw = fh.read()
    n = len(header["labels"])
    expected = n * header["frames"] * header["channels"] * 4
    if len(raw) != expected:
        raise ValueError(f"series payload is {len(raw)} bytes, expected {expected}")
    series = (
        np.frombuffer(raw, dtype="<f4")
        .reshape(n, header["frames"], header["channels"])
        .copy()
    )
    return SyntheticActionDataset(
        series=series,
        labels=np.asarray(header["labels"], dtype=int),
        speeds=np.asarray(header["speeds"], dtype=int),
        train_idx=np.asarray(header["train_idx"], dtype=int),
        test_idx=np.asarray(header["test_idx"], dtype=int),
        template_coeffs=np.asarray(header["coeffs"], dtype=float),
    )
