"""Differential feature extraction at one skip and stacking across skips.

The extractor reads a signal at a time skip tau and emits one feature per
sample pair: the coefficient difference matrix P (synthetic route) or a
windowed frame-difference descriptor (real-series route). Stacking repeats
the extraction at skips tau, 2*tau, ..., (L+1)*tau and concatenates, so the
representation contains each action content at several effective speeds.
Levels can be masked out to study reduced schedules, e.g. keeping only the
every-2nd-frame features.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .latent import LatentModel, sample_difference_matrix
from .streams import as_generator, stream

# guards float-division noise in floor(1/tau); 1/(0.1*2) is 4.999...
FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class SkipSchedule:
    """Skips tau_l = (l+1) * base_tau for levels l = 0..levels.

    ``include`` masks levels out of the stack (True keeps the level); the
    default keeps every level. A schedule keeping levels {1} out of 0..1 is
    labelled "L=1-0", matching the reduced configurations in the result
    tables.
    """

    base_tau: float
    levels: int
    include: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        if self.base_tau <= 0:
            raise ValueError(f"base_tau must be positive, got {self.base_tau}")
        if self.levels < 0:
            raise ValueError(f"levels must be >= 0, got {self.levels}")
        if (self.levels + 1) * self.base_tau > 1.0 + FLOOR_EPS:
            raise ValueError(
                f"deepest skip (L+1)*base_tau = {(self.levels + 1) * self.base_tau:.6g} "
                f"exceeds the normalized duration 1"
            )
        if not self.include:
            object.__setattr__(self, "include", (True,) * (self.levels + 1))
        if len(self.include) != self.levels + 1:
            raise ValueError("include mask must have levels+1 entries")
        if not any(self.include):
            raise ValueError("schedule must keep at least one level")

    @classmethod
    def from_frames(cls, frames: int, levels: int, include: tuple[bool, ...] = ()) -> "SkipSchedule":
        """Schedule for a series of ``frames`` samples: base_tau = 1/frames."""
        if frames < 1:
            raise ValueError(f"frames must be >= 1, got {frames}")
        return cls(base_tau=1.0 / frames, levels=levels, include=include)

    def tau(self, level: int) -> float:
        if not 0 <= level <= self.levels:
            raise ValueError(f"level must lie in [0, {self.levels}], got {level}")
        return (level + 1) * self.base_tau

    def budget(self, level: int) -> int:
        """Feature count floor(1 / tau_l) at one level."""
        return int(np.floor(1.0 / self.tau(level) + FLOOR_EPS))

    @property
    def included_levels(self) -> tuple[int, ...]:
        return tuple(l for l in range(self.levels + 1) if self.include[l])

    @property
    def label(self) -> str:
        text = f"L={self.levels}"
        for l in range(self.levels + 1):
            if not self.include[l]:
                text += f"-{l}"
        return text


def parse_schedule_label(label: str, base_tau: float) -> SkipSchedule:
    """Inverse of ``SkipSchedule.label``, e.g. "L=2-0" drops level 0."""
    body = label.strip()
    if not body.startswith("L="):
        raise ValueError(f"schedule label must start with 'L=', got {label!r}")
    parts = body[2:].split("-")
    try:
        levels = int(parts[0])
        excluded = {int(p) for p in parts[1:]}
    except ValueError as exc:
        raise ValueError(f"malformed schedule label {label!r}") from exc
    if any(e > levels or e < 0 for e in excluded):
        raise ValueError(f"excluded level out of range in {label!r}")
    include = tuple(l not in excluded for l in range(levels + 1))
    return SkipSchedule(base_tau=base_tau, levels=levels, include=include)


@dataclass
class FeatureMatrix:
    """Coefficient differences ``p`` (k x T) and, optionally, the observed
    features ``f`` (d x T); columns carry their level and skip."""

    p: np.ndarray
    f: np.ndarray | None
    level_of_column: np.ndarray
    tau_of_column: np.ndarray

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        t = self.p.shape[1]
        self.level_of_column = np.asarray(self.level_of_column, dtype=int)
        self.tau_of_column = np.asarray(self.tau_of_column, dtype=float)
        if self.level_of_column.shape != (t,) or self.tau_of_column.shape != (t,):
            raise ValueError("per-column tags must match the column count")
        if np.max(np.abs(self.p), initial=0.0) > 2.0:
            raise ValueError("coefficient differences must lie in [-2, 2]")
        if self.f is not None:
            self.f = np.asarray(self.f, dtype=float)
            if self.f.shape[1] != t:
                raise ValueError("f must have the same column count as p")

    @property
    def columns(self) -> int:
        return self.p.shape[1]


@dataclass
class SeriesDescriptorSet:
    """Windowed difference descriptors of a real series (N x D) with the
    window centers as normalized temporal locations."""

    descriptors: np.ndarray
    locations: np.ndarray
    level_of_row: np.ndarray

    def __post_init__(self) -> None:
        self.descriptors = np.asarray(self.descriptors, dtype=float)
        self.locations = np.asarray(self.locations, dtype=float)
        self.level_of_row = np.asarray(self.level_of_row, dtype=int)
        n = self.descriptors.shape[0]
        if self.locations.shape != (n,) or self.level_of_row.shape != (n,):
            raise ValueError("per-row tags must match the descriptor count")
        if n and (self.locations.min() < 0.0 or self.locations.max() > 1.0):
            raise ValueError("locations must lie in [0, 1]")


def build_feature_matrix(
    model: LatentModel,
    tau: float,
    rng: np.random.Generator,
    *,
    n_cols: int | None = None,
    observe: bool | None = None,
    level: int = 0,
) -> FeatureMatrix:
    """Extract T = floor(1/tau) differential features at a single skip.

    ``n_cols`` overrides the sample budget (conditioning experiments sweep
    T independently of tau). ``observe`` forces or suppresses the noisy
    d-dimensional feature matrix f = xbar @ p + (eps' - eps); by default f
    is produced exactly when the model carries noise (sigma > 0).
    """
    rng = as_generator(rng)
    t = n_cols if n_cols is not None else int(np.floor(1.0 / tau + FLOOR_EPS))
    if t < 1:
        raise ValueError(f"sample budget T must be >= 1, got {t} (tau={tau})")
    p = sample_difference_matrix(model, tau, t, rng)
    if observe is None:
        observe = model.sigma > 0
    f = None
    if observe:
        f = model.xbar @ p
        if model.sigma > 0:
            eps = rng.normal(0.0, model.sigma, size=(model.d, t))
            eps_tau = rng.normal(0.0, model.sigma, size=(model.d, t))
            f = f + (eps_tau - eps)
    return FeatureMatrix(
        p=p,
        f=f,
        level_of_column=np.full(t, level),
        tau_of_column=np.full(t, tau),
    )


def mifs_stack(
    model: LatentModel,
    schedule: SkipSchedule,
    seed,
    *,
    observe: bool | None = None,
) -> FeatureMatrix:
    """Concatenate single-skip extractions over the schedule's levels.

    Each level draws from the sub-stream (seed, level), so the output for a
    given level never depends on which other levels are present and levels
    may be extracted concurrently.
    """
    blocks = [
        build_feature_matrix(
            model,
            schedule.tau(level),
            stream(seed, level),
            observe=observe,
            level=level,
        )
        for level in schedule.included_levels
    ]
    return FeatureMatrix(
        p=np.concatenate([b.p for b in blocks], axis=1),
        f=None
        if blocks[0].f is None
        else np.concatenate([b.f for b in blocks], axis=1),
        level_of_column=np.concatenate([b.level_of_column for b in blocks]),
        tau_of_column=np.concatenate([b.tau_of_column for b in blocks]),
    )


def extract_series_descriptors(
    series: np.ndarray,
    schedule: SkipSchedule,
    window: int,
) -> SeriesDescriptorSet:
    """Windowed frame-difference descriptors at every included level.

    Level l reads every (l+1)-th frame of the series, takes consecutive
    differences and slides a length-``window`` window over them; each
    descriptor is the concatenation of the differences in its window
    (dimension window * channels) located at the window center, normalized
    within the subsampled sequence.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    frames, channels = series.shape
    if channels < 1:
        raise ValueError("series must have at least one channel")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if frames < (schedule.levels + 1) * window + 1:
        raise ValueError(
            f"series of {frames} frames is shorter than one window at the "
            f"deepest level (needs {(schedule.levels + 1) * window + 1})"
        )
    desc_blocks, loc_blocks, level_blocks = [], [], []
    for level in schedule.included_levels:
        sub = series[:: level + 1]
        diffs = np.diff(sub, axis=0)
        n_windows = diffs.shape[0] - window + 1
        if n_windows < 1:
            raise ValueError(
                f"series too short for level {level}: {diffs.shape[0]} differences "
                f"< window {window}"
            )
        idx = np.arange(n_windows)[:, None] + np.arange(window)[None, :]
        desc_blocks.append(diffs[idx].reshape(n_windows, window * channels))
        loc_blocks.append((np.arange(n_windows) + window / 2.0) / diffs.shape[0])
        level_blocks.append(np.full(n_windows, level))
    return SeriesDescriptorSet(
        descriptors=np.concatenate(desc_blocks, axis=0),
        locations=np.concatenate(loc_blocks),
        level_of_row=np.concatenate(level_blocks),
    )


@dataclass(frozen=True)
class LevelCost:
    level: int
    tau: float
    count: int
    relative: float


@dataclass(frozen=True)
class CostReport:
    """Per-level feature counts and cost relative to a full level-0 pass."""

    rows: tuple[LevelCost, ...]
    total_relative: float


def level_cost_report(schedule: SkipSchedule) -> CostReport:
    """Feature-count cost of each included level relative to level 0.

    The reference count is the full level-0 budget floor(1/base_tau) even
    when level 0 itself is masked out, so reduced schedules report their
    saving against the standard single-skip pass.
    """
    base = int(np.floor(1.0 / schedule.base_tau + FLOOR_EPS))
    rows = tuple(
        LevelCost(
            level=level,
            tau=schedule.tau(level),
            count=schedule.budget(level),
            relative=schedule.budget(level) / base,
        )
        for level in schedule.included_levels
    )
    return CostReport(rows=rows, total_relative=sum(r.relative for r in rows))


def save_feature_matrix(path, fm: FeatureMatrix, which: str = "p", extra: dict | None = None) -> None:
    """Persist one of the two matrices ("p" or "f") in the binary container."""
    if which == "p":
        matrix, kind = fm.p, "P"
    elif which == "f":
        if fm.f is None:
            raise ValueError("this feature matrix carries no observed features")
        matrix, kind = fm.f, "F"
    else:
        raise ValueError(f"which must be 'p' or 'f', got {which!r}")
    meta = {"taus": [float(t) for t in np.unique(fm.tau_of_column)]}
    if extra:
        meta.update(extra)
    container.write_matrix(path, matrix, kind, fm.level_of_column, extra=meta)


def save_descriptors(path, ds: SeriesDescriptorSet, extra: dict | None = None) -> None:
    container.write_matrix(
        path,
        ds.descriptors,
        "DESC",
        ds.level_of_row,
        extra=extra,
        locations=ds.locations,
    )
