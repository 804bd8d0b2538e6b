"""Generative model of multi-speed temporal action content.

A signal is a linear mixture of ``k`` unit-norm latent directions whose
mixing coefficients are bounded, zero-mean and decorrelated across
components. Each coefficient carries a dynamics index ``gamma``: the
correlation between the coefficient now and one skip ``tau`` later decays
like ``1 - Theta(exp(-gamma/tau))``, so large gamma means a slow (nearly
static) component and small gamma a fast one.

Coefficients are simulated as Rademacher pairs: ``alpha`` is a fair +/-1
draw and the value one skip later flips sign with probability ``q`` drawn
uniformly from ``[exp(-gamma/tau)/2, (1+c) * exp(-gamma/tau)/2]``. That
reproduces the second-moment band ``E[(alpha' - alpha)^2] in
[2 exp(-gamma/tau), 2 (1+c) exp(-gamma/tau)]`` that the conditioning
analysis relies on, with no extra free parameters. Pairs at distinct sample
times are independent draws.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .streams import as_generator, stream

MAX_COLUMN_COHERENCE = 0.99


@dataclass(frozen=True)
class MixingPair:
    """One coefficient sample and its value one time skip later."""

    alpha_t: float
    alpha_t_tau: float
    tau: float


@dataclass
class LatentModel:
    """Mixture of ``k`` latent directions in ``d`` dimensions.

    ``gammas`` must be sorted non-decreasing (slowest component last), ``c``
    is the slack of the dynamics band, ``sigma`` the additive noise level.
    ``xbar`` holds the latent directions as orthonormal columns (d x k).
    """

    k: int
    d: int
    gammas: np.ndarray
    c: float
    sigma: float
    seed: int
    xbar: np.ndarray

    def __post_init__(self) -> None:
        self.gammas = np.asarray(self.gammas, dtype=float)
        self.xbar = np.asarray(self.xbar, dtype=float)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.d < self.k:
            raise ValueError(f"d must be >= k, got d={self.d}, k={self.k}")
        if self.gammas.shape != (self.k,):
            raise ValueError(f"gammas must have length k={self.k}, got {self.gammas.shape}")
        if np.any(self.gammas <= 0):
            raise ValueError("gammas must be positive")
        if np.any(np.diff(self.gammas) < 0):
            raise ValueError("gammas must be sorted non-decreasing")
        if not 0.0 <= self.c < 1.0:
            raise ValueError(f"c must lie in [0, 1), got {self.c}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.xbar.shape != (self.d, self.k):
            raise ValueError(f"xbar must be d x k = {(self.d, self.k)}, got {self.xbar.shape}")
        norms = np.linalg.norm(self.xbar, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-8):
            raise ValueError("columns of xbar must have unit norm")
        gram = np.abs(self.xbar.T @ self.xbar)
        np.fill_diagonal(gram, 0.0)
        if np.any(gram >= MAX_COLUMN_COHERENCE):
            raise ValueError("columns of xbar are not well separated")


def new_model(
    k: int,
    d: int,
    gammas,
    c: float,
    sigma: float,
    seed: int,
) -> LatentModel:
    """Build a model with a seeded random orthonormal direction matrix."""
    gammas = np.asarray(gammas, dtype=float)
    raw = stream(seed, 0).standard_normal((d, k))
    q, r = np.linalg.qr(raw)
    # fix the QR sign ambiguity so the matrix is a pure function of the seed
    xbar = q * np.sign(np.diag(r))
    return LatentModel(k=k, d=d, gammas=gammas, c=c, sigma=sigma, seed=seed, xbar=xbar)


def flip_band(gamma: float, tau: float, c: float) -> tuple[float, float]:
    """Valid flip-probability interval for one component at skip ``tau``.

    Raises when the upper endpoint would exceed 1/2, i.e. when the component
    is too fast for this skip to keep the correlation band meaningful.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    decay = np.exp(-gamma / tau)
    lo = 0.5 * decay
    hi = 0.5 * (1.0 + c) * decay
    if hi > 0.5:
        raise ValueError(
            f"gamma too small for tau: flip band upper endpoint "
            f"(1+c)*exp(-gamma/tau)/2 = {hi:.6g} exceeds 1/2 "
            f"(gamma={gamma}, tau={tau}, c={c})"
        )
    return lo, hi


def sample_mixing_pair(
    model: LatentModel,
    signal_index: int,
    tau: float,
    rng: np.random.Generator,
) -> MixingPair:
    """Draw one (alpha_t, alpha_{t+tau}) pair for the given component."""
    if not 0 <= signal_index < model.k:
        raise ValueError(f"signal_index must lie in [0, {model.k}), got {signal_index}")
    lo, hi = flip_band(model.gammas[signal_index], tau, model.c)
    alpha = 1.0 if rng.integers(0, 2) else -1.0
    q = rng.uniform(lo, hi)
    flipped = rng.random() < q
    return MixingPair(alpha_t=alpha, alpha_t_tau=-alpha if flipped else alpha, tau=tau)


def sample_alpha_path(
    model: LatentModel,
    signal_index: int,
    times,
    tau: float,
    rng: np.random.Generator,
) -> list[MixingPair]:
    """Independent mixing pairs at each requested sample time.

    ``times`` must be strictly increasing and satisfy ``t + tau <= 1`` so
    the second member of every pair stays inside the normalized duration.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return []
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if times[0] < 0 or np.any(times + tau > 1.0 + 1e-12):
        raise ValueError("every time must satisfy 0 <= t and t + tau <= 1")
    return [sample_mixing_pair(model, signal_index, tau, rng) for _ in range(times.size)]


def sample_difference_matrix(
    model: LatentModel,
    tau: float,
    n_cols: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """k x n matrix of coefficient differences ``alpha(t+tau) - alpha(t)``.

    Columns are i.i.d.; entries live in {-2, 0, +2}. Row i carries second
    moment ``4 E[q_i]`` inside the dynamics band of component i.
    """
    if n_cols < 1:
        raise ValueError(f"n_cols must be >= 1, got {n_cols}")
    bands = [flip_band(g, tau, model.c) for g in model.gammas]
    p = np.empty((model.k, n_cols))
    for i, (lo, hi) in enumerate(bands):
        alpha = rng.integers(0, 2, size=n_cols) * 2.0 - 1.0
        q = rng.uniform(lo, hi, size=n_cols)
        flipped = rng.random(n_cols) < q
        p[i] = np.where(flipped, -2.0 * alpha, 0.0)
    return p


def save_model(model: LatentModel, path) -> None:
    """Persist as JSON with a row-major direction matrix."""
    doc = {
        "k": model.k,
        "d": model.d,
        "gammas": [float(g) for g in model.gammas],
        "c": model.c,
        "sigma": model.sigma,
        "seed": model.seed,
        "xbar": [float(v) for v in model.xbar.reshape(-1)],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_model(path) -> LatentModel:
    doc = json.loads(Path(path).read_text())
    xbar = np.asarray(doc["xbar"], dtype=float).reshape(doc["d"], doc["k"])
    return LatentModel(
        k=doc["k"],
        d=doc["d"],
        gammas=np.asarray(doc["gammas"], dtype=float),
        c=doc["c"],
        sigma=doc["sigma"],
        seed=doc["seed"],
        xbar=xbar,
    )
