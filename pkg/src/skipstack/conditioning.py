"""Condition-number bounds, concentration checks and singular spectra.

Validates the conditioning theory numerically: the empirical condition
number beta of the coefficient Gram matrix against its probabilistic
sandwich at a fixed skip and for stacked schedules, the exponential
lower-bound regime for widely spread dynamics, the matrix concentration
inequality the sandwich rests on, and the decay of normalized singular
values that motivates stacking in the first place.

Bound conventions. The fixed-skip sandwich is

    ((1+c) e^(-g1/tau) - D) / (e^(-gk/tau) + D)
        <= beta <= ((1+c) e^(-g1/tau) + D) / (e^(-gk/tau) - D),

with concentration radius D = 2 sqrt(k (1/T)(1+c) log(2k/delta)). The
stacked version replaces each exp term by its budget-weighted average over
levels, sum_l (T_l/T) e^(-g/tau_l), and evaluates D at the total budget.
The per-column second moments carry a factor 2 (difference of two signs);
it divides out of the beta ratio, and dropping it is what makes the
stacked bound collapse exactly to the fixed-skip bound on a one-level
schedule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import FeatureMatrix, SeriesDescriptorSet, SkipSchedule
from .latent import LatentModel, sample_difference_matrix
from .streams import stream

# lambda_min below this fraction of lambda_max means numerically singular
RANK_DEFICIENT_RATIO = 1e-12


@dataclass
class ConditionReport:
    """Empirical condition number and/or its probabilistic sandwich.

    ``condition_number`` fills the empirical fields, the bound operations
    fill the bound fields; ``coverage_experiment`` merges both. Unset
    fields stay None. An infinite ``beta_empirical`` or ``bound_upper``
    flags a numerically singular Gram matrix / vacuous-bound regime.
    """

    beta_empirical: float | None = None
    lambda_max: float | None = None
    lambda_min: float | None = None
    bound_upper: float | None = None
    bound_lower: float | None = None
    delta_tau: float | None = None
    t_min_required: int | None = None
    within_bounds: bool | None = None


def condition_number(p) -> ConditionReport:
    """Empirical beta = lambda_max / lambda_min of the normalized Gram (1/T) P Pᵀ.

    Accepts a FeatureMatrix or a bare k x T array. Requires T >= k; a
    smallest eigenvalue below 1e-12 of the largest reports beta as +inf.
    """
    if isinstance(p, FeatureMatrix):
        p = p.p
    p = np.asarray(p, dtype=float)
    k, t = p.shape
    if t < k:
        raise ValueError(f"need at least k={k} columns, got {t} (rank-deficient by construction)")
    gram = (p @ p.T) / t
    eigs = np.linalg.eigvalsh(gram)
    lam_min = max(float(eigs[0]), 0.0)
    lam_max = max(float(eigs[-1]), 0.0)
    if lam_min <= RANK_DEFICIENT_RATIO * lam_max or lam_max == 0.0:
        beta = math.inf
    else:
        beta = lam_max / lam_min
    return ConditionReport(beta_empirical=beta, lambda_max=lam_max, lambda_min=lam_min)


def _delta_tau(k: int, t: int, c: float, delta: float) -> float:
    return 2.0 * math.sqrt(k * (1.0 / t) * (1.0 + c) * math.log(2.0 * k / delta))


def _t_minimum(k: int, c: float, delta: float) -> int:
    return math.ceil(k * math.log(2.0 * k / delta) / (9.0 * (1.0 + c)))


def _sandwich(num_scale: float, w1: float, wk: float, d: float) -> tuple[float, float]:
    upper = math.inf if wk - d <= 0 else (num_scale * w1 + d) / (wk - d)
    lower = max((num_scale * w1 - d) / (wk + d), 1.0)
    return lower, upper


def _check_confidence(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def theorem1_bounds(
    gamma1: float,
    gammak: float,
    c: float,
    tau: float,
    k: int,
    t: int,
    delta: float,
) -> ConditionReport:
    """Probabilistic sandwich for beta at a fixed skip, confidence 1 - delta."""
    _check_confidence(delta)
    if gamma1 > gammak:
        raise ValueError("gamma1 must not exceed gammak")
    t_min = _t_minimum(k, c, delta)
    if t < t_min:
        raise ValueError(f"sample budget T={t} below the required minimum {t_min}")
    d = _delta_tau(k, t, c, delta)
    lower, upper = _sandwich(1.0 + c, math.exp(-gamma1 / tau), math.exp(-gammak / tau), d)
    return ConditionReport(
        bound_upper=upper,
        bound_lower=lower,
        delta_tau=d,
        t_min_required=t_min,
    )


@dataclass(frozen=True)
class CorollaryBound:
    exponential: float
    polynomial: float


def corollary1_lower(m: int, gamma1: float, tau: float, c: float) -> CorollaryBound:
    """Lower bounds on E[beta] when gamma_k >= (m+1) gamma_1.

    Returns the exponential form (1+c) exp(gamma1/tau)^m and the weaker
    polynomial form (1+c)(1 + gamma1/tau)^m.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    x = gamma1 / tau
    return CorollaryBound(
        exponential=(1.0 + c) * math.exp(x) ** m,
        polynomial=(1.0 + c) * (1.0 + x) ** m,
    )


def theorem2_bounds(
    gammas,
    c: float,
    schedule: SkipSchedule,
    delta: float,
) -> ConditionReport:
    """Sandwich for beta of the stacked matrix over a skip schedule.

    The exp terms become budget-weighted averages over the schedule's
    levels and the concentration radius shrinks with the total budget.
    A one-level schedule reproduces theorem1_bounds exactly.
    """
    _check_confidence(delta)
    gammas = np.asarray(gammas, dtype=float)
    if np.any(np.diff(gammas) < 0):
        raise ValueError("gammas must be sorted non-decreasing")
    k = gammas.size
    budgets = np.array([schedule.budget(l) for l in schedule.included_levels], dtype=float)
    taus = np.array([schedule.tau(l) for l in schedule.included_levels])
    total = budgets.sum()
    t_min = _t_minimum(k, c, delta)
    if total < t_min:
        raise ValueError(f"sample budget T={int(total)} below the required minimum {t_min}")
    weights = budgets / total
    w1 = float(np.sum(weights * np.exp(-gammas[0] / taus)))
    wk = float(np.sum(weights * np.exp(-gammas[-1] / taus)))
    d = _delta_tau(k, int(total), c, delta)
    lower, upper = _sandwich(1.0 + c, w1, wk, d)
    return ConditionReport(
        bound_upper=upper,
        bound_lower=lower,
        delta_tau=d,
        t_min_required=t_min,
    )


def bernstein_bound(b: float, norm_es: float, p_dim: int, n: int, delta: float) -> float:
    """Matrix concentration radius sqrt(2 B |ES| log(2p/d)) + (B/3) log(2p/d).

    ``n`` is part of the sampling context only; the sum length enters
    through ``norm_es``.
    """
    if b <= 0 or norm_es < 0 or p_dim < 1:
        raise ValueError("b must be positive, norm_es non-negative, p_dim >= 1")
    if not 0.0 < delta <= 2.0 * p_dim:
        raise ValueError(f"delta must lie in (0, 2*p_dim], got {delta}")
    log_term = math.log(2.0 * p_dim / delta)
    return math.sqrt(2.0 * b * norm_es * log_term) + (b / 3.0) * log_term


def bernstein_coverage_test(
    p_dim: int,
    n: int,
    b: float,
    delta: float,
    trials: int,
    seed,
) -> float:
    """Fraction of trials where |S - ES| exceeds the concentration radius.

    Each trial sums n outer products of sign vectors scaled to squared
    norm exactly b, so ES = n (b/p) I. The returned exceedance rate must
    stay at or below delta; the bound is loose enough that it is usually
    zero.
    """
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    scale = math.sqrt(b / p_dim)
    norm_es = n * b / p_dim
    radius = bernstein_bound(b, norm_es, p_dim, n, delta)
    mean = norm_es * np.eye(p_dim)
    exceed = 0
    for trial in range(trials):
        rng = stream(seed, trial)
        x = (rng.integers(0, 2, size=(n, p_dim)) * 2.0 - 1.0) * scale
        s = x.T @ x
        deviation = float(np.linalg.norm(s - mean, ord=2))
        if deviation > radius:
            exceed += 1
    return exceed / trials


@dataclass
class SpectrumCurve:
    """Top singular values of a feature matrix, normalized by the largest."""

    sigmas: np.ndarray
    level_label: str

    def __post_init__(self) -> None:
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if self.sigmas.size < 1 or self.sigmas[0] != 1.0:
            raise ValueError("normalized spectrum must start at exactly 1")
        if np.any(np.diff(self.sigmas) > 1e-12):
            raise ValueError("normalized spectrum must be non-increasing")
        if np.any(self.sigmas < 0) or np.any(self.sigmas > 1.0):
            raise ValueError("normalized spectrum must lie in [0, 1]")


def spectrum_curve(source, level_label: str = "") -> SpectrumCurve:
    """Top-10 normalized singular values of a feature matrix.

    Accepts a bare matrix (features as columns), a FeatureMatrix (the
    observed matrix f when present, else p) or a SeriesDescriptorSet
    (descriptor rows transposed). Needs >= 10 feature columns; an all-zero
    matrix has no spectrum and is rejected. Shorter curves come out when
    the matrix has fewer than 10 rows.
    """
    if isinstance(source, FeatureMatrix):
        matrix = source.f if source.f is not None else source.p
    elif isinstance(source, SeriesDescriptorSet):
        matrix = source.descriptors.T
    else:
        matrix = np.asarray(source, dtype=float)
    if matrix.ndim != 2:
        raise ValueError(f"need a 2-D matrix, got shape {matrix.shape}")
    rows, cols = matrix.shape
    if cols < 10:
        raise ValueError(f"need at least 10 feature columns, got {cols}")
    if not matrix.any():
        raise ValueError("all-zero matrix has no spectrum")
    # eigen-decompose the smaller Gram matrix; its eigenvalues are the
    # squared singular values
    if rows <= cols:
        gram = matrix @ matrix.T
    else:
        gram = matrix.T @ matrix
    eigs = np.linalg.eigvalsh(gram)[::-1]
    keep = min(10, eigs.size)
    sigmas = np.sqrt(np.clip(eigs[:keep], 0.0, None))
    return SpectrumCurve(sigmas=sigmas / sigmas[0], level_label=level_label)


@dataclass
class CoverageSummary:
    """Per-trial betas against a fixed sandwich, with summary statistics."""

    betas: np.ndarray
    within: np.ndarray
    bound_lower: float
    bound_upper: float
    delta_tau: float
    coverage: float
    mean_beta: float
    var_beta: float


def _beta_within(beta: float, lower: float, upper: float) -> bool:
    if math.isinf(beta):
        # a singular Gram matrix is only covered by a vacuous upper bound
        return math.isinf(upper)
    return lower <= beta <= upper


def coverage_experiment(
    model: LatentModel,
    skip,
    delta: float,
    trials: int,
    seed,
    *,
    t_samples: int | None = None,
) -> CoverageSummary:
    """Monte-Carlo sandwich coverage for a fixed skip or a full schedule.

    ``skip`` is a single tau (fixed-skip route, optionally with an explicit
    per-trial budget ``t_samples``) or a SkipSchedule (stacked route).
    Trial i draws from the sub-stream (seed, i), so trials are independent
    and may be evaluated in any order or in parallel.
    """
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    if isinstance(skip, SkipSchedule):
        bounds = theorem2_bounds(model.gammas, model.c, skip, delta)

        def draw(trial: int) -> np.ndarray:
            blocks = [
                sample_difference_matrix(
                    model, skip.tau(level), skip.budget(level), stream((seed, trial), level)
                )
                for level in skip.included_levels
            ]
            return np.concatenate(blocks, axis=1)

    else:
        tau = float(skip)
        t = t_samples if t_samples is not None else int(np.floor(1.0 / tau + 1e-9))
        bounds = theorem1_bounds(
            model.gammas[0], model.gammas[-1], model.c, tau, model.k, t, delta
        )

        def draw(trial: int) -> np.ndarray:
            return sample_difference_matrix(model, tau, t, stream(seed, trial))

    betas = np.empty(trials)
    within = np.empty(trials, dtype=bool)
    for trial in range(trials):
        beta = condition_number(draw(trial)).beta_empirical
        betas[trial] = beta
        within[trial] = _beta_within(beta, bounds.bound_lower, bounds.bound_upper)
    finite = betas[np.isfinite(betas)]
    return CoverageSummary(
        betas=betas,
        within=within,
        bound_lower=bounds.bound_lower,
        bound_upper=bounds.bound_upper,
        delta_tau=bounds.delta_tau,
        coverage=float(np.mean(within)),
        mean_beta=float(np.mean(betas)),
        var_beta=float(np.var(betas)) if finite.size == trials else math.inf,
    )


def binomial_tail_probability(successes: int, trials: int, rate: float) -> float:
    """P(X <= successes) for X ~ Binomial(trials, rate).

    Used to test observed coverage against a target rate: a tiny tail
    probability means the observed success count is implausibly low.
    """
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    total = 0.0
    for i in range(successes + 1):
        total += math.comb(trials, i) * rate**i * (1.0 - rate) ** (trials - i)
    return min(total, 1.0)
