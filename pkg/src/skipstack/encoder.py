"""Descriptor encoding: PCA, Gaussian mixture, Fisher vector, normalization.

The encoding route mirrors the recognition pipeline the theory feeds into:
raw windowed descriptors are PCA-reduced by a factor of two, augmented
with their normalized temporal location, soft-assigned to a diagonal
Gaussian mixture, and summarized as the mixture's normalized mean- and
variance-gradient statistics. Power and L2 normalization follow, with a
final renormalization after concatenation.

Descriptors from every skip level are pooled into one encoding per
sample; the stacked representation differs from a single-skip one only in
which descriptors enter the pool.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import SeriesDescriptorSet
from .streams import as_generator

WEIGHT_COLLAPSE = 1e-8
MAX_RESEEDS = 3
VARIANCE_FLOOR_RATIO = 1e-6


class ConvergenceError(RuntimeError):
    """EM failed to maintain a usable mixture (repeated component collapse)."""


@dataclass
class PcaTransform:
    mean: np.ndarray
    projection: np.ndarray
    explained_ratio: np.ndarray

    def __post_init__(self) -> None:
        gram = self.projection.T @ self.projection
        if not np.allclose(gram, np.eye(self.projection.shape[1]), atol=1e-8):
            raise ValueError("projection columns must be orthonormal")


def pca_fit(data: np.ndarray, n_components: int = 0) -> PcaTransform:
    """Centered projection onto the top principal components.

    ``n_components`` 0 keeps the default ceil(D/2), halving the dimension
    like the reference pipeline.
    """
    data = np.asarray(data, dtype=float)
    n, d = data.shape
    if n <= d:
        raise ValueError(f"need more samples than dimensions to fit, got N={n}, D={d}")
    if not 0 <= n_components <= d:
        raise ValueError(f"n_components must lie in [0, {d}], got {n_components}")
    mean = data.mean(axis=0)
    centered = data - mean
    # right singular vectors of the centered data = covariance eigenvectors
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    keep = n_components if n_components else (d + 1) // 2
    components = vt[:keep]
    # make each component's largest-magnitude entry positive so the fit is
    # a pure function of the data
    signs = np.sign(components[np.arange(keep), np.argmax(np.abs(components), axis=1)])
    signs[signs == 0] = 1.0
    components = components * signs[:, None]
    variances = svals**2
    total = variances.sum()
    ratio = variances[:keep] / total if total > 0 else np.zeros(keep)
    return PcaTransform(mean=mean, projection=components.T, explained_ratio=ratio)


def pca_apply(transform: PcaTransform, data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.shape[1] != transform.mean.size:
        raise ValueError(
            f"data dimension {data.shape[1]} does not match the fitted {transform.mean.size}"
        )
    return (data - transform.mean) @ transform.projection


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must sum to 1")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")

    @property
    def k(self) -> int:
        return self.weights.size


def _log_densities(gmm: GmmModel, data: np.ndarray) -> np.ndarray:
    """N x K matrix of log(w_k N(x | mu_k, diag var_k))."""
    inv = 1.0 / gmm.variances
    # expand ||(x - mu)/sigma||^2 through matmul to avoid an N x K x D array
    quad = (
        (data**2) @ inv.T
        - 2.0 * data @ (gmm.means * inv).T
        + np.sum(gmm.means**2 * inv, axis=1)
    )
    log_norm = -0.5 * (
        data.shape[1] * math.log(2.0 * math.pi) + np.sum(np.log(gmm.variances), axis=1)
    )
    return np.log(gmm.weights) + log_norm - 0.5 * quad


def _posteriors(gmm: GmmModel, data: np.ndarray) -> tuple[np.ndarray, float]:
    """Soft assignments (rows sum to 1) and mean per-point log-likelihood."""
    logd = _log_densities(gmm, data)
    top = logd.max(axis=1, keepdims=True)
    stable = np.exp(logd - top)
    total = stable.sum(axis=1, keepdims=True)
    mean_ll = float(np.mean(np.log(total) + top))
    return stable / total, mean_ll


def mean_log_likelihood(gmm: GmmModel, data: np.ndarray) -> float:
    return _posteriors(gmm, np.asarray(data, dtype=float))[1]


def _seed_means(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding: spread initial means by squared distance."""
    n = data.shape[0]
    means = np.empty((k, data.shape[1]))
    means[0] = data[rng.integers(n)]
    dist = np.sum((data - means[0]) ** 2, axis=1)
    for i in range(1, k):
        total = dist.sum()
        if total <= 0:
            means[i] = data[rng.integers(n)]
            continue
        means[i] = data[rng.choice(n, p=dist / total)]
        dist = np.minimum(dist, np.sum((data - means[i]) ** 2, axis=1))
    return means


def gmm_fit(
    data: np.ndarray,
    k_components: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    rng=0,
) -> GmmModel:
    """Diagonal-covariance EM with k-means++ seeding.

    The mean per-point log-likelihood is recorded at every E-step and is
    non-decreasing; iteration stops when its relative change falls below
    ``tol``. A component whose weight collapses below 1e-8 is re-seeded at
    a random data point (at most 3 times per component) before the fit is
    abandoned with ConvergenceError.
    """
    data = np.asarray(data, dtype=float)
    rng = as_generator(rng)
    n, d = data.shape
    if n < 10 * k_components:
        raise ValueError(f"need at least {10 * k_components} points for K={k_components}, got {n}")
    data_var = np.maximum(data.var(axis=0), np.finfo(float).tiny)
    floor = VARIANCE_FLOOR_RATIO * data_var
    gmm = GmmModel(
        weights=np.full(k_components, 1.0 / k_components),
        means=_seed_means(data, k_components, rng),
        variances=np.tile(data_var, (k_components, 1)),
    )
    trace = []
    reseeds = np.zeros(k_components, dtype=int)
    for _ in range(max_iters):
        post, ll = _posteriors(gmm, data)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            break
        mass = post.sum(axis=0)
        collapsed = np.flatnonzero(mass / n < WEIGHT_COLLAPSE)
        if collapsed.size:
            for comp in collapsed:
                reseeds[comp] += 1
                if reseeds[comp] > MAX_RESEEDS:
                    raise ConvergenceError(
                        f"component {comp} collapsed {reseeds[comp]} times; "
                        f"reduce K or provide more data"
                    )
                gmm.means[comp] = data[rng.integers(n)]
                gmm.variances[comp] = data_var
            gmm.weights = np.full(k_components, 1.0 / k_components)
            continue
        weights = mass / n
        means = (post.T @ data) / mass[:, None]
        second = (post.T @ (data**2)) / mass[:, None]
        variances = np.maximum(second - means**2, floor)
        gmm = GmmModel(weights=weights, means=means, variances=variances)
    gmm.log_likelihood_trace = np.asarray(trace)
    return gmm


def gmm_sample(gmm: GmmModel, n: int, rng) -> np.ndarray:
    """Draw n points from the mixture."""
    rng = as_generator(rng)
    comps = rng.choice(gmm.k, size=n, p=gmm.weights)
    noise = rng.standard_normal((n, gmm.means.shape[1]))
    return gmm.means[comps] + noise * np.sqrt(gmm.variances[comps])


@dataclass
class FisherEncoding:
    """Concatenated mean- and variance-gradient blocks, 2 * K * D values."""

    vector: np.ndarray
    powered: bool = False
    l2_normalized: bool = False
    zero_flag: bool = False


def fisher_vector(gmm: GmmModel, descriptors: np.ndarray) -> FisherEncoding:
    """Unnormalized Fisher encoding of a descriptor set under the mixture.

    Mean block (1/(N sqrt(w_k))) sum_n gamma_n(k) (x_n - mu_k)/sigma_k and
    variance block (1/(N sqrt(2 w_k))) sum_n gamma_n(k) ((x_n-mu_k)^2 /
    sigma_k^2 - 1), which are the per-parameter score functions scaled by
    the diagonal Fisher normalization.
    """
    descriptors = np.asarray(descriptors, dtype=float)
    if descriptors.ndim != 2 or descriptors.shape[0] < 1:
        raise ValueError("descriptors must be a non-empty N x D matrix")
    if descriptors.shape[1] != gmm.means.shape[1]:
        raise ValueError(
            f"descriptor dimension {descriptors.shape[1]} does not match "
            f"the mixture dimension {gmm.means.shape[1]}"
        )
    n = descriptors.shape[0]
    post, _ = _posteriors(gmm, descriptors)
    sigma = np.sqrt(gmm.variances)
    mass = post.sum(axis=0)
    sum_x = post.T @ descriptors
    sum_x2 = post.T @ (descriptors**2)
    # sum_n gamma (x - mu)/sigma, expanded through the accumulated moments
    g_mu = (sum_x - mass[:, None] * gmm.means) / sigma
    g_mu /= n * np.sqrt(gmm.weights)[:, None]
    g_var = (
        sum_x2 - 2.0 * gmm.means * sum_x + mass[:, None] * gmm.means**2
    ) / gmm.variances - mass[:, None]
    g_var /= n * np.sqrt(2.0 * gmm.weights)[:, None]
    return FisherEncoding(vector=np.concatenate([g_mu.ravel(), g_var.ravel()]))


def power_normalize(v: np.ndarray) -> np.ndarray:
    """Elementwise signed square root."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.sqrt(np.abs(v))


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale to unit Euclidean norm; the zero vector passes through."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    return v if norm == 0 else v / norm


def concat_renormalize(parts: list[np.ndarray]) -> np.ndarray:
    """Power + L2 each part, concatenate, then L2 the whole."""
    if not parts:
        raise ValueError("need at least one part")
    normed = [l2_normalize(power_normalize(p)) for p in parts]
    return l2_normalize(np.concatenate(normed))


@dataclass(frozen=True)
class CodecConfig:
    """Desk-scale encoding configuration.

    The reference pipeline uses 256 Gaussians trained on 256k descriptors;
    the defaults keep the same 1:1000 component-to-budget ratio at desk
    scale. ``renormalize`` applies the final L2 pass after concatenation.
    """

    k_components: int = 16
    train_budget: int = 20000
    max_iters: int = 100
    tol: float = 1e-6
    renormalize: bool = True
    pca_components: int = 0  # 0 keeps ceil(D/2)


@dataclass
class FisherCodec:
    pca: PcaTransform
    gmm: GmmModel
    config: CodecConfig

    @property
    def encoding_dim(self) -> int:
        return 2 * self.gmm.k * self.gmm.means.shape[1]


def _augment(codec_pca: PcaTransform, ds: SeriesDescriptorSet) -> np.ndarray:
    reduced = pca_apply(codec_pca, ds.descriptors)
    return np.hstack([reduced, ds.locations[:, None]])


def fit_codec(
    descriptor_sets: list[SeriesDescriptorSet],
    config: CodecConfig,
    rng=0,
) -> FisherCodec:
    """Fit PCA on the pooled descriptors and a GMM on the reduced pool.

    Descriptors from all samples and levels are pooled; at most
    ``config.train_budget`` of them (sampled without replacement) train
    the mixture. The location coordinate joins after PCA, so the mixture
    models motion content plus position.
    """
    rng = as_generator(rng)
    pools = [ds for ds in descriptor_sets if ds.descriptors.shape[0] > 0]
    if not pools:
        raise ValueError("no descriptors to fit on")
    pooled = np.concatenate([ds.descriptors for ds in pools], axis=0)
    locations = np.concatenate([ds.locations for ds in pools])
    pca = pca_fit(pooled, config.pca_components)
    reduced = np.hstack([pca_apply(pca, pooled), locations[:, None]])
    if reduced.shape[0] > config.train_budget:
        pick = rng.choice(reduced.shape[0], size=config.train_budget, replace=False)
        reduced = reduced[pick]
    gmm = gmm_fit(reduced, config.k_components, config.max_iters, config.tol, rng)
    return FisherCodec(pca=pca, gmm=gmm, config=config)


def encode_sample(codec: FisherCodec, ds: SeriesDescriptorSet) -> FisherEncoding:
    """Project, augment with location, Fisher-encode, normalize.

    A sample with no descriptors encodes to a flagged zero vector so a
    degenerate input degrades the evaluation instead of aborting it.
    """
    if ds.descriptors.shape[0] == 0:
        warnings.warn("empty descriptor set encodes to a zero vector")
        return FisherEncoding(
            vector=np.zeros(codec.encoding_dim),
            powered=True,
            l2_normalized=True,
            zero_flag=True,
        )
    raw = fisher_vector(codec.gmm, _augment(codec.pca, ds))
    vec = l2_normalize(power_normalize(raw.vector))
    if codec.config.renormalize:
        vec = l2_normalize(vec)
    return FisherEncoding(vector=vec, powered=True, l2_normalized=True)


def encode_dataset(
    codec: FisherCodec, descriptor_sets: list[SeriesDescriptorSet]
) -> tuple[np.ndarray, np.ndarray]:
    """Encodings as an N x dim matrix plus the per-sample zero flags."""
    encodings = [encode_sample(codec, ds) for ds in descriptor_sets]
    matrix = np.stack([e.vector for e in encodings])
    flags = np.array([e.zero_flag for e in encodings])
    return matrix, flags


def save_codec(codec: FisherCodec, path) -> None:
    from pathlib import Path

    doc = {
        "pca": {
            "mean": codec.pca.mean.tolist(),
            "projection": codec.pca.projection.tolist(),
            "explained_ratio": codec.pca.explained_ratio.tolist(),
        },
        "gmm": {
            "weights": codec.gmm.weights.tolist(),
            "means": codec.gmm.means.tolist(),
            "variances": codec.gmm.variances.tolist(),
        },
        "config": {
            "k_components": codec.config.k_components,
            "train_budget": codec.config.train_budget,
            "max_iters": codec.config.max_iters,
            "tol": codec.config.tol,
            "renormalize": codec.config.renormalize,
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_codec(path) -> FisherCodec:
    from pathlib import Path

    doc = json.loads(Path(path).read_text())
    return FisherCodec(
        pca=PcaTransform(
            mean=np.asarray(doc["pca"]["mean"]),
            projection=np.asarray(doc["pca"]["projection"]),
            explained_ratio=np.asarray(doc["pca"]["explained_ratio"]),
        ),
        gmm=GmmModel(
            weights=np.asarray(doc["gmm"]["weights"]),
            means=np.asarray(doc["gmm"]["means"]),
            variances=np.asarray(doc["gmm"]["variances"]),
        ),
        config=CodecConfig(**doc["config"]),
    )
