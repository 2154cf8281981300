"""Mislabel detection pipeline.

For each ensemble member: draw a fresh random projection, reduce the pooled
features, fit a robust Gaussian per class under the given labels, and score
every sample under its given-label and alternate-label models.  Member
likelihoods are averaged arithmetically (via log-sum-exp; raw densities
underflow float64 quickly), and a sample is flagged when the averaged
alternate/given ratio exceeds the threshold.

Ensemble members are independent: per-member seeds are derived up front and
accumulation is ordered by member index, so threaded runs are bit-identical
to sequential ones.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp

from ._rng import derive_seed
from .errors import (ClassError, DataError, DegenerateError, DetectionError,
                     ShapeError)
from .gaussian import log_pdf
from .mcd import McdConfig, fast_mcd
from .projection import assemble_projection, class_centroids, random_basis

_MCD_SEED_TAG = 0x6D6364
_LOG_LAMBDA_MAX = 700.0


@dataclass(frozen=True)
class DetectorConfig:
    """Detection hyperparameters: total projected dimension d (the
    centroid-difference direction plus d-1 random directions), ensemble
    size k, and the ratio threshold tau."""

    reduced_dim: int = 2
    ensembles: int = 10
    tau: float = 2.0
    mcd: McdConfig = field(default_factory=McdConfig)
    seed: int = 0

    def __post_init__(self):
        if self.reduced_dim < 1:
            raise ShapeError(f"reduced_dim must be >= 1, got {self.reduced_dim}")
        if self.ensembles < 1:
            raise ShapeError(f"ensembles must be >= 1, got {self.ensembles}")
        if not self.tau > 0:
            raise ShapeError(f"tau must be positive, got {self.tau}")

    def to_dict(self) -> dict:
        return {
            "reduced_dim": self.reduced_dim,
            "ensembles": self.ensembles,
            "tau": self.tau,
            "seed": self.seed,
            "mcd": self.mcd.to_dict(),
        }


@dataclass(frozen=True)
class DetectionReport:
    """Per-sample detection output plus the resolved configuration."""

    given_labels: np.ndarray
    log_mean_given: np.ndarray
    log_mean_alt: np.ndarray
    lambdas: np.ndarray
    flags: np.ndarray
    posterior: np.ndarray
    corrected_labels: np.ndarray
    config: DetectorConfig
    priors: dict
    members_used: int

    def config_echo(self) -> dict:
        doc = self.config.to_dict()
        doc["priors"] = dict(self.priors)
        doc["ensembles_used"] = self.members_used
        return doc


def _threads_from_env() -> int:
    try:
        return max(1, int(os.environ.get("ALED_THREADS", "1")))
    except ValueError:
        return 1


def _as_features(Z) -> np.ndarray:
    arr = np.asarray(getattr(Z, "data", Z), dtype=np.float64)
    if arr.ndim == 4:
        arr = arr.mean(axis=(2, 3))
    if arr.ndim != 2:
        raise ShapeError(f"features must have rank 2 or 4, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DataError("features contain NaN or Inf entries")
    return arr


def _as_labels(y) -> np.ndarray:
    return np.asarray(getattr(y, "labels", y), dtype=np.int64)


def _member_log_densities(X, is_class0, mu0, mu1, member_seed, mcd_config,
                          reduced_dim):
    """Log densities of every sample under given- and alternate-label fits."""
    R = random_basis(X.shape[1], reduced_dim - 1, member_seed)
    basis = assemble_projection(mu0, mu1, R, seed=member_seed)
    Zr = X @ basis.matrix.T
    # Both class fits share one derived seed: determinism and label-swap
    # symmetry do not depend on which class happens to be called 0.
    cfg = replace(mcd_config, seed=derive_seed(member_seed, _MCD_SEED_TAG))
    fit0 = fast_mcd(Zr[is_class0], cfg)
    fit1 = fast_mcd(Zr[~is_class0], cfg)
    lp0 = log_pdf(fit0.model, Zr)
    lp1 = log_pdf(fit1.model, Zr)
    log_given = np.where(is_class0, lp0, lp1)
    log_alt = np.where(is_class0, lp1, lp0)
    return log_given, log_alt


def ensemble_likelihoods(Z, y, config: DetectorConfig,
                         n_threads: int | None = None):
    """Log of the ensemble-mean likelihood under each label hypothesis.

    Returns (logmean_given, logmean_alt, members_used).  Members whose MCD
    fit degenerates are dropped from the average; if every member fails the
    run is a DetectionError.
    """
    X = _as_features(Z)
    labels = _as_labels(y)
    m, p = X.shape
    if labels.shape[0] != m:
        raise ShapeError(f"{m} samples but {labels.shape[0]} labels")
    d = config.reduced_dim
    if d >= m:
        raise ShapeError(
            f"reduced dimension {d} must be below the sample count {m}")
    counts = np.bincount(labels, minlength=2)
    need = 2 * (d + 1)
    if counts[0] < need or counts[1] < need:
        raise ClassError(
            f"each class needs at least {need} samples for d={d}, "
            f"got {counts[0]} and {counts[1]}")

    mu0, mu1 = class_centroids(X, labels)  # once, from the given labels
    is_class0 = labels == 0
    member_seeds = [derive_seed(config.seed, j) for j in range(config.ensembles)]

    def run(seed_j):
        try:
            return _member_log_densities(X, is_class0, mu0, mu1, seed_j,
                                         config.mcd, d)
        except DegenerateError:
            return None

    n_threads = n_threads if n_threads is not None else _threads_from_env()
    if n_threads > 1 and config.ensembles > 1:
        with ThreadPoolExecutor(max_workers=min(n_threads,
                                                config.ensembles)) as pool:
            results = list(pool.map(run, member_seeds))
    else:
        results = [run(s) for s in member_seeds]

    kept = [res for res in results if res is not None]
    if not kept:
        raise DetectionError("every ensemble member degenerated during MCD")
    log_given = np.stack([lg for lg, _ in kept])
    log_alt = np.stack([la for _, la in kept])
    k_eff = len(kept)
    return (logsumexp(log_given, axis=0) - np.log(k_eff),
            logsumexp(log_alt, axis=0) - np.log(k_eff),
            k_eff)


def likelihood_ratio(logmean_given, logmean_alt):
    """Lambda = exp(logmean_alt - logmean_given); overflow becomes +inf."""
    lg = np.asarray(logmean_given, dtype=np.float64)
    la = np.asarray(logmean_alt, dtype=np.float64)
    diff = la - lg
    lam = np.where(diff > _LOG_LAMBDA_MAX, np.inf,
                   np.exp(np.minimum(diff, _LOG_LAMBDA_MAX)))
    return float(lam) if lam.ndim == 0 else lam


def classify_labels(lambdas, tau: float):
    """Flag samples with ratio strictly above tau; the boundary is kept."""
    if not tau > 0:
        raise ShapeError(f"tau must be positive, got {tau}")
    return np.asarray(lambdas, dtype=np.float64) > tau


def posterior_mislabel(logmean_given, logmean_alt, prior_given, prior_alt):
    """Posterior probability of mislabeling under the two-hypothesis model."""
    pg = np.asarray(prior_given, dtype=np.float64)
    pa = np.asarray(prior_alt, dtype=np.float64)
    if np.any(pg <= 0) or np.any(pa <= 0) or not np.allclose(pg + pa, 1.0):
        raise DataError("priors must be positive and sum to 1")
    z = (np.log(pg) + np.asarray(logmean_given, dtype=np.float64)) \
        - (np.log(pa) + np.asarray(logmean_alt, dtype=np.float64))
    post = expit(-z)
    return float(post) if post.ndim == 0 else post


def detect(Z, y, config: DetectorConfig | None = None,
           n_threads: int | None = None,
           priors: tuple[float, float] | None = None) -> DetectionReport:
    """Run the full pipeline and assemble a detection report.

    Rank-4 feature inputs are average-pooled first.  Posterior scores use
    the given-label class proportions as priors unless a fixed
    (prior_given, prior_alt) pair is supplied.
    """
    config = config or DetectorConfig()
    X = _as_features(Z)
    labels = _as_labels(y)
    lg, la, k_eff = ensemble_likelihoods(X, labels, config, n_threads)
    lams = likelihood_ratio(lg, la)
    flags = classify_labels(lams, config.tau)

    if priors is None:
        props = np.bincount(labels, minlength=2) / labels.shape[0]
        prior_given = props[labels]
        prior_alt = props[1 - labels]
        priors_echo = {"mode": "class-proportions",
                       "class0": float(props[0]), "class1": float(props[1])}
    else:
        pg, pa = float(priors[0]), float(priors[1])
        prior_given = np.full(labels.shape, pg)
        prior_alt = np.full(labels.shape, pa)
        priors_echo = {"mode": "fixed", "given": pg, "alt": pa}

    post = posterior_mislabel(lg, la, prior_given, prior_alt)
    corrected = np.where(flags, 1 - labels, labels).astype(np.int64)
    return DetectionReport(given_labels=labels, log_mean_given=lg,
                           log_mean_alt=la, lambdas=lams, flags=flags,
                           posterior=post, corrected_labels=corrected,
                           config=config, priors=priors_echo,
                           members_used=k_eff)
