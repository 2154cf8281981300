"""Multivariate Gaussian model with numerically stable density evaluation.

All density work happens in log space through a cached Cholesky factor;
covariance matrices are never inverted explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefiniteError, RankError, ShapeError

_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_matrix(samples) -> np.ndarray:
    data = getattr(samples, "data", samples)
    return np.asarray(data, dtype=np.float64)


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == cov.

    The input is symmetrized as (cov + cov.T) / 2 before factoring, which
    removes accumulation asymmetry without changing well-formed inputs.

    Raises:
        NotPositiveDefiniteError: if the symmetrized matrix is not PD.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ShapeError(f"covariance must be square, got shape {cov.shape}")
    sym = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "matrix is not positive definite") from exc


@dataclass(frozen=True)
class GaussianModel:
    """Mean, covariance and a cached factorization of the covariance."""

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray = field(repr=False)
    log_det: float

    @classmethod
    def from_moments(cls, mean: np.ndarray,
                     covariance: np.ndarray) -> "GaussianModel":
        mean = np.asarray(mean, dtype=np.float64)
        if mean.ndim != 1:
            raise ShapeError(f"mean must be a vector, got shape {mean.shape}")
        chol = cholesky_factor(covariance)
        if chol.shape[0] != mean.shape[0]:
            raise ShapeError("mean and covariance dimensions disagree")
        cov = 0.5 * (np.asarray(covariance, dtype=np.float64)
                     + np.asarray(covariance, dtype=np.float64).T)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return cls(mean=mean, covariance=cov, chol=chol, log_det=log_det)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_mle(samples) -> GaussianModel:
    """Plain (non-robust) Gaussian fit: column means and unbiased covariance.

    Raises:
        RankError: if there are too few samples (m <= q) or the sample
            covariance is degenerate.
    """
    X = _as_matrix(samples)
    if X.ndim != 2:
        raise ShapeError(f"samples must be a 2-D matrix, got shape {X.shape}")
    m, q = X.shape
    if m <= q:
        raise RankError(f"need more samples than dimensions, got m={m}, q={q}")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(q, q)
    try:
        return GaussianModel.from_moments(mean, cov)
    except NotPositiveDefiniteError as exc:
        raise RankError("sample covariance is degenerate") from exc


def _centered(model: GaussianModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != model.dim:
        raise ShapeError(
            f"point dimension {pts.shape[1]} does not match model "
            f"dimension {model.dim}")
    return pts - model.mean, single


def mahalanobis_sq(model: GaussianModel, x):
    """Squared Mahalanobis distance, via triangular solves against L.

    Accepts a single q-vector or an (n, q) matrix of row vectors.
    """
    diffs, single = _centered(model, x)
    u = solve_triangular(model.chol, diffs.T, lower=True)
    d2 = np.einsum("qn,qn->n", u, u)
    return float(d2[0]) if single else d2


def log_pdf(model: GaussianModel, x):
    """Log of the multivariate normal density at ``x``.

    Accepts a single q-vector or an (n, q) matrix of row vectors.
    """
    d2 = mahalanobis_sq(model, x)
    return -0.5 * (model.dim * _LOG_2PI + model.log_det + d2)
