"""Reduced feature space construction.

A projection basis stacks the difference between class centroids on top of
a set of random unit directions.  The centroid-difference row carries the
class separation; the random rows preserve residual structure without
favoring any particular axis.  Also hosts the univariate-Gaussian Hellinger
distance and the Rayleigh quotient used to validate the construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassError, DegenerateError, ShapeError
from .tensor_io import FeatureMatrix


def _as_matrix(Z) -> np.ndarray:
    return np.asarray(getattr(Z, "data", Z), dtype=np.float64)


def _as_labels(y) -> np.ndarray:
    return np.asarray(getattr(y, "labels", y), dtype=np.int64)


@dataclass(frozen=True)
class ProjectionBasis:
    """(1 + r) x p projection matrix; row 0 is the centroid difference."""

    matrix: np.ndarray
    r: int
    seed: int = 0

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.r + 1:
            raise ShapeError(
                f"basis must have {self.r + 1} rows, got {self.matrix.shape}")


@dataclass(frozen=True)
class UnivariateGaussian:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateError(f"sigma must be positive, got {self.sigma}")


def class_centroids(Z, y) -> tuple[np.ndarray, np.ndarray]:
    """Mean feature vector of each class under the given labels."""
    X = _as_matrix(Z)
    labels = _as_labels(y)
    if X.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"{X.shape[0]} samples but {labels.shape[0]} labels")
    mask1 = labels == 1
    if not mask1.any() or mask1.all():
        raise ClassError("both classes must be present to form centroids")
    return X[~mask1].mean(axis=0), X[mask1].mean(axis=0)


def random_basis(p: int, r: int, seed: int) -> np.ndarray:
    """r random unit directions in R^p, i.i.d. standard normal then normalized.

    The rows are deliberately not orthogonalized: a small set of random
    directions in high dimension is already nearly orthogonal.
    """
    if p < 1 or r < 0:
        raise ShapeError(f"invalid basis size p={p}, r={r}")
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((r, p))
    if r:
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows


def assemble_projection(mu0: np.ndarray, mu1: np.ndarray, R: np.ndarray,
                        seed: int = 0) -> ProjectionBasis:
    """Stack (mu1 - mu0) on top of the random directions R."""
    mu0 = np.asarray(mu0, dtype=np.float64)
    mu1 = np.asarray(mu1, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64).reshape(-1, mu0.shape[0]) if np.size(R) \
        else np.empty((0, mu0.shape[0]))
    if mu0.shape != mu1.shape or mu0.ndim != 1:
        raise ShapeError("centroids must be vectors of equal length")
    if R.shape[1] != mu0.shape[0]:
        raise ShapeError(
            f"random rows have dim {R.shape[1]}, centroids {mu0.shape[0]}")
    diff = mu1 - mu0
    if np.all(diff == 0.0):
        raise DegenerateError("class centroids coincide; no direction to project")
    return ProjectionBasis(matrix=np.vstack([diff[None, :], R]),
                           r=R.shape[0], seed=seed)


def project(basis: ProjectionBasis, Z):
    """Apply the basis to each sample row: (m, p) -> (m, 1 + r)."""
    X = _as_matrix(Z)
    if X.shape[1] != basis.matrix.shape[1]:
        raise ShapeError(
            f"features have dim {X.shape[1]}, basis expects "
            f"{basis.matrix.shape[1]}")
    out = X @ basis.matrix.T
    return FeatureMatrix(out) if isinstance(Z, FeatureMatrix) else out


def hellinger_sq(a: UnivariateGaussian, b: UnivariateGaussian) -> float:
    """Squared Hellinger distance between two univariate Gaussians.

    1 - sqrt(2*s1*s2 / (s1^2 + s2^2)) * exp(-(m1 - m2)^2 / (4*(s1^2 + s2^2)))
    """
    v = a.sigma * a.sigma + b.sigma * b.sigma
    coeff = np.sqrt(2.0 * a.sigma * b.sigma / v)
    h2 = 1.0 - coeff * np.exp(-((a.mu - b.mu) ** 2) / (4.0 * v))
    return float(min(max(h2, 0.0), 1.0))


def rayleigh_quotient(x: np.ndarray, v: np.ndarray,
                      sigma: np.ndarray) -> float:
    """(x . v)^2 / (x' Sigma x); maximized over x by x ~ Sigma^{-1} v."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.all(x == 0.0):
        raise DegenerateError("Rayleigh quotient undefined at x = 0")
    num = float(x @ v) ** 2
    den = float(x @ sigma @ x)
    return num / den
