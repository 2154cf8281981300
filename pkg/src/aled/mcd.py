"""Minimum Covariance Determinant estimation of location and scatter.

FastMCD search: many small random starts, two concentration steps each,
then the best few candidates are iterated to a fixed point.  The returned
scatter matrix carries the chi-square consistency correction so it is
unbiased for Gaussian data despite being fit on a trimmed subset.

Randomness is drawn from a single generator in a fixed order, so results
are reproducible for a given (data, config) pair regardless of how the
candidate evaluations are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateError, ShapeError
from .gaussian import GaussianModel, NotPositiveDefiniteError

# Ridge escalation for near-singular subset covariances: relative epsilons
# applied as cov + eps * tr(cov)/q * I.  Small subsets routinely produce
# ill-conditioned fits; a deterministic escalation keeps runs reproducible.
_RIDGE_EPSILONS = (1e-8, 1e-6)

_MAX_START_EXPANSIONS = 5


@dataclass(frozen=True)
class McdConfig:
    """Search schedule for fast_mcd.

    support_fraction "default" selects the maximal-breakdown subset size
    h = floor((m + q + 1) / 2); a float in (0.5, 1] selects h = floor(f*m).
    """

    support_fraction: float | str = "default"
    n_initial_subsets: int = 500
    n_best_carried: int = 10
    max_c_steps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.support_fraction != "default":
            f = float(self.support_fraction)
            if not 0.5 < f <= 1.0:
                raise ShapeError(
                    f"support_fraction must be in (0.5, 1], got {f}")
        if self.n_initial_subsets < 1 or self.n_best_carried < 1:
            raise ShapeError("subset counts must be positive")
        if self.n_best_carried > self.n_initial_subsets:
            raise ShapeError(
                "n_best_carried cannot exceed n_initial_subsets")
        if self.max_c_steps < 1:
            raise ShapeError("max_c_steps must be at least 1")

    def to_dict(self) -> dict:
        return {
            "support_fraction": self.support_fraction,
            "n_initial_subsets": self.n_initial_subsets,
            "n_best_carried": self.n_best_carried,
            "max_c_steps": self.max_c_steps,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class McdFit:
    """Robust location/scatter plus the subset that produced it."""

    model: GaussianModel
    support_mask: np.ndarray
    raw_determinant: float


def _as_matrix(data) -> np.ndarray:
    X = np.asarray(getattr(data, "data", data), dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"data must be a 2-D matrix, got shape {X.shape}")
    return X


def support_size(m: int, q: int, support_fraction: float | str) -> int:
    if support_fraction == "default":
        h = (m + q + 1) // 2
    else:
        h = int(np.floor(float(support_fraction) * m))
    if h <= q or h > m:
        raise ShapeError(f"support size h={h} invalid for m={m}, q={q}")
    return h


def consistency_factor(h: int, m: int, q: int) -> float:
    """Scatter rescaling making the trimmed estimate Gaussian-consistent.

    factor = (h/m) / P(chi2_{q+2} <= chi2_{q, h/m}), which tends to 1 as
    h -> m (no trimming, no correction).
    """
    if not 0 < h <= m:
        raise ShapeError(f"need 0 < h <= m, got h={h}, m={m}")
    alpha = h / m
    quantile = chi2.ppf(alpha, df=q)
    return float(alpha / chi2.cdf(quantile, df=q + 2))


def consistency_correction(raw_cov: np.ndarray, h: int, m: int,
                           q: int) -> np.ndarray:
    """Scale a raw h-subset covariance by the consistency factor."""
    return np.asarray(raw_cov, dtype=np.float64) * consistency_factor(h, m, q)


def _ridged(cov: np.ndarray, eps: float) -> np.ndarray:
    q = cov.shape[-1]
    scale = np.trace(cov, axis1=-2, axis2=-1) / q
    return cov + (eps * scale)[..., None, None] * np.eye(q)


def _chol_single(cov: np.ndarray) -> np.ndarray:
    for eps in _RIDGE_EPSILONS:
        try:
            return np.linalg.cholesky(_ridged(cov[None], eps)[0])
        except np.linalg.LinAlgError:
            continue
    raise DegenerateError("subset covariance is singular after regularization")


def _chol_batch(covs: np.ndarray):
    """Per-candidate Cholesky with ridge escalation.

    Returns (Ls, logdets, ok); failed candidates get logdet = +inf and an
    identity factor placeholder so downstream batched solves stay legal.
    """
    n, q, _ = covs.shape
    ok = np.ones(n, dtype=bool)
    try:
        Ls = np.linalg.cholesky(_ridged(covs, _RIDGE_EPSILONS[0]))
    except np.linalg.LinAlgError:
        Ls = np.empty_like(covs)
        for i in range(n):
            try:
                Ls[i] = _chol_single(covs[i])
            except DegenerateError:
                Ls[i] = np.eye(q)
                ok[i] = False
    diag = np.diagonal(Ls, axis1=1, axis2=2)
    logdets = 2.0 * np.sum(np.log(diag), axis=1)
    logdets[~ok] = np.inf
    return Ls, logdets, ok


def _subset_moments(X: np.ndarray, subsets: np.ndarray):
    pts = X[subsets]                              # (n, h, q)
    means = pts.mean(axis=1)
    centered = pts - means[:, None, :]
    covs = centered.transpose(0, 2, 1) @ centered
    covs /= subsets.shape[1] - 1
    return means, covs


def _solve_lower_batch(Ls: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Forward substitution for stacked lower-triangular systems."""
    q = B.shape[1]
    u = np.empty_like(B)
    for i in range(q):
        acc = B[:, i, :]
        if i:
            acc = acc - np.einsum("nj,njm->nm", Ls[:, i, :i], u[:, :i, :])
        u[:, i, :] = acc / Ls[:, i, i][:, None]
    return u


def _maha_batch(X: np.ndarray, means: np.ndarray, Ls: np.ndarray):
    diffs = X[None, :, :] - means[:, None, :]     # (n, m, q)
    u = _solve_lower_batch(Ls, diffs.transpose(0, 2, 1))
    return np.einsum("nqm,nqm->nm", u, u)


def _select_h(d2_row: np.ndarray, h: int) -> np.ndarray:
    # Stable sort: ties resolved toward the lowest sample index.
    return np.sort(np.argsort(d2_row, kind="stable")[:h])


def _select_h_batch(d2: np.ndarray, h: int) -> np.ndarray:
    idx = np.argpartition(d2, h - 1, axis=1)[:, :h]
    return np.sort(idx, axis=1)


def c_step(data, subset) -> np.ndarray:
    """One concentration step: refit on the subset, keep the h closest points.

    The determinant of the new subset's covariance never exceeds the old
    one's; iterating reaches a fixed point.

    Raises:
        DegenerateError: if the subset covariance stays singular after
            ridge regularization.
    """
    X = _as_matrix(data)
    m, q = X.shape
    sub = np.asarray(subset, dtype=np.int64).reshape(-1)
    h = sub.shape[0]
    if h <= q:
        raise ShapeError(f"subset size {h} must exceed dimension {q}")
    if len(np.unique(sub)) != h or sub.min() < 0 or sub.max() >= m:
        raise ShapeError("subset indices must be distinct and in range")
    means, covs = _subset_moments(X, sub[None, :])
    L = _chol_single(covs[0])
    d2 = _maha_batch(X, means, L[None])[0]
    return _select_h(d2, h)


def _initial_fits(X: np.ndarray, rng: np.random.Generator, n_starts: int):
    """Fit (q+1)-point random starts, expanding any singular ones.

    All initial subsets are drawn first, in start order; expansion draws
    follow, also in start order, so the draw sequence is deterministic.
    """
    m, q = X.shape
    subsets = [rng.choice(m, size=q + 1, replace=False) for _ in range(n_starts)]
    means, covs = _subset_moments(X, np.asarray(subsets))
    Ls, _, ok = _chol_batch(covs)
    for i in np.flatnonzero(~ok):
        sub = subsets[i]
        for _ in range(_MAX_START_EXPANSIONS):
            pool = np.setdiff1d(np.arange(m), sub, assume_unique=False)
            if pool.size == 0:
                break
            sub = np.append(sub, rng.choice(pool))
            mean_i, cov_i = _subset_moments(X, sub[None, :])
            try:
                Ls[i] = _chol_single(cov_i[0])
            except DegenerateError:
                continue
            means[i] = mean_i[0]
            ok[i] = True
            break
    return means, Ls, ok


def fast_mcd(data, config: McdConfig | None = None) -> McdFit:
    """FastMCD search for the minimum-determinant h-subset.

    Deterministic for a fixed (data, config); determinant ties between
    candidates are broken by the lowest start index.

    Raises:
        ShapeError: if m < 2(q+1) or q < 1.
        DegenerateError: if every candidate start stays singular.
    """
    config = config or McdConfig()
    X = _as_matrix(data)
    m, q = X.shape
    if q < 1 or m < 2 * (q + 1):
        raise ShapeError(
            f"need m >= 2(q+1) samples, got m={m} with q={q}")
    h = support_size(m, q, config.support_fraction)
    rng = np.random.default_rng(config.seed)

    means, Ls, ok = _initial_fits(X, rng, config.n_initial_subsets)
    start_ids = np.flatnonzero(ok)
    if start_ids.size == 0:
        raise DegenerateError("all candidate starts are degenerate")

    # Initial h-subsets from the small-start fits, then two C-steps each.
    d2 = _maha_batch(X, means[start_ids], Ls[start_ids])
    subsets = _select_h_batch(d2, h)
    for _ in range(2):
        means_h, covs_h = _subset_moments(X, subsets)
        Ls_h, _, ok_h = _chol_batch(covs_h)
        start_ids = start_ids[ok_h]
        subsets = subsets[ok_h]
        if start_ids.size == 0:
            raise DegenerateError("all candidate subsets are degenerate")
        d2 = _maha_batch(X, means_h[ok_h], Ls_h[ok_h])
        subsets = _select_h_batch(d2, h)

    _, covs_h = _subset_moments(X, subsets)
    _, logdets, ok_h = _chol_batch(covs_h)
    order = np.lexsort((start_ids, logdets))
    order = order[ok_h[order]][:config.n_best_carried]
    if order.size == 0:
        raise DegenerateError("all candidate subsets are degenerate")
    subsets = subsets[order]
    start_ids = start_ids[order]

    # Iterate the carried candidates (batched) to a fixed point.
    alive = np.ones(start_ids.size, dtype=bool)
    active = alive.copy()
    logdets = np.full(start_ids.size, np.inf)
    for _ in range(config.max_c_steps):
        if not active.any():
            break
        means_a, covs_a = _subset_moments(X, subsets[active])
        Ls_a, logdets_a, ok_a = _chol_batch(covs_a)
        act_idx = np.flatnonzero(active)
        logdets[act_idx] = logdets_a
        dead = act_idx[~ok_a]
        alive[dead] = False
        active[dead] = False
        act_idx = act_idx[ok_a]
        if act_idx.size == 0:
            break
        d2 = _maha_batch(X, means_a[ok_a], Ls_a[ok_a])
        new = _select_h_batch(d2, h)
        converged = np.all(new == subsets[act_idx], axis=1)
        subsets[act_idx] = new
        active[act_idx[converged]] = False
    # Refresh determinants for chains stopped by the step budget.
    if active.any():
        _, covs_a = _subset_moments(X, subsets[active])
        _, logdets_a, ok_a = _chol_batch(covs_a)
        logdets[np.flatnonzero(active)] = logdets_a
        alive[np.flatnonzero(active)[~ok_a]] = False
    if not alive.any():
        raise DegenerateError("all candidate subsets are degenerate")

    logdets[~alive] = np.inf
    winner = np.lexsort((start_ids, logdets))[0]
    logdet = float(logdets[winner])
    subset = subsets[winner]
    mean_f, cov_f = _subset_moments(X, subset[None, :])
    corrected = consistency_correction(cov_f[0], h, m, q)
    try:
        model = GaussianModel.from_moments(mean_f[0], corrected)
    except NotPositiveDefiniteError:
        model = GaussianModel.from_moments(
            mean_f[0], _ridged(corrected[None], _RIDGE_EPSILONS[1])[0])
    mask = np.zeros(m, dtype=bool)
    mask[subset] = True
    return McdFit(model=model, support_mask=mask,
                  raw_determinant=float(np.exp(logdet)))
