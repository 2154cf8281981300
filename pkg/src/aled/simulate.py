"""Synthetic feature-manifold generator and multi-trial experiment driver.

Datasets are two Gaussian clusters in an ambient space: class-0 at the
origin, class-1 displaced along a random unit direction by ``separation``
(in units of the average within-class standard deviation, which every
covariance kind normalizes to 1 for class 0).  Label noise flips an exact
number of uniformly chosen samples, so acceptance runs carry no extra
variance from the flip count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._rng import derive_seed
from .detector import DetectorConfig, detect
from .errors import DataError, DegenerateError, ShapeError
from .gaussian import cholesky_factor, fit_mle, log_pdf
from .metrics import MetricsSummary, confusion_metrics, with_auprc
from .tensor_io import FeatureMatrix, LabelVector

COV_KINDS = ("isotropic", "diagonal-random", "full-random")

AGGREGATED_METRICS = ("sensitivity", "specificity", "ppv", "npv", "f1",
                      "auprc")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic dataset draw."""

    m: int
    p: int
    separation: float
    cov_kind: str = "isotropic"
    cov_scale_ratio: float = 1.0
    class_balance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.m < 4 or self.p < 1:
            raise ShapeError(f"need m >= 4 and p >= 1, got m={self.m}, "
                             f"p={self.p}")
        if self.separation < 0:
            raise DataError(f"separation must be >= 0, got {self.separation}")
        if self.cov_kind not in COV_KINDS:
            raise DataError(f"cov_kind must be one of {COV_KINDS}, "
                            f"got {self.cov_kind!r}")
        if not self.cov_scale_ratio > 0:
            raise DataError("cov_scale_ratio must be positive")
        if not 0.0 < self.class_balance < 1.0:
            raise DataError("class_balance must lie strictly between 0 and 1")

    def to_dict(self) -> dict:
        return {
            "m": self.m, "p": self.p, "separation": self.separation,
            "cov_kind": self.cov_kind,
            "cov_scale_ratio": self.cov_scale_ratio,
            "class_balance": self.class_balance, "seed": self.seed,
        }


def _base_covariance(kind: str, p: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "isotropic":
        return np.eye(p)
    if kind == "diagonal-random":
        v = rng.lognormal(0.0, 0.5, size=p)
        return np.diag(v / v.mean())
    A = rng.standard_normal((p, p))
    C = A.T @ A + 0.1 * np.eye(p)
    return C * (p / np.trace(C))


def synth_features(spec: SynthSpec) -> tuple[FeatureMatrix, LabelVector]:
    """Draw one dataset; class_balance is the fraction of class-1 samples.

    Draw order (fixed): direction, covariance, class-0 block, class-1
    block, row permutation.
    """
    rng = np.random.default_rng(spec.seed)
    n1 = int(round(spec.class_balance * spec.m))
    n0 = spec.m - n1
    if n0 < 2 or n1 < 2:
        raise DataError(
            f"class_balance {spec.class_balance} leaves a class with fewer "
            f"than 2 of {spec.m} samples")
    u = rng.standard_normal(spec.p)
    u /= np.linalg.norm(u)
    L0 = cholesky_factor(_base_covariance(spec.cov_kind, spec.p, rng))
    X0 = rng.standard_normal((n0, spec.p)) @ L0.T
    X1 = spec.separation * u + np.sqrt(spec.cov_scale_ratio) * (
        rng.standard_normal((n1, spec.p)) @ L0.T)
    X = np.vstack([X0, X1])
    y = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    perm = rng.permutation(spec.m)
    return FeatureMatrix(X[perm]), LabelVector(y[perm])


def inject_label_noise(labels, rate: float,
                       seed: int) -> tuple[LabelVector, np.ndarray]:
    """Flip exactly round(rate * m) uniformly chosen labels.

    Returns the noisy labels and the boolean flip mask.
    """
    y = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    if not 0.0 <= rate < 1.0:
        raise DataError(f"noise rate must be in [0, 1), got {rate}")
    m = y.shape[0]
    n_flip = int(np.floor(rate * m + 0.5))
    if n_flip >= m:
        raise DegenerateError(
            f"rate {rate} would flip every one of the {m} labels")
    mask = np.zeros(m, dtype=bool)
    if n_flip:
        rng = np.random.default_rng(seed)
        mask[rng.choice(m, size=n_flip, replace=False)] = True
    return LabelVector(np.where(mask, 1 - y, y)), mask


def mle_probe_accuracy(Z, y, seed: int = 0, train_fraction: float = 0.5) -> float:
    """Held-out accuracy of a plain MLE-Gaussian classifier on (Z, y).

    Fits a full-covariance Gaussian per class (with class-proportion
    priors) on a random split and scores the rest.  Used to calibrate how
    separable a synthetic feature space is.
    """
    X = np.asarray(getattr(Z, "data", Z), dtype=np.float64)
    labels = np.asarray(getattr(y, "labels", y), dtype=np.int64)
    m = X.shape[0]
    n_train = int(round(train_fraction * m))
    if not 0 < n_train < m:
        raise DataError(f"train_fraction {train_fraction} leaves an empty split")
    perm = np.random.default_rng(seed).permutation(m)
    train, held = perm[:n_train], perm[n_train:]
    scores = np.zeros((2, held.shape[0]))
    for c in (0, 1):
        members = train[labels[train] == c]
        if members.shape[0] < 2:
            raise DataError(f"class {c} is absent from the training split")
        model = fit_mle(X[members])
        scores[c] = log_pdf(model, X[held]) + np.log(members.shape[0] / n_train)
    predicted = (scores[1] > scores[0]).astype(np.int64)
    return float(np.mean(predicted == labels[held]))


@dataclass(frozen=True)
class TrialOutcome:
    metrics: MetricsSummary
    flip_mask: np.ndarray
    spec: SynthSpec
    noise_rate: float
    trial_index: int
    data_seed: int
    noise_seed: int
    detector_seed: int


@dataclass(frozen=True)
class TrialAggregate:
    """Mean and standard error of each metric over the trials."""

    means: dict
    sems: dict
    trials: tuple[TrialOutcome, ...]

    def to_dict(self) -> dict:
        return {"metrics": {name: {"mean": self.means[name],
                                   "sem": self.sems[name]}
                            for name in self.means},
                "trials": len(self.trials)}


def run_single_trial(spec: SynthSpec, noise_rate: float,
                     det_config: DetectorConfig, trial: int) -> TrialOutcome:
    data_seed = derive_seed(spec.seed, trial, 0)
    noise_seed = derive_seed(spec.seed, trial, 1)
    det_seed = derive_seed(det_config.seed, trial)
    Z, y_true = synth_features(replace(spec, seed=data_seed))
    noisy, mask = inject_label_noise(y_true, noise_rate, noise_seed)
    report = detect(Z, noisy, replace(det_config, seed=det_seed))
    summary = confusion_metrics(report.flags, mask)
    if mask.any():
        summary = with_auprc(summary, report.posterior, mask)
    return TrialOutcome(metrics=summary, flip_mask=mask, spec=spec,
                        noise_rate=noise_rate, trial_index=trial,
                        data_seed=data_seed, noise_seed=noise_seed,
                        detector_seed=det_seed)


def run_trials(spec: SynthSpec, noise_rate: float,
               det_config: DetectorConfig, n_trials: int) -> TrialAggregate:
    """Repeat draw/flip/detect with derived per-trial seeds and aggregate.

    SEM is the sample standard deviation over trials divided by
    sqrt(n_trials); a single trial reports SEM = 0 by convention.
    """
    if n_trials < 1:
        raise DataError(f"n_trials must be >= 1, got {n_trials}")
    outcomes = [run_single_trial(spec, noise_rate, det_config, t)
                for t in range(n_trials)]
    means: dict = {}
    sems: dict = {}
    for name in AGGREGATED_METRICS:
        values = [getattr(o.metrics, name) for o in outcomes]
        if any(v is None for v in values):
            continue
        arr = np.asarray(values, dtype=np.float64)
        means[name] = float(arr.mean())
        sems[name] = (float(arr.std(ddof=1) / np.sqrt(n_trials))
                      if n_trials > 1 else 0.0)
    return TrialAggregate(means=means, sems=sems, trials=tuple(outcomes))
