"""Detection scoring against a known mislabel mask.

The positive class throughout is "sample is genuinely mislabeled".
Zero-denominator rates are reported as 0.0 and listed in ``undefined``
rather than raising, so all-negative predictions still produce a row.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError, UndefinedMetricError

RATE_NAMES = ("sensitivity", "specificity", "ppv", "npv", "f1")


@dataclass(frozen=True)
class MetricsSummary:
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: float
    specificity: float
    ppv: float
    npv: float
    f1: float
    auprc: float | None = None
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        doc = {name: getattr(self, name) for name in RATE_NAMES}
        doc["auprc"] = self.auprc
        doc["undefined_rates"] = list(self.undefined)
        doc["counts"] = {"tp": self.tp, "fp": self.fp,
                         "tn": self.tn, "fn": self.fn}
        return doc


def _rate(num: int, den: int, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def confusion_metrics(flags, truth) -> MetricsSummary:
    """Confusion counts and rates for predicted flags vs the true mask."""
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if flags.shape != truth.shape or flags.ndim != 1:
        raise ShapeError(
            f"flags {flags.shape} and truth {truth.shape} must be equal-length "
            "vectors")
    tp = int(np.sum(flags & truth))
    fp = int(np.sum(flags & ~truth))
    tn = int(np.sum(~flags & ~truth))
    fn = int(np.sum(~flags & truth))
    undefined: list[str] = []
    sens = _rate(tp, tp + fn, "sensitivity", undefined)
    spec = _rate(tn, tn + fp, "specificity", undefined)
    ppv = _rate(tp, tp + fp, "ppv", undefined)
    npv = _rate(tn, tn + fn, "npv", undefined)
    if ppv + sens > 0:
        f1 = 2.0 * ppv * sens / (ppv + sens)
    else:
        undefined.append("f1")
        f1 = 0.0
    return MetricsSummary(tp=tp, fp=fp, tn=tn, fn=fn, sensitivity=sens,
                          specificity=spec, ppv=ppv, npv=npv, f1=f1,
                          undefined=tuple(undefined))


def auprc(scores, truth) -> float:
    """Average precision of ``scores`` ranking the true mask.

    Samples are sorted by score descending, ties broken by ascending index;
    AP sums precision-at-k over the positive hits, divided by the positive
    count.  Equivalent to a full threshold sweep when scores are distinct.

    Raises:
        UndefinedMetricError: if the truth mask has no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape or scores.ndim != 1:
        raise ShapeError(
            f"scores {scores.shape} and truth {truth.shape} must be "
            "equal-length vectors")
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC undefined: no positives in truth")
    order = np.argsort(-scores, kind="stable")
    hits = truth[order].astype(np.float64)
    precision_at_k = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(np.sum(precision_at_k * hits) / n_pos)


def with_auprc(summary: MetricsSummary, scores, truth) -> MetricsSummary:
    return replace(summary, auprc=auprc(scores, truth))
