"""Feature/label file loading, spatial average pooling, report serialization.

Two on-disk layouts are supported and sniffed by content:

* NPY v1.0 binary tensors (little-endian ``<f4``/``<f8`` for features,
  integer dtypes for labels, C order).  Everything is widened to float64
  internally; detection math needs the headroom.
* headerless CSV with ``.`` decimal separator, for hand-made fixtures.

NaN/Inf entries are rejected at load time: letting them through makes the
robust fit and the Cholesky factorization fail far from the actual cause.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import DataError, FormatError, LabelError, ShapeError

if TYPE_CHECKING:  # pragma: no cover
    from .detector import DetectionReport

_NPY_MAGIC = b"\x93NUMPY"


@dataclass(frozen=True)
class FeatureMapStack:
    """Rank-4 stack of spatial feature maps: (samples, channels, W, W)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ShapeError(
                f"feature map stack must have rank 4, got rank {self.data.ndim}")
        m, n, h, w = self.data.shape
        if m < 1 or n < 1 or h < 1:
            raise ShapeError(f"empty feature map stack: shape {self.data.shape}")
        if h != w:
            raise ShapeError(f"feature maps must be square, got {h}x{w}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("feature map stack contains NaN or Inf entries")

    @property
    def sample_count(self) -> int:
        return self.data.shape[0]

    @property
    def channel_count(self) -> int:
        return self.data.shape[1]

    @property
    def spatial_size(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FeatureMatrix:
    """Rank-2 matrix of pooled features, one row per sample."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ShapeError(
                f"feature matrix must have rank 2, got rank {self.data.ndim}")
        m, p = self.data.shape
        if m < 1 or p < 1:
            raise ShapeError(f"empty feature matrix: shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("feature matrix contains NaN or Inf entries")

    @property
    def sample_count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelVector:
    """Binary labels, one per sample."""

    labels: np.ndarray

    def __post_init__(self):
        if self.labels.ndim != 1:
            raise ShapeError(
                f"labels must be a vector, got rank {self.labels.ndim}")
        if self.labels.size == 0:
            raise DataError("label vector is empty")
        bad = ~np.isin(self.labels, (0, 1))
        if np.any(bad):
            raise LabelError(
                f"labels must be 0 or 1, found {self.labels[bad][0]!r}")

    def __len__(self) -> int:
        return self.labels.shape[0]


def _sniff_npy(path: Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(_NPY_MAGIC)) == _NPY_MAGIC


def _load_npy(path: Path) -> np.ndarray:
    try:
        return np.load(path, allow_pickle=False)
    except (ValueError, OSError, EOFError) as exc:
        raise FormatError(f"{path}: malformed tensor file ({exc})") from exc


def _load_csv(path: Path, dtype) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty input warns before we raise
            arr = np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed CSV ({exc})") from exc
    if arr.size == 0:
        raise DataError(f"{path}: file is empty")
    return arr


def load_feature_file(path) -> FeatureMatrix | FeatureMapStack:
    """Load a rank-2 or rank-4 feature tensor (NPY or CSV).

    Returns a FeatureMatrix for rank-2 input and a FeatureMapStack for
    rank-4 input; any other rank is a ShapeError.
    """
    path = Path(path)
    if _sniff_npy(path):
        arr = _load_npy(path)
        if arr.dtype.kind != "f" or arr.dtype.itemsize not in (4, 8):
            raise FormatError(
                f"{path}: feature dtype must be 32- or 64-bit float, "
                f"got {arr.dtype}")
    else:
        arr = _load_csv(path, np.float64)
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        return FeatureMatrix(arr)
    if arr.ndim == 4:
        return FeatureMapStack(arr)
    raise ShapeError(f"{path}: expected rank 2 or 4, got rank {arr.ndim}")


def load_labels(path) -> LabelVector:
    """Load a binary label vector (rank-1 integer NPY, or one int per line)."""
    path = Path(path)
    if _sniff_npy(path):
        arr = _load_npy(path)
        if arr.dtype.kind not in "iu":
            raise FormatError(
                f"{path}: label dtype must be integer, got {arr.dtype}")
    else:
        arr = _load_csv(path, np.int64).reshape(-1)
    if arr.ndim != 1:
        raise ShapeError(f"{path}: labels must be rank 1, got rank {arr.ndim}")
    return LabelVector(arr.astype(np.int64))


def _save_npy(arr: np.ndarray, path) -> None:
    # Write through an open handle: np.save(path, ...) appends ".npy".
    with open(path, "wb") as fh:
        np.save(fh, np.ascontiguousarray(arr))


def save_features(tensor: FeatureMatrix | FeatureMapStack | np.ndarray,
                  path) -> None:
    """Write a feature tensor as little-endian float64 NPY."""
    arr = np.asarray(getattr(tensor, "data", tensor), dtype="<f8")
    if arr.ndim not in (2, 4):
        raise ShapeError(f"expected rank 2 or 4, got rank {arr.ndim}")
    _save_npy(arr, path)


def save_labels(labels: LabelVector | np.ndarray, path) -> None:
    """Write a label vector as little-endian int64 NPY."""
    _save_npy(np.asarray(getattr(labels, "labels", labels), dtype="<i8"), path)


def average_pool(maps: FeatureMapStack) -> FeatureMatrix:
    """Spatial mean over each channel's WxW map: (m, N, W, W) -> (m, N)."""
    return FeatureMatrix(maps.data.mean(axis=(2, 3)))


def _encode_lambda(lam: float) -> float | str:
    # Overflowed ratios serialize as a string: bare Infinity is invalid JSON.
    return lam if math.isfinite(lam) else "inf"


def report_to_dict(report: "DetectionReport") -> dict:
    """Render a detection report as a JSON-ready dict with fixed field order."""
    lg = np.asarray(report.log_mean_given, dtype=float)
    la = np.asarray(report.log_mean_alt, dtype=float)
    post = np.asarray(report.posterior, dtype=float)
    lams = np.asarray(report.lambdas, dtype=float)
    for name, arr in (("mean_likelihood_given", lg),
                      ("mean_likelihood_alt", la),
                      ("posterior_mislabel", post)):
        if not np.all(np.isfinite(arr)):
            raise DataError(f"report field {name} contains non-finite values")
    if np.any(np.isnan(lams)) or np.any(np.isneginf(lams)):
        raise DataError("report field lambda contains NaN or -Inf values")
    samples = []
    for i in range(len(lams)):
        samples.append({
            "index": i,
            "given_label": int(report.given_labels[i]),
            "mean_likelihood_given": float(lg[i]),
            "mean_likelihood_alt": float(la[i]),
            "lambda": _encode_lambda(float(lams[i])),
            "flagged": bool(report.flags[i]),
            "posterior_mislabel": float(post[i]),
        })
    return {
        "config": report.config_echo(),
        "samples": samples,
        "flagged": [int(i) for i in np.flatnonzero(report.flags)],
    }


def write_report(report: "DetectionReport", path) -> None:
    """Serialize a detection report to JSON (see report_to_dict)."""
    doc = report_to_dict(report)
    text = json.dumps(doc, indent=2) + "\n"
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from exc


def load_report(path) -> dict:
    """Parse a report JSON file back into a dict with numeric lambdas."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: cannot parse report ({exc})") from exc
    if not isinstance(doc, dict) or "samples" not in doc:
        raise FormatError(f"{path}: not a detection report")
    for sample in doc["samples"]:
        if sample.get("lambda") == "inf":
            sample["lambda"] = math.inf
    return doc
