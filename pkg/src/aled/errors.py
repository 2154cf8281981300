"""Exception hierarchy shared across the package.

Input-side problems (bad files, bad shapes, bad labels) and numerical
failures (degenerate fits, non-PD matrices) are kept in separate branches
so the CLI can map them to distinct exit codes.
"""


class AledError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(AledError):
    """A file does not follow one of the supported layouts."""


class DataError(AledError):
    """File contents are unusable (NaN/Inf entries, empty input, ...)."""


class ShapeError(AledError):
    """Tensor rank or dimensions violate an operation's contract."""


class LabelError(AledError):
    """A label value is outside {0, 1}."""


class ClassError(AledError):
    """A class is absent or has too few samples for the requested fit."""


class UndefinedMetricError(AledError):
    """A metric is undefined for the given inputs (e.g. no positives)."""


class RankError(AledError):
    """Sample covariance is rank-deficient or there are too few samples."""


class NotPositiveDefiniteError(AledError):
    """A matrix expected to be positive definite is not."""


class DegenerateError(AledError):
    """A numerical procedure hit a degenerate configuration."""


class DetectionError(AledError):
    """Every ensemble member failed; no likelihoods could be produced."""


#: Errors caused by user-supplied inputs -> CLI exit code 2.
INPUT_ERRORS = (FormatError, DataError, ShapeError, LabelError, ClassError,
                UndefinedMetricError)

#: Errors arising inside the numerics -> CLI exit code 3.
NUMERICAL_ERRORS = (RankError, NotPositiveDefiniteError, DegenerateError,
                    DetectionError)
