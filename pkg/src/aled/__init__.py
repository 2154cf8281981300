"""Label-error detection for binary classification feature embeddings.

The pipeline: average-pool network feature maps, project onto the class
centroid difference plus random directions, fit a robust Gaussian per class
with the Minimum Covariance Determinant estimator, and flag samples whose
alternate-label likelihood outweighs the given-label likelihood.
"""

from .detector import (DetectionReport, DetectorConfig, classify_labels,
                       detect, ensemble_likelihoods, likelihood_ratio,
                       posterior_mislabel)
from .errors import (AledError, ClassError, DataError, DegenerateError,
                     DetectionError, FormatError, LabelError,
                     NotPositiveDefiniteError, RankError, ShapeError,
                     UndefinedMetricError)
from .gaussian import (GaussianModel, cholesky_factor, fit_mle, log_pdf,
                       mahalanobis_sq)
from .mcd import (McdConfig, McdFit, c_step, consistency_correction,
                  consistency_factor, fast_mcd, support_size)
from .metrics import MetricsSummary, auprc, confusion_metrics, with_auprc
from .projection import (ProjectionBasis, UnivariateGaussian,
                         assemble_projection, class_centroids, hellinger_sq,
                         project, random_basis, rayleigh_quotient)
from .simulate import (SynthSpec, TrialAggregate, TrialOutcome,
                       inject_label_noise, mle_probe_accuracy, run_trials,
                       synth_features)
from .tensor_io import (FeatureMapStack, FeatureMatrix, LabelVector,
                        average_pool, load_feature_file, load_labels,
                        load_report, save_features, save_labels,
                        write_report)

__version__ = "0.1.0"

__all__ = [
    "AledError", "ClassError", "DataError", "DegenerateError",
    "DetectionError", "DetectionReport", "DetectorConfig", "FeatureMapStack",
    "FeatureMatrix", "FormatError", "GaussianModel", "LabelError",
    "LabelVector", "McdConfig", "McdFit", "MetricsSummary",
    "NotPositiveDefiniteError", "ProjectionBasis", "RankError", "ShapeError",
    "SynthSpec", "TrialAggregate", "TrialOutcome", "UndefinedMetricError",
    "UnivariateGaussian", "assemble_projection", "auprc", "average_pool",
    "c_step", "cholesky_factor", "class_centroids", "classify_labels",
    "confusion_metrics", "consistency_correction", "consistency_factor",
    "detect", "ensemble_likelihoods", "fast_mcd", "fit_mle", "hellinger_sq",
    "inject_label_noise", "likelihood_ratio", "load_feature_file",
    "load_labels", "load_report", "log_pdf", "mahalanobis_sq",
    "mle_probe_accuracy", "posterior_mislabel", "project", "random_basis",
    "rayleigh_quotient", "run_trials", "save_features", "save_labels",
    "support_size", "synth_features", "with_auprc", "write_report",
]
