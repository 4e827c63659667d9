"""veriq: quality-driven prediction and evaluation of face-verification
performance.

Submodules:
  dataio      verification-record CSV IO and synthetic datasets
  quality     quality-space regions and measurement calibration
  errormodel  Beta posteriors over error rates, (q, r) sampling
  mixture     constrained-covariance Gaussian mixtures and conditioning
  metrics     FAR/FRR, ROC, AUC, HTER, error-versus-reject curves
  alignment   eye-landmark geometry and perturbation generators
  uniqueness  impostor-score uniqueness statistics
  cli         batch command-line interface
"""

from . import alignment, dataio, errormodel, metrics, mixture, quality, uniqueness
from .errors import NumericError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "alignment",
    "dataio",
    "errormodel",
    "metrics",
    "mixture",
    "quality",
    "uniqueness",
    "NumericError",
    "ValidationError",
    "__version__",
]
