"""Sparse multivariate functional linear discriminant analysis.

Subjects observed at irregular times on many features are smoothed into
B-spline curves; discriminant functions beta(t) are found by a generalized
eigenproblem and then sparsified so that only a few features contribute.
"""

__version__ = "0.1.0"

from .classify import ks_separation, nearest_centroid, project
from .errors import ConfigError, DataError, MfldaError, NumericError
from .fd_model import FunctionalDataSet, SplineBasis, read_long_csv, smooth_dataset, standardize
from .lda_core import solve_nonsparse
from .metrics import evaluate, selection_metrics
from .model import fit, fit_at, prepare
from .preprocess import PreprocessConfig, preprocess
from .scatter import TIME_DEPENDENT, TIME_INDEPENDENT, scatter_pair
from .simgen import SimConfig, generate
from .sparse import SparseProblem, solve_sparse, sparsify
from .tuning import CvConfig, cross_validate, find_tau_range, tune

__all__ = [
    "__version__", "ks_separation", "nearest_centroid", "project", "ConfigError", "DataError",
    "MfldaError", "NumericError", "FunctionalDataSet", "SplineBasis", "read_long_csv",
    "smooth_dataset", "standardize", "solve_nonsparse", "evaluate", "selection_metrics", "fit",
    "fit_at", "prepare", "PreprocessConfig", "preprocess", "TIME_DEPENDENT", "TIME_INDEPENDENT",
    "scatter_pair", "SimConfig", "generate", "SparseProblem", "solve_sparse", "sparsify",
    "CvConfig", "cross_validate", "find_tau_range", "tune",
]
