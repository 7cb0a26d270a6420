"""Bi-fidelity and multi-modal interpolative decomposition.

Submodules:

- ``linalg``: pivoted QR, ridge least squares, Jacobi singular values, CSV I/O
- ``idcore``: interpolative decomposition and the baseline bi-fidelity pipeline
- ``multimodal``: basis selection, cluster-conditioned resampling, prediction ensembles
- ``ode``: adaptive Runge-Kutta integrators
- ``problems``: the quadratic, pitchfork and Lotka-Volterra benchmark generators
- ``metrics``: Wasserstein-1 benchmarks, mixture statistics, error bounds
- ``cli``: the ``mmid`` command
"""

from .errors import (
    MmidError,
    NoMatchingCluster,
    NumericError,
    RankDeficient,
)
from .idcore import (
    IdFactorization,
    deterministic_bifid_pipeline,
    interpolative_decomposition,
)
from .linalg import qr_column_pivoted, ridge_least_squares, singular_values
from .metrics import w1_benchmark, wasserstein1_flat
from .multimodal import (
    MatrixEnsemble,
    PredictionEnsemble,
    SaConfig,
    basis_select_sa,
    basis_select_vertstack,
    multimodal_id_sample,
)
from .problems import make_dataset

__version__ = "0.1.0"

__all__ = [
    "IdFactorization",
    "MatrixEnsemble",
    "MmidError",
    "NoMatchingCluster",
    "NumericError",
    "PredictionEnsemble",
    "RankDeficient",
    "SaConfig",
    "basis_select_sa",
    "basis_select_vertstack",
    "deterministic_bifid_pipeline",
    "interpolative_decomposition",
    "make_dataset",
    "multimodal_id_sample",
    "qr_column_pivoted",
    "ridge_least_squares",
    "singular_values",
    "w1_benchmark",
    "wasserstein1_flat",
]
