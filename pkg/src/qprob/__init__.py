"""Finite-dimensional quantum probability: POVMs, quantum expectations,
Radon-Nikodym derivatives and conditional expectations on finite spaces."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    InstanceError,
    NotPSDError,
    NumericalError,
    PreconditionError,
    QProbError,
)
from .herm import DEFAULT_TOL, Tolerances, geometric_mean, spectral_decompose
from .measure import (
    Partition,
    QuantumMeasure,
    SampleSpace,
    dnu_dmu,
    induced_mu,
    is_abs_continuous,
    random_partition,
    random_povm,
    restrict,
    validate,
)
from .qrv import (
    QuantumRandomVariable,
    expectation,
    integral_over,
    law,
    random_density_matrix,
    random_qrv,
)
from .calculus import RNContext, boxtimes, rn_derivative, verify_rn
from .conditional import cond_expectation
