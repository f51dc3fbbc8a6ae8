"""Gaussian dynamics and quantumness of two coupled bosonic modes with gain and loss."""

__version__ = "0.1.0"

from .errors import (
    DegenerateCovariance,
    DegenerateInput,
    GridMismatch,
    NonPhysicalState,
    NotAtEP,
    PrecisionLoss,
    PTQuantumError,
    SingularKMatrix,
    StepTooLarge,
)
from .gaussian import (
    GaussianState,
    InitialState,
    covariance,
    k_matrix,
    k_real,
    state_at,
    state_margin,
    uncertainty_margin,
    wigner,
)
from .model import SystemConfig, SystemKind, derive_rates, ep_curve, ep_geometry
from .quantifiers import (
    BellSearchConfig,
    QuantifierSet,
    bell_max,
    bell_parameter,
    global_tau,
    local_tau,
    mean_photon,
    negativity,
    parity_mean,
    quantify,
    steering,
)
from .sweep import GridSpec, TimeScanConfig, boundary, compare_sweeps, grid_sweep, time_scan, write_records
