"""koopsym: principal Koopman eigenfunctions of stable equilibria and numerical
certification of their symmetry frames."""

__version__ = "0.1.0"

from . import dynamics, geometry, koopman, spectral
from .dynamics import GridSpec, SystemSpec, flow, flow_with_sensitivity, get_system, registry
from .estimator import PrincipalEigenfunctions
from .exceptions import (
    BelowFloorError,
    DivergedTrajectoryError,
    EvaluationError,
    KoopsymError,
    NotDiagonalizableError,
    NotHurwitzError,
    ResonanceError,
    SingularFrameError,
    UnknownSystemError,
)
from .geometry import CertificationReport, Frame, invert_frame, lie_bracket, lie_derivative
from .koopman import ConvergenceSchedule, Eigenfunction, EigenfunctionField, estimate_eigenfunction, estimate_field
from .spectral import SpectralData, check_resonance, linearize

__all__ = [
    "BelowFloorError", "CertificationReport", "ConvergenceSchedule", "DivergedTrajectoryError",
    "Eigenfunction", "EigenfunctionField", "EvaluationError", "Frame", "GridSpec", "KoopsymError",
    "NotDiagonalizableError", "NotHurwitzError", "PrincipalEigenfunctions", "ResonanceError",
    "SingularFrameError", "SpectralData", "SystemSpec", "UnknownSystemError", "check_resonance",
    "dynamics", "estimate_eigenfunction", "estimate_field", "flow", "flow_with_sensitivity",
    "geometry", "get_system", "invert_frame", "koopman", "lie_bracket", "lie_derivative",
    "linearize", "registry", "spectral",
]
