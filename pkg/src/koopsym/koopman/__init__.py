"""Principal Koopman eigenfunctions: estimation, cross-checks and derived frames."""

from .estimate import (
    CONVERGED,
    DIVERGED_TRAJECTORY,
    NON_CONVERGENT,
    SINGULAR,
    STATUSES,
    ConvergenceSchedule,
    Eigenfunction,
    EigenfunctionField,
    EstimateInfo,
    eigenfunction_jacobian,
    eigenfunctions_at_horizon,
    estimate_eigenfunction,
    estimate_field,
    estimate_fields,
    estimate_points,
    path_integral_eigenfunction,
    scale_by_exponential,
)
from .io import field_metadata, field_to_csv, read_field_csv, write_field_csv, write_metadata
from .properties import (
    FrameSample,
    Reconstruction,
    conjugate_eigenfunction,
    eigenfunction_gradients,
    field_interpolant,
    gradient_field,
    log_gradient_frame_field,
    magnitude_floor,
    power_eigenfunction,
    product_eigenfunction,
    reconstruct_dynamics,
    reconstruct_field,
    symmetry_frame,
    symmetry_frame_field,
    symmetry_frames,
    verify_eigenfunction_property,
)

__all__ = [
    "CONVERGED", "DIVERGED_TRAJECTORY", "NON_CONVERGENT", "SINGULAR", "STATUSES",
    "ConvergenceSchedule", "Eigenfunction", "EigenfunctionField", "EstimateInfo", "FrameSample",
    "Reconstruction", "conjugate_eigenfunction", "eigenfunction_gradients",
    "eigenfunction_jacobian", "eigenfunctions_at_horizon", "estimate_eigenfunction",
    "estimate_field", "estimate_fields", "estimate_points", "field_interpolant",
    "field_metadata", "field_to_csv", "gradient_field", "log_gradient_frame_field",
    "magnitude_floor", "path_integral_eigenfunction", "power_eigenfunction",
    "product_eigenfunction", "read_field_csv", "reconstruct_dynamics", "reconstruct_field",
    "scale_by_exponential", "symmetry_frame", "symmetry_frame_field", "symmetry_frames",
    "verify_eigenfunction_property", "write_field_csv", "write_metadata",
]
