"""Vector fields, the system registry and flow integration."""

from .expr import Expression, compile_field
from .integrate import (
    COMPLETED,
    DEFAULT_TOL,
    DIVERGED,
    STEP_FAILURE,
    Trajectory,
    flow,
    flow_batch,
    flow_with_sensitivity,
    flow_with_sensitivity_batch,
)
from .systems import (
    GridSpec,
    SystemSpec,
    fd_jacobian,
    get_system,
    linear_system,
    load_system_config,
    registry,
    resonant_quadratic,
    van_der_pol,
    van_der_pol_reverse,
)

__all__ = [
    "COMPLETED", "DEFAULT_TOL", "DIVERGED", "STEP_FAILURE", "Expression", "GridSpec",
    "SystemSpec", "Trajectory", "compile_field", "fd_jacobian", "flow", "flow_batch",
    "flow_with_sensitivity", "flow_with_sensitivity_batch", "get_system", "linear_system",
    "load_system_config", "registry", "resonant_quadratic", "van_der_pol",
    "van_der_pol_reverse",
]
