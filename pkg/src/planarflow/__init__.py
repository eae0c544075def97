"""Pathwise numerics for planar stochastic flows dZ = F(Z) dt + dU on the upper half-plane."""

__version__ = "0.1.0"

from .errors import (DomainError, ExplosionError, NumericalError, ParameterError,  # noqa: E402
                     PlanarFlowError, SingularityError, SpanError, UnsupportedFieldError)
from .fields import (constant, eval_antiderivative, eval_field, herglotz, inversion,  # noqa: E402
                     iterate_field, power, shift_field)
from .paths import custom_path, refine, sample_brownian, time_reversal, zero_path  # noqa: E402
from .flow import (boundary_curve, check_flow_property, closed_form_power_flow,  # noqa: E402
                   flow_map, integrate)
from .derivative import compute_V, finite_difference_check, identity_residual  # noqa: E402

__all__ = [
    "DomainError", "ExplosionError", "NumericalError", "ParameterError", "PlanarFlowError",
    "SingularityError", "SpanError", "UnsupportedFieldError",
    "constant", "eval_antiderivative", "eval_field", "herglotz", "inversion", "iterate_field",
    "power", "shift_field",
    "custom_path", "refine", "sample_brownian", "time_reversal", "zero_path",
    "boundary_curve", "check_flow_property", "closed_form_power_flow", "flow_map", "integrate",
    "compute_V", "finite_difference_check", "identity_residual",
]
