"""Reaction-diffusion systems with nonlinear mass-transport boundary conditions on dilating domains."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AdmissibilityError,
    ConfigError,
    ContractError,
    EvodiffError,
    HorizonError,
    IntegrationError,
    ModelEvaluationError,
    ValidationError,
)
from .grid import Grid, StateField, integrate_boundary, integrate_bulk, trace  # noqa: E402
from .growth import GrowthLaw, verify_bounds  # noqa: E402
from .models import (  # noqa: E402
    BUILTINS,
    ReactionModel,
    brusselator_surface,
    builtin,
    example3,
    from_expressions,
    reversible_reaction,
)
from .solver import RunConfig, Trajectory, manufactured_convergence, run, stable_dt, step  # noqa: E402

__all__ = [
    "AdmissibilityError", "BUILTINS", "ConfigError", "ContractError", "EvodiffError", "Grid",
    "GrowthLaw", "HorizonError", "IntegrationError", "ModelEvaluationError", "ReactionModel",
    "RunConfig", "StateField", "Trajectory", "ValidationError", "brusselator_surface", "builtin",
    "example3", "from_expressions", "integrate_boundary", "integrate_bulk",
    "manufactured_convergence", "reversible_reaction", "run", "stable_dt", "step", "trace",
    "verify_bounds",
]
