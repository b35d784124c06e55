"""Two-location stochastic lot sizing with proactive lateral transshipment."""
from .core import Action, Instance, State
from .demand import DemandSpec, DiscreteDist, Normal, discretize, make_pattern
from .errors import (BoundsWarning, ConfigurationError, DomainError, ModelInfeasible,
                     PolicyLookupError, RegimeWarning)

__all__ = [
    "Action", "Instance", "State", "DemandSpec", "DiscreteDist", "Normal", "discretize",
    "make_pattern", "BoundsWarning", "ConfigurationError", "DomainError", "ModelInfeasible",
    "PolicyLookupError", "RegimeWarning",
]
__version__ = "0.1.0"
