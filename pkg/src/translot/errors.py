"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Bad user-supplied configuration (unknown tag, malformed file, ...)."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class PolicyLookupError(KeyError):
    """A policy was queried at a state it does not cover."""


class ModelInfeasible(RuntimeError):
    """A static model has no feasible solution."""


class BoundsWarning(UserWarning):
    """Optimal trajectories reach the truncated edge of the state lattice."""


class RegimeWarning(UserWarning):
    """Cost parameters fall outside the experimental regime K>R, K<=2R, v<b."""
