"""Exception hierarchy shared by every module

CLI exit codes: ConfigError -> 2, NumericalError -> 3.
"""


class ScoreInfError(Exception):
    """Base class for all errors raised by this package"""


class ConfigError(ScoreInfError, ValueError):
    """Invalid configuration file, flag or preset"""


class InvalidEdgeError(ScoreInfError, ValueError):
    """Edge (a, b) with a == b or a node outside [0, p)"""


class DomainError(ScoreInfError, ValueError):
    """Data outside the model's support (e.g. negative entries for R_+ families)"""


class EmptyDataError(ScoreInfError, ValueError):
    """Data matrix with no rows"""


class InvalidSpecError(ScoreInfError, ValueError):
    """Model specification violating a family invariant"""


class NumericalError(ScoreInfError):
    """A numerical procedure could not produce a valid answer"""


class SingularSystemError(NumericalError):
    """Restricted linear system singular even after the ridge rescue"""


class InfeasibleError(NumericalError):
    """Constraint set of a CLIME row is empty"""


class OverparameterizedError(NumericalError):
    """Step-3 support at least as large as the sample size"""


class DegenerateVarianceError(NumericalError):
    """Zero variance or zero sigma_n where a positive value is required"""
