"""Exception hierarchy shared across the package."""


class DsaError(Exception):
    pass


class ParameterError(DsaError, ValueError):
    """A numeric argument is outside its documented range."""


class StateError(DsaError):
    """An operation was applied to an object in the wrong lifecycle state."""


class ValidationError(DsaError, ValueError):
    """Malformed solution, instance, scenario or file."""


class DegenerateLandscapeError(DsaError):
    pass


class OracleRefusal(DsaError):
    """Instance too large for exhaustive enumeration."""


class InfeasibleMove(DsaError):
    """Raised by a problem when a proposed neighbor is not feasible."""


class ConfigError(DsaError):
    """Collects every problem found in a config so they can be reported at once."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{key}: {msg}" for key, msg in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class DegenerateTraceError(DsaError):
    """A trace with no annealing steps cannot support overhead analysis."""
