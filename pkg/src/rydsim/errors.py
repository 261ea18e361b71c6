"""Exception types raised across the package."""


class RydsimError(Exception):
    """Base class for all package errors."""


class NonConvergence(RydsimError):
    """Automatic step refinement did not stabilise."""


class InvariantViolation(RydsimError):
    """The density matrix left the physical set (trace drift, typically).

    ``trajectory`` is filled in by the Monte Carlo layer so a failing
    member of an ensemble can be reproduced on its own.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory

    def __str__(self):
        base = super().__str__()
        if self.trajectory is None:
            return base
        return f"trajectory {self.trajectory}: {base}"


class NoResonance(RydsimError):
    """No dip deeper than the noise floor was found in a detuning scan."""


class FitError(RydsimError):
    """Base class for curve-fitting failures."""


class SingularJacobian(FitError):
    """Model parameters are not identifiable from the data."""


class NoOscillation(FitError):
    """No oscillation stands out of the spectral noise floor."""


class DivisionDomain(RydsimError, ZeroDivisionError):
    """A closed-form expression was evaluated at a pole."""


class ConfigError(RydsimError):
    """Malformed run configuration; ``lineno`` points at the offending line."""

    def __init__(self, message, lineno=None):
        super().__init__(message)
        self.lineno = lineno

    def __str__(self):
        base = super().__str__()
        return base if self.lineno is None else f"line {self.lineno}: {base}"
