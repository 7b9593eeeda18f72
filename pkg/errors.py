"""
Exception hierarchy shared by the corner-flow front-tracking modules.

Input problems derive from ValueError, numerical breakdowns from RuntimeError,
so callers that only care about the broad category can catch the builtin.
"""


class CornerFlowError(Exception):
    """Root of every error raised by this package."""


# --- invalid inputs -------------------------------------------------------

class InvalidState(CornerFlowError, ValueError):
    """A gas state with non-positive pressure or density."""


class SubsonicState(CornerFlowError, ValueError):
    """A state that is required to satisfy u > c but does not."""


class OutOfRange(CornerFlowError, ValueError):
    """An argument outside the domain of a thermodynamic function."""


class EntropyViolation(CornerFlowError, ValueError):
    """A shock requested on the branch that violates the entropy condition."""


class PressureOutOfRange(CornerFlowError, ValueError):
    """The static-gas pressure is outside (p_*, p_plus)."""


class TVTooLarge(CornerFlowError, ValueError):
    """The initial profile has more total variation than allowed."""


class ParseError(CornerFlowError, ValueError):
    """A configuration file that cannot be read or validated."""


class GateViolation(CornerFlowError, ValueError):
    """A scenario precondition failed. Carries the name of the failing inequality."""

    def __init__(self, message, inequalities=None):
        super().__init__(message)
        self.inequalities = list(inequalities or [])


class WeightInequalityError(GateViolation):
    """One or more of the Glimm weight inequalities does not hold."""


class ConstantsInvalid(CornerFlowError, ValueError):
    """Estimated constants that make the mu_delta recipe meaningless."""


# --- numerical failures ---------------------------------------------------

class LeftSupersonicLost(CornerFlowError, RuntimeError):
    """A wave curve left the supersonic region u > c."""


class StepFailure(CornerFlowError, RuntimeError):
    """The rarefaction integrator could not meet its tolerance."""


class NoRoot(CornerFlowError, RuntimeError):
    """The Rankine-Hugoniot system has no admissible solution in range."""


class Unreachable(CornerFlowError, RuntimeError):
    """A target pressure outside the monotone range of the 3-curve."""


class NoConvergence(CornerFlowError, RuntimeError):
    """Newton iteration for a Riemann problem did not converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class UnclassifiableGeometry(CornerFlowError, RuntimeError):
    """Two fronts met in a configuration the interaction table does not cover."""


class AuditFailure(CornerFlowError, RuntimeError):
    """The Glimm functional failed to decrease at an interaction."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
