"""Exception hierarchy.

Model errors (bad physics, failed solves) map to CLI exit code 1, config
errors to exit code 2.
"""


class CrackfieldError(Exception):
    """Base class for all package errors."""


class ModelError(CrackfieldError):
    """A numerical or physical failure while evaluating the model."""


class NonOrthogonalRotationError(ModelError, ValueError):
    pass


class DegeneratePliabilityError(ModelError):
    """Compliance is singular (screened volume fraction approaching one)."""


class NearSingularScreeningError(ModelError):
    """theta * sum(p) is too close to 1 for the effective-stress system."""


class ClassificationError(ModelError):
    """No self-consistent open/closed assignment of crack families exists."""


class ClassificationBoundaryError(ModelError):
    """Input lies on an open/closed boundary where pliabilities jump."""


class InvariantViolation(ModelError):
    """A state invariant failed beyond tolerance during integration."""


class IntegrationError(ModelError):
    """The ODE integrator failed (step-size underflow etc.)."""


class RateOverflowError(ModelError):
    """A transition intensity exceeded the floating point range."""


class AdmissibilityError(ModelError, ValueError):
    """Input outside the admissible domain of a closed-form relation."""


class FitError(ModelError):
    """A least-squares fit could not be carried out."""


class ConfigError(CrackfieldError):
    """Invalid configuration file or command line."""
