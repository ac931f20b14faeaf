"""
Exception hierarchy for the Stieltjes toolkit.

Input problems derive from ValueError so callers that only know the standard
library still catch them; numerical failures derive from ArithmeticError.
The CLI maps the two branches to different exit codes.
"""


class StieltjesError(Exception):
    """
    Base class for all toolkit errors.
    """


class InputError(StieltjesError, ValueError):
    """
    Malformed or out-of-domain input.
    """


class DomainError(InputError):
    """
    A time or interval lies outside the derivator domain.
    """


class SchemaError(InputError):
    """
    A data file does not conform to its documented schema.
    """


class NonUniformGrid(InputError):
    """
    A time grid that must be uniform is not.
    """


class ConfigError(InputError):
    """
    A configuration file has unknown keys or invalid values.
    """


class GridMismatch(InputError):
    """
    A trajectory grid is incompatible with the problem it is checked against.
    """


class MissingDerivativeOracle(InputError):
    """
    The continuous chain-rule branch was reached without h'.
    """


class NumericalError(StieltjesError, ArithmeticError):
    """
    A numerical procedure failed.
    """


class NonConvergence(NumericalError):
    """
    A difference-quotient limit did not settle within the window schedule.
    """


class DegenerateDenominator(NumericalError):
    """
    Every sampled point had g(s) = g(t*).
    """


class NoConvergence(NumericalError):
    """
    Picard iteration hit its iteration limit.
    """


class GuardViolation(NumericalError):
    """
    A state left its admissible interval under the Reject policy.
    """


class NonFiniteState(NumericalError):
    """
    A solver produced a NaN or infinite state.
    """


class NonFiniteValue(NumericalError):
    """
    A user callable returned a NaN or infinite value.
    """
