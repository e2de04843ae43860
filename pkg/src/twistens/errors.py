"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors -> 2, failed numerical
gates -> 3, I/O problems -> 4.
"""


class TwistensError(Exception):
    """Base class for package errors."""


class DomainError(TwistensError, ValueError):
    """Input outside the mathematical domain (negative action, bad weights, ...)."""


class UsageError(TwistensError, ValueError):
    """Structurally invalid request (bad sizes, missing pieces, wrong mode)."""


class UnsupportedError(TwistensError, NotImplementedError):
    """Operation not available for this model/density combination."""


class DegeneratePointError(DomainError):
    """Phase-space point where the transform is singular (the origin)."""


class NumericalGateError(TwistensError, RuntimeError):
    """A numerical acceptance gate failed (used by the CLI for exit code 3)."""
