"""Exception hierarchy.

Every failure mode is a distinct exception; nothing is reported as a silent
boolean unless the operation's contract is itself a verdict.
"""


class CoarseQCAError(Exception):
    """Base class for all library errors."""


class InputError(CoarseQCAError):
    """Malformed or inconsistent input (bad schema, mismatched spaces, ...)."""


class StructureError(CoarseQCAError):
    """A structural precondition fails (not an automorphism, margin violation,
    position-dependent index, non-square dimension, ...)."""


class IndeterminateError(CoarseQCAError):
    """A rank or equality decision falls inside the tolerance band and cannot
    be made safely at the configured tolerances."""


class ResourceError(CoarseQCAError):
    """An ambient dimension exceeds the configured cap."""
