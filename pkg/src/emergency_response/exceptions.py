"""Exception types raised by the package.

Invalid arguments (wrong shapes, out-of-range probabilities, ...) raise the
builtin :class:`ValueError`; the classes below cover the remaining failure
modes so callers can tell them apart.
"""


class InsufficientDataError(ValueError):
    """Not enough samples to compute the requested quantity."""


class DegenerateDataError(ValueError):
    """Samples carry no spread (e.g. all values identical)."""


class NumericalFailureError(RuntimeError):
    """A factorization could not be made to succeed."""


class EpisodeCompleteError(RuntimeError):
    """A response episode was stepped after reaching its length."""


class TerminalStateError(RuntimeError):
    """A simulated world was stepped after a collision."""
