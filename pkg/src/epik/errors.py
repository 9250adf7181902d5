"""Exception hierarchy for the epik model checker."""

from __future__ import annotations


class EpikError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EpikError):
    """Syntax or validation error in a model file or formula string."""

    def __init__(self, message: str, filename: str = "<input>", line: int = 0, col: int = 0):
        self.message = message
        self.filename = filename
        self.line = line
        self.col = col
        super().__init__(f"{filename}:{line}:{col}: {message}")


class RegistryError(EpikError):
    """Inconsistent variable registration (duplicate id, empty frame)."""


class FrameMismatchError(EpikError):
    """Two relations disagree on the frame of a shared variable."""


class FusionOrderError(EpikError):
    """Elimination order is not a permutation of the eliminable variables."""


class GraphError(EpikError):
    """Malformed graph input (cycle, unknown vertex, overlapping sets)."""


class UnsatisfiableInitError(EpikError):
    """The initial condition has no satisfying assignment."""


class StateSpaceOverflowError(EpikError):
    """Explicit enumeration would exceed the configured world cap."""


class EmptyModelError(EpikError):
    """A structured model combined to an empty world relation."""


class CheckError(EpikError):
    """Invalid model-checking request (unknown atom, world, or agent)."""
