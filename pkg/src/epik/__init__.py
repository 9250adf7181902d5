"""epik: a model checker for multi-agent knowledge logic under synchronous
perfect recall, built around a conditional-independence optimization that
shrinks the variable set a query actually needs."""

from .errors import (
    CheckError,
    EmptyModelError,
    EpikError,
    FrameMismatchError,
    FusionOrderError,
    GraphError,
    ParseError,
    RegistryError,
    StateSpaceOverflowError,
    UnsatisfiableInitError,
)

__version__ = "0.1.0"

__all__ = [
    "CheckError",
    "EmptyModelError",
    "EpikError",
    "FrameMismatchError",
    "FusionOrderError",
    "GraphError",
    "ParseError",
    "RegistryError",
    "StateSpaceOverflowError",
    "UnsatisfiableInitError",
    "__version__",
]
