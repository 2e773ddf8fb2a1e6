"""Typed exceptions shared across the package.

All exceptions derive from ``V2XSplatError`` so callers (notably the CLI)
can convert any expected failure into a diagnostic plus nonzero exit code.
Where a builtin type fits, it is mixed in so generic handlers keep working.
"""


class V2XSplatError(Exception):
    """Base class for every expected failure raised by this package."""


class InvalidInputError(V2XSplatError, ValueError):
    """Inputs violate a documented precondition (shape, finiteness, range)."""


class FrameRangeError(V2XSplatError, IndexError):
    """A frame index falls outside the scene's frame range."""


class SceneEditConflictError(V2XSplatError, KeyError):
    """Inserting a duplicate object id, or removing an unknown one."""


class MapParseError(V2XSplatError, ValueError):
    """Vector-map file is malformed or contains dangling lane references."""


class LaneNotFoundError(V2XSplatError, LookupError):
    """No lane satisfies the seed-selection predicate."""


class TrajectoryGenerationError(V2XSplatError, RuntimeError):
    """No collision-free trajectory found within the attempt budget."""


class ManifestError(V2XSplatError, ValueError):
    """Scene manifest is malformed or references missing files."""


class NonFiniteLossError(V2XSplatError, ArithmeticError):
    """A training loss term became non-finite; names the offending term."""

    def __init__(self, term: str, value: float):
        super().__init__(f"loss term '{term}' is non-finite ({value})")
        self.term = term
        self.value = value
