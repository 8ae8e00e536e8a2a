"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GreenTeError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


class StructuralError(GreenTeError):
    """An instance or state references an unknown link, path, pair or node."""


class DegenerateInstanceError(GreenTeError):
    """The instance has no energy baseline to compare against."""


class SolverFailure(GreenTeError):
    """The simplex kernel hit numerical trouble it cannot resolve."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibleError(GreenTeError):
    """No split satisfies the demands within the active capacities."""

    def __init__(self, message: str, pairs: list[str] | None = None):
        super().__init__(message)
        self.pairs = list(pairs or [])


class SizeLimitError(GreenTeError):
    """Exact search refused because the instance is above the configured size."""


class NonConvergence(GreenTeError):
    """Iteration cap reached; ``best_state`` holds the best state seen."""

    def __init__(self, message: str, best_state=None, partial=None):
        super().__init__(message)
        self.best_state = best_state
        self.partial = partial


class PathsExhausted(GreenTeError):
    """No IE pair has two or more active paths left to choose from."""


class GenerationFailure(GreenTeError):
    """The topology generator could not produce a connected graph."""


class CorruptTraceError(GreenTeError):
    """A simulation trace references entities the instance does not have."""
