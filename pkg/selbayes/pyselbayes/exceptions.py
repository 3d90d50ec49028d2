"""Exceptions raised by the selection-aware scoring library."""

from __future__ import annotations


class SelBayesError(Exception):
    """Base class for library errors."""


class StructureError(SelBayesError, ValueError):
    """A network structure or variable declaration is invalid."""


class CycleError(StructureError):
    """A set of edges contains a directed cycle."""

    def __init__(self, cycle: list[tuple[str, str]]) -> None:
        """Initialize with the offending cycle."""
        self.cycle = cycle
        path = " -> ".join([cycle[0][0], *(child for _, child in cycle)])
        super().__init__(f"Cycle detected: {path}")


class InferenceError(SelBayesError, ValueError):
    """Exact inference could not be carried out."""


class PriorError(SelBayesError, ValueError):
    """A prior specification is invalid or cannot be built."""


class DataError(SelBayesError, ValueError):
    """A dataset violates a precondition of the requested computation."""


class BudgetExceededError(SelBayesError):
    """An exact computation needs more terms than the budget allows."""

    def __init__(self, terms: int | None, budget: int, what: str = "terms") -> None:
        """Initialize with the computed term count."""
        self.terms = terms
        self.budget = budget
        if terms is None:
            message = f"Number of {what} exceeds budget (more than 2^63)"
        else:
            message = f"Number of {what} {terms} exceeds budget {budget}"
        super().__init__(message)


class MethodUnavailableError(SelBayesError):
    """A scoring method's preconditions do not hold."""


class SearchError(SelBayesError):
    """Structure search cannot proceed."""


class SimulationError(SelBayesError):
    """A simulation request cannot be satisfied."""


class SpecError(SelBayesError):
    """A specification document failed validation."""

    def __init__(self, errors: list[str], source: str | None = None) -> None:
        """Initialize with every validation message."""
        self.errors = errors
        self.source = source
        prefix = f"{source}: " if source else ""
        super().__init__(prefix + "; ".join(errors))
