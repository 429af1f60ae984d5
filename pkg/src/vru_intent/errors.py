"""Exceptions shared across the pipeline.

The CLI maps these to exit codes: ContractError -> 2 (bad input),
DegenerateError -> 3 (numerical / degenerate failure).
"""


class ContractError(ValueError):
    """Input violates a documented contract (schema, ordering, dimensions)."""


class DegenerateError(ArithmeticError):
    """Numerically degenerate data (zero height, single-class labels, ...)."""
