"""Exception hierarchy.

``DataError`` covers malformed inputs, model files, and configuration (CLI
exit code 3); ``NumericalError`` covers optimizer and test-statistic
failures (exit code 4).
"""


class VlmcxError(Exception):
    """Base class for all library errors."""


class DataError(VlmcxError):
    """Invalid input data, model file, or configuration."""


class NumericalError(VlmcxError):
    """Numerical failure in fitting or testing."""


class MalformedModel(DataError):
    """Context tree or model file violates a structural invariant."""


class HistoryTooShort(DataError):
    """State history shorter than the depth needed to reach a leaf."""


class RootHasNoSiblings(VlmcxError):
    """Sibling query on the root context."""


class ChildrenNotLeaves(VlmcxError):
    """Merge requested at a node whose children are not all leaves."""


class AlphabetMismatch(DataError):
    """Operands disagree on state-space size or covariate dimension."""


class DataTooShort(DataError):
    """Not enough observations to satisfy the per-parameter count rule."""


class LagMismatch(DataError):
    """Fewer covariate rows supplied than the coefficient block requires."""


class NotConverged(NumericalError):
    """Newton iteration exhausted without meeting the gradient tolerance."""

    def __init__(self, iterations: int, message: str | None = None):
        self.iterations = iterations
        super().__init__(message or f"no convergence after {iterations} iterations")


class DomainError(VlmcxError):
    """Argument outside the mathematical domain of a distribution function."""


class NestingViolation(NumericalError):
    """Null log-likelihood exceeds the alternative beyond tolerance."""


class AllFitsFailed(NumericalError):
    """Every grid point in a tuning search failed to fit."""


class UnknownModel(DataError):
    """Unrecognized built-in model name."""


class MissingColumn(DataError):
    """CSV lacks a column requested by the ingestion spec."""


class NonNumericCell(DataError):
    """CSV cell cannot be parsed as a number."""

    def __init__(self, row: int, column: str, message: str | None = None):
        self.row = row
        self.column = column
        super().__init__(message or f"non-numeric cell at row {row}, column {column!r}")


class EmptyAfterTransform(DataError):
    """No usable rows remain after the requested column transforms."""
