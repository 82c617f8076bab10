"""Exception hierarchy for lspiafit.

Every error also derives from the builtin it refines, so callers that only
know about ``ValueError`` or ``IndexError`` keep working.
"""


class LspiaError(Exception):
    """General error for fitting-related failures."""


class DomainError(LspiaError, ValueError):
    """A parameter value lies outside the domain of a basis."""


class IndexRangeError(LspiaError, IndexError):
    """A basis index or flat control index is out of range."""


class ShapeError(LspiaError, ValueError):
    """Matrix or point dimensions do not agree."""


class DegenerateInputError(LspiaError, ValueError):
    """Input data cannot define a fitting problem (e.g. zero chord length)."""


class SingularAssemblyError(LspiaError, ValueError):
    """
    Raised under the strict empty-group policy.

    The ``.indices`` attribute lists the control indices whose group is empty.
    """

    def __init__(self, indices):
        self.indices = [int(i) for i in indices]
        shown = ', '.join(str(i) for i in self.indices[:20])
        if len(self.indices) > 20:
            shown += ', ...'
        super().__init__(
            f"{len(self.indices)} control point(s) have no data in their support: {shown}"
        )


class NumericalFailureError(LspiaError, ArithmeticError):
    """Non-finite values appeared or a dense decomposition failed."""


class DegenerateMatrixError(LspiaError, ValueError):
    """The collocation matrix has no nonzero entries."""


class DenseLimitError(LspiaError, ValueError):
    """A dense oracle computation was requested for a problem that is too large."""

    def __init__(self, size, limit):
        self.size = size
        self.limit = limit
        super().__init__(
            f"problem has {size} control points, dense limit is {limit}; "
            f"use sampled diagnostics or raise dense_limit"
        )


class VerificationError(LspiaError, AssertionError):
    """A numerical identity expected from the theory did not hold."""


class ParseError(LspiaError, ValueError):
    """
    A point file could not be parsed.

    The ``.line`` attribute carries the 1-based line number, if known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(LspiaError, ValueError):
    """Configuration is invalid or contradictory."""
