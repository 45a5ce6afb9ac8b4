"""Exception hierarchy shared across the package."""


class CompstabError(Exception):
    """Base class for all package errors."""


class ParseError(CompstabError):
    """Syntax error in an expression string.

    ``offset`` is the byte offset into the source text where parsing failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class DomainError(CompstabError, ArithmeticError):
    """Numeric-domain failure: division by zero, sqrt of a negative, overflow."""


class NumericError(CompstabError):
    """A numerical routine failed (eigensolver, integrator, Newton iteration)."""


class NoSolution(NumericError):
    """Gauss-Newton stalled above tolerance."""

    def __init__(self, message, residual=float("nan"), point=None):
        super().__init__(message)
        self.residual = residual
        self.point = point


class SingularAtOrigin(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class StepSizeUnderflow(NumericError):
    pass


class NonFiniteState(NumericError):
    pass


class TableIncomplete(CompstabError):
    """Raised when some grid nodes could not be solved.

    The partially filled table is attached as ``table`` and the failing
    node indices as ``unsolved``.
    """

    def __init__(self, message, table, unsolved):
        super().__init__(message)
        self.table = table
        self.unsolved = list(unsolved)


class SectionIncomplete(TableIncomplete):
    pass


class NotSynthesizable(TableIncomplete):
    pass


class ConfigError(CompstabError):
    def __init__(self, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
