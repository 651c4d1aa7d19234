"""Exception hierarchy.

Each family maps onto one CLI exit code so that scripts can branch on the
failure class without parsing messages.
"""


class QaelError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DimensionError(QaelError, ValueError):
    """Operands have incompatible Hilbert-space dimensions."""


class ModelError(QaelError, ValueError):
    """A model file or expression is malformed or violates the schema."""


class ParseError(ModelError):
    """Syntax error in an operator expression."""

    def __init__(self, message, line=1, column=1, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        where = f"line {line}, column {column}"
        super().__init__(f"{message} at {where}")


class NumericalError(QaelError, ArithmeticError):
    """Non-finite values or a failed numerical certificate."""


class AssumptionError(QaelError):
    """The fast generator falls outside the class the reduction handles.

    ``check`` is one of ``not_dissipative``, ``zero_not_semisimple``,
    ``not_dfs``, ``kraus_not_scalar_on_dfs``, ``not_cp``.
    """

    exit_code = 2

    def __init__(self, check, message, report=None):
        self.check = check
        self.report = report
        super().__init__(f"{check}: {message}")


class PreconditionError(QaelError):
    """Second-order reduction requested on a model that does not qualify."""

    exit_code = 3

    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


class InvariantError(QaelError):
    """A validation invariant failed; ``invariant`` names it."""

    exit_code = 4

    def __init__(self, invariant, message):
        self.invariant = invariant
        super().__init__(f"{invariant}: {message}")
