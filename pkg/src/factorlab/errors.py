"""Error types raised by factor operations.

Every error carries a machine-readable ``code`` (the class name) so callers
such as the CLI can map failures to exit codes without string matching.
"""


class FactorError(Exception):
    """Base class for all factor-algebra errors."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def __init__(self, message: str = "", **context):
        self.context = context
        super().__init__(message or self.code)


class MissingVariable(FactorError):
    pass


class Unsupported(FactorError):
    pass


class UnsupportedPair(FactorError):
    pass


class DomainMismatch(FactorError):
    pass


class NotInScope(FactorError):
    pass


class NotIntegrable(FactorError):
    pass


class NotNormalizable(FactorError):
    pass


class DivisionByZero(FactorError):
    pass


class ScopeMismatch(FactorError):
    pass


class ZeroMass(FactorError):
    pass


class Degenerate(FactorError):
    pass


class IndexOutOfRange(FactorError):
    pass


class QuadratureNonConvergence(FactorError):
    pass


class EmptyQuery(FactorError):
    pass


class ConfigInvalid(FactorError):
    pass


class ParseError(FactorError):
    """Malformed model document; ``line``/``column`` locate the problem."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where, line=line, column=column)


class SchemaError(FactorError):
    """Well-formed document that violates the model schema; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(prefix + message, field=field)


class StepError(FactorError):
    """Wraps a failure inside a sequential algorithm with the step index attached."""

    def __init__(self, step: int, cause: FactorError):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {cause.code}: {cause}", step=step)

    @property
    def code(self) -> str:
        return self.cause.code
