"""Exception hierarchy shared across the engine."""


class AqpError(Exception):
    """Base class for all errors raised by this package."""


# --- relational layer ---------------------------------------------------


class ParseError(AqpError):
    """A CSV cell failed to parse to its declared column kind."""

    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ArityError(AqpError):
    """A CSV record had the wrong number of fields."""

    def __init__(self, line: int, expected: int, got: int):
        super().__init__(f"line {line}: expected {expected} fields, got {got}")
        self.line = line


class UnknownTable(AqpError):
    pass


class DuplicateTable(AqpError):
    pass


class TypeMismatch(AqpError):
    pass


class EvaluationError(AqpError):
    pass


class DivideByZero(EvaluationError):
    pass


class SchemaMismatch(AqpError):
    pass


# --- SQL frontend -------------------------------------------------------


class SqlSyntaxError(AqpError):
    """Raised on text outside the supported grammar.

    Carries the byte offset of the offending token.
    """

    def __init__(self, position: int, message: str):
        super().__init__(f"at offset {position}: {message}")
        self.position = position


class UnsupportedSubquery(AqpError):
    pass


class UnsupportedShape(AqpError):
    pass


# --- sample layer -------------------------------------------------------


class InvariantViolation(AqpError):
    pass


class DuplicateSample(AqpError):
    pass


class DomainError(AqpError):
    pass


# --- variational subsampling ---------------------------------------------


class SpecError(AqpError):
    pass


class NotPerfectSquare(AqpError):
    pass


class MismatchedB(AqpError):
    pass


class TooFewSubsamples(AqpError):
    pass


class ZeroProbability(AqpError):
    pass


class SubsampleTooLarge(AqpError):
    pass


# --- cli / bench ----------------------------------------------------------


class UnknownSuite(AqpError):
    pass


class ConfigError(AqpError):
    pass
