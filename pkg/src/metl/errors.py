"""Diagnostic codes and exceptions shared across the whole pipeline."""

from __future__ import annotations

from dataclasses import dataclass

UNBOUND_VAR = "UnboundVar"
VAR_ACCESS_DENIED = "VarAccessDenied"
MODE_MISMATCH = "ModeMismatch"
KIND_MISMATCH = "KindMismatch"
OPERATION_ABSENT = "OperationAbsent"
HANDLER_CLAUSE_MISMATCH = "HandlerClauseMismatch"
ESCAPE_VIOLATION = "EscapeViolation"
ARITY_MISMATCH = "ArityMismatch"
ANNOTATION_REQUIRED = "AnnotationRequired"

CODES = frozenset(
    {
        UNBOUND_VAR,
        VAR_ACCESS_DENIED,
        MODE_MISMATCH,
        KIND_MISMATCH,
        OPERATION_ABSENT,
        HANDLER_CLAUSE_MISMATCH,
        ESCAPE_VIOLATION,
        ARITY_MISMATCH,
        ANNOTATION_REQUIRED,
    }
)


@dataclass(frozen=True)
class Span:
    line: int
    col: int


class MetlError(Exception):
    """Base class for positioned diagnostics."""

    def __init__(self, message: str, span: Span | None = None):
        super().__init__(message)
        self.message = message
        self.span = span

    def render(self, filename: str = "<input>") -> str:
        line = self.span.line if self.span else 0
        col = self.span.col if self.span else 0
        return f"{filename}:{line}:{col}: error: {self.message}"


class ParseError(MetlError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(message, Span(line, col))
        self.line = line
        self.col = col

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class CheckError(MetlError):
    """A type or kind error carrying exactly one primary diagnostic code."""

    def __init__(
        self,
        code: str,
        message: str,
        span: Span | None = None,
        expected: str | None = None,
        actual: str | None = None,
    ):
        assert code in CODES, code
        super().__init__(message, span)
        self.code = code
        self.expected = expected
        self.actual = actual

    def render(self, filename: str = "<input>") -> str:
        line = self.span.line if self.span else 0
        col = self.span.col if self.span else 0
        out = f"{filename}:{line}:{col}: error[{self.code}]: {self.message}"
        if self.expected is not None:
            out += f"\n  expected: {self.expected}"
        if self.actual is not None:
            out += f"\n  actual:   {self.actual}"
        return out
