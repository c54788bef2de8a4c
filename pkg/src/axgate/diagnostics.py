"""Compile diagnostics with stable codes and source spans."""

from __future__ import annotations

from dataclasses import dataclass

SEV_ERROR = "error"
SEV_WARNING = "warning"

# Stable diagnostic codes. These are part of the compiler's contract:
# tooling may match on them, so never rename one.
E_SYNTAX = "syntax"
E_DUPLICATE_SYMBOL = "duplicate-symbol"
E_DUPLICATE_AXIOM = "duplicate-axiom"
E_UNREGISTERED_SYMBOL = "unregistered-symbol"
E_CYCLIC_DERIVATION = "cyclic-derivation"
E_TYPE_MISMATCH = "type-mismatch"
E_UNIT_MISMATCH = "unit-mismatch"
E_CURRENCY_MISMATCH = "currency-mismatch"
E_DIVISION_BY_ZERO = "division-by-zero-literal"
E_EMPTY_DISPLAY = "empty-display-name"
W_UNUSED_CONCEPT = "unused-concept"


@dataclass(frozen=True, slots=True)
class Span:
    """1-based line/column range in the policy source."""

    line: int
    col: int
    end_line: int
    end_col: int

    @classmethod
    def point(cls, line: int, col: int) -> "Span":
        return cls(line, col, line, col + 1)

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True, slots=True)
class Diagnostic:
    severity: str
    code: str
    span: Span
    message: str

    def render(self) -> str:
        """One-line form used by the CLI: `severity code line:col message`."""
        return f"{self.severity} {self.code} {self.span} {self.message}"


def error(code: str, span: Span, message: str) -> Diagnostic:
    return Diagnostic(SEV_ERROR, code, span, message)


def warning(code: str, span: Span, message: str) -> Diagnostic:
    return Diagnostic(SEV_WARNING, code, span, message)


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity == SEV_ERROR for d in diagnostics)
