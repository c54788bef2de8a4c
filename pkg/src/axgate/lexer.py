"""Tokenizer for the policy DSL.

Total over arbitrary input: every byte sequence yields a token stream or
located diagnostics, never an exception. `#` starts a line comment.
"""

from __future__ import annotations

from dataclasses import dataclass

from .diagnostics import Diagnostic, E_SYNTAX, Span, error

KEYWORDS = frozenset(
    {
        "concept", "axiom", "forbid", "permit", "when", "explain",
        "from", "request", "state", "derived", "unit",
        "quantity", "money", "enum", "flag", "text",
        "and", "or", "not", "true", "false",
    }
)

PUNCT = {
    "(": "LPAREN", ")": "RPAREN", "{": "LBRACE", "}": "RBRACE",
    ",": "COMMA", ":": "COLON", "=": "EQ", "*": "STAR",
    "+": "PLUS", "-": "MINUS", "/": "SLASH",
    "<": "LT", "<=": "LE", ">": "GT", ">=": "GE",
    "==": "EQEQ", "!=": "NEQ",
}


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # IDENT, NUMBER, STRING, EOF, a keyword, or a PUNCT name
    text: str
    span: Span


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(source: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diagnostics: list[Diagnostic] = []
    line = 1
    col = 1
    i = 0
    n = len(source)

    def span_from(start_line: int, start_col: int) -> Span:
        return Span(start_line, start_col, line, col)

    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
                col += 1
            continue

        start_line, start_col = line, col

        if _is_ident_start(ch):
            j = i
            while j < n and _is_ident_char(source[j]):
                j += 1
            word = source[i:j]
            col += j - i
            i = j
            kind = word if word in KEYWORDS else "IDENT"
            tokens.append(Token(kind, word, span_from(start_line, start_col)))
            continue

        if ch.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            word = source[i:j]
            col += j - i
            i = j
            tokens.append(Token("NUMBER", word, span_from(start_line, start_col)))
            continue

        if ch == '"':
            j = i + 1
            buf: list[str] = []
            closed = False
            while j < n:
                c = source[j]
                if c == '"':
                    closed = True
                    j += 1
                    break
                if c == "\n":
                    break
                if c == "\\" and j + 1 < n:
                    esc = source[j + 1]
                    if esc == "n":
                        buf.append("\n")
                    elif esc == "t":
                        buf.append("\t")
                    elif esc in ('"', "\\"):
                        buf.append(esc)
                    else:
                        buf.append(esc)
                    j += 2
                    continue
                buf.append(c)
                j += 1
            col += j - i
            if not closed:
                diagnostics.append(
                    error(E_SYNTAX, span_from(start_line, start_col),
                          "unterminated string literal")
                )
                i = j
                continue
            i = j
            tokens.append(Token("STRING", "".join(buf), span_from(start_line, start_col)))
            continue

        two = source[i : i + 2]
        if two in ("<=", ">=", "==", "!="):
            col += 2
            i += 2
            tokens.append(Token(PUNCT[two], two, span_from(start_line, start_col)))
            continue
        if ch in PUNCT:
            col += 1
            i += 1
            tokens.append(Token(PUNCT[ch], ch, span_from(start_line, start_col)))
            continue

        col += 1
        i += 1
        diagnostics.append(
            error(E_SYNTAX, span_from(start_line, start_col),
                  f"unexpected character {ch!r}")
        )

    tokens.append(Token("EOF", "", Span(line, col, line, col)))
    return tokens, diagnostics
