"""Recursive-descent parser for the policy DSL.

Grammar (informative; `#` starts a line comment):

    policy     := (concept | axiom)*
    concept    := "concept" IDENT ":" kind ["from" origin] ["unit" STRING] STRING
    kind       := "quantity" | "money" STRING
                | "enum" "{" IDENT ("," IDENT)* "}" | "flag" | "text"
    origin     := "request" | "state" | "derived" "=" expr
    axiom      := "axiom" IDENT effect toolpat "when" expr ["explain" STRING]
    effect     := "forbid" | "permit"
    toolpat    := IDENT | "*"
    expr       := or_expr
    or_expr    := and_expr ("or" and_expr)*
    and_expr   := not_expr ("and" not_expr)*
    not_expr   := "not" not_expr | comparison
    comparison := additive [("<"|"<="|">"|">="|"=="|"!=") additive]
    additive   := term (("+"|"-") term)*
    term       := factor (("*"|"/") factor)*
    factor     := "-" factor | NUMBER | STRING | IDENT | "true" | "false"
                | "(" expr ")"

Parsing is total: any input produces either an AST or a non-empty list of
located diagnostics. On error the parser synchronizes at the next
`concept`/`axiom` keyword so one bad declaration does not mask the rest.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .diagnostics import Diagnostic, E_SYNTAX, Span, error, has_errors
from .lexer import Token, tokenize
from .syntax import (
    AxiomNode,
    Binary,
    BoolLit,
    BoolOp,
    Compare,
    ConceptNode,
    Expr,
    Lit,
    Name,
    PolicyAst,
    StrLit,
    Unary,
)

MAX_EXPR_DEPTH = 200  # bounds recursion so hostile inputs cannot blow the stack


@dataclass(frozen=True, slots=True)
class ParseResult:
    ast: PolicyAst | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.ast is not None


class _ParseError(Exception):
    def __init__(self, diagnostic: Diagnostic) -> None:
        self.diagnostic = diagnostic


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def check(self, kind: str) -> bool:
        return self.peek().kind == kind

    def accept(self, kind: str) -> Token | None:
        if self.check(kind):
            return self.advance()
        return None

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind == kind:
            return self.advance()
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise _ParseError(
            error(E_SYNTAX, tok.span, f"expected {what}, found {shown!r}")
        )

    # Declarations -----------------------------------------------------------

    def policy(self) -> PolicyAst:
        items: list = []
        while not self.check("EOF"):
            tok = self.peek()
            try:
                if tok.kind == "concept":
                    items.append(self.concept())
                elif tok.kind == "axiom":
                    items.append(self.axiom())
                else:
                    shown = tok.text if tok.kind != "EOF" else "end of input"
                    raise _ParseError(
                        error(E_SYNTAX, tok.span,
                              f"expected 'concept' or 'axiom', found {shown!r}")
                    )
            except _ParseError as exc:
                self.diagnostics.append(exc.diagnostic)
                self.synchronize()
        return PolicyAst(items=tuple(items))

    def synchronize(self) -> None:
        """Skip tokens until the next declaration keyword.

        Never consumes a declaration keyword itself: the outer loop always
        makes progress because concept()/axiom() consume their keyword first.
        """
        while not self.check("EOF") and self.peek().kind not in ("concept", "axiom"):
            self.advance()

    def concept(self) -> ConceptNode:
        start = self.expect("concept", "'concept'")
        name = self.expect("IDENT", "a concept symbol")
        self.expect("COLON", "':'")
        kind, ccy, atoms = self.kind()
        origin = "state"
        derived: Expr | None = None
        if self.accept("from"):
            if self.accept("request"):
                origin = "request"
            elif self.accept("state"):
                origin = "state"
            elif self.accept("derived"):
                origin = "derived"
                self.expect("EQ", "'=' after 'derived'")
                derived = self.expr()
            else:
                tok = self.peek()
                raise _ParseError(
                    error(E_SYNTAX, tok.span,
                          f"expected 'request', 'state' or 'derived', found {tok.text!r}")
                )
        unit = None
        if self.accept("unit"):
            unit = self.expect("STRING", "a unit string").text
        display = self.expect("STRING", "a display name string")
        span = Span(start.span.line, start.span.col,
                    display.span.end_line, display.span.end_col)
        return ConceptNode(
            symbol=name.text, kind=kind, ccy=ccy, atoms=atoms, unit=unit,
            origin=origin, derived=derived, display=display.text, span=span,
        )

    def kind(self) -> tuple[str, str | None, tuple[str, ...]]:
        tok = self.peek()
        if self.accept("quantity"):
            return "quantity", None, ()
        if self.accept("flag"):
            return "flag", None, ()
        if self.accept("text"):
            return "text", None, ()
        if self.accept("money"):
            ccy = self.expect("STRING", "a currency code string")
            return "money", ccy.text, ()
        if self.accept("enum"):
            self.expect("LBRACE", "'{'")
            atoms = [self.expect("IDENT", "an enum member").text]
            while self.accept("COMMA"):
                atoms.append(self.expect("IDENT", "an enum member").text)
            self.expect("RBRACE", "'}'")
            return "enum", None, tuple(atoms)
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise _ParseError(
            error(E_SYNTAX, tok.span, f"expected a concept kind, found {shown!r}")
        )

    def axiom(self) -> AxiomNode:
        start = self.expect("axiom", "'axiom'")
        name = self.expect("IDENT", "an axiom id")
        if self.accept("forbid"):
            effect = "forbid"
        elif self.accept("permit"):
            effect = "permit"
        else:
            tok = self.peek()
            shown = tok.text if tok.kind != "EOF" else "end of input"
            raise _ParseError(
                error(E_SYNTAX, tok.span,
                      f"expected 'forbid' or 'permit', found {shown!r}")
            )
        if self.accept("STAR"):
            tool = "*"
        else:
            tool = self.expect("IDENT", "a tool name or '*'").text
        self.expect("when", "'when'")
        condition = self.expr()
        explain = None
        if self.accept("explain"):
            explain = self.expect("STRING", "an explain template string").text
        end = self.tokens[self.pos - 1].span
        span = Span(start.span.line, start.span.col, end.end_line, end.end_col)
        return AxiomNode(
            ident=name.text, effect=effect, tool=tool,
            condition=condition, explain=explain, span=span,
        )

    # Expressions --------------------------------------------------------

    def expr(self, depth: int = 0) -> Expr:
        return self.or_expr(depth)

    def _check_depth(self, depth: int) -> None:
        if depth > MAX_EXPR_DEPTH:
            raise _ParseError(
                error(E_SYNTAX, self.peek().span, "expression nesting too deep")
            )

    def or_expr(self, depth: int) -> Expr:
        self._check_depth(depth)
        left = self.and_expr(depth + 1)
        while self.check("or"):
            op_tok = self.advance()
            right = self.and_expr(depth + 1)
            left = BoolOp("or", left, right, span=op_tok.span)
        return left

    def and_expr(self, depth: int) -> Expr:
        left = self.not_expr(depth + 1)
        while self.check("and"):
            op_tok = self.advance()
            right = self.not_expr(depth + 1)
            left = BoolOp("and", left, right, span=op_tok.span)
        return left

    def not_expr(self, depth: int) -> Expr:
        self._check_depth(depth)
        if self.check("not"):
            tok = self.advance()
            operand = self.not_expr(depth + 1)
            return Unary("not", operand, span=tok.span)
        return self.comparison(depth + 1)

    def comparison(self, depth: int) -> Expr:
        left = self.additive(depth + 1)
        tok = self.peek()
        if tok.kind in ("LT", "LE", "GT", "GE", "EQEQ", "NEQ"):
            self.advance()
            right = self.additive(depth + 1)
            follow = self.peek()
            if follow.kind in ("LT", "LE", "GT", "GE", "EQEQ", "NEQ"):
                raise _ParseError(
                    error(E_SYNTAX, follow.span,
                          "comparisons cannot be chained; use 'and'")
                )
            return Compare(tok.text, left, right, span=tok.span)
        return left

    def additive(self, depth: int) -> Expr:
        self._check_depth(depth)
        left = self.term(depth + 1)
        while self.peek().kind in ("PLUS", "MINUS"):
            op_tok = self.advance()
            right = self.term(depth + 1)
            left = Binary(op_tok.text, left, right, span=op_tok.span)
        return left

    def term(self, depth: int) -> Expr:
        left = self.factor(depth + 1)
        while self.peek().kind in ("STAR", "SLASH"):
            op_tok = self.advance()
            right = self.factor(depth + 1)
            left = Binary(op_tok.text, left, right, span=op_tok.span)
        return left

    def factor(self, depth: int) -> Expr:
        self._check_depth(depth)
        tok = self.peek()
        if tok.kind == "MINUS":
            self.advance()
            operand = self.factor(depth + 1)
            return Unary("-", operand, span=tok.span)
        if tok.kind == "NUMBER":
            self.advance()
            return Lit(Fraction(tok.text), span=tok.span)
        if tok.kind == "STRING":
            self.advance()
            return StrLit(tok.text, span=tok.span)
        if tok.kind == "true":
            self.advance()
            return BoolLit(True, span=tok.span)
        if tok.kind == "false":
            self.advance()
            return BoolLit(False, span=tok.span)
        if tok.kind == "IDENT":
            self.advance()
            return Name(tok.text, span=tok.span)
        if tok.kind == "LPAREN":
            self.advance()
            inner = self.expr(depth + 1)
            self.expect("RPAREN", "')'")
            return inner
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise _ParseError(
            error(E_SYNTAX, tok.span, f"expected an expression, found {shown!r}")
        )


def decode_source(data: bytes) -> tuple[str, Diagnostic | None]:
    """Decode policy bytes as UTF-8, mapping failures to a located diagnostic."""
    try:
        return data.decode("utf-8"), None
    except UnicodeDecodeError as exc:
        prefix = data[: exc.start].decode("utf-8", errors="replace")
        line = prefix.count("\n") + 1
        col = len(prefix) - (prefix.rfind("\n") + 1) + 1
        diag = error(E_SYNTAX, Span.point(line, col),
                     f"invalid UTF-8 byte at offset {exc.start}")
        return "", diag


def parse(source: str | bytes) -> ParseResult:
    """Parse policy text into an AST, or collect located diagnostics."""
    if isinstance(source, bytes):
        text, decode_diag = decode_source(source)
        if decode_diag is not None:
            return ParseResult(None, [decode_diag])
    else:
        text = source
    tokens, diagnostics = tokenize(text)
    parser = _Parser(tokens)
    ast = parser.policy()
    diagnostics.extend(parser.diagnostics)
    if has_errors(diagnostics):
        return ParseResult(None, diagnostics)
    return ParseResult(ast, diagnostics)
