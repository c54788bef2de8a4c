"""Independent brute-force decision oracle.

This is the ground truth the verification kernel is differentially tested
against, so it deliberately shares no evaluation code with the kernel: a
naive tree-walking evaluator that re-resolves every symbol on every use,
re-computes derived concepts at every mention (no caching, no sharing),
and applies its own permit-required / deny-overrides combinator.

Frozen by policy: change this module only if the intended decision
semantics themselves change, never to make the kernel agree.
"""

from __future__ import annotations

from fractions import Fraction

from .compiler import PolicyEnvironment
from .syntax import (
    Atom,
    Binary,
    BoolLit,
    BoolOp,
    Compare,
    Expr,
    Lit,
    StrLit,
    Sym,
    Unary,
)
from .values import Money

PROVEN = "Proven"
REFUTED = "Refuted"


class _Unbindable(Exception):
    def __init__(self, symbol: str) -> None:
        self.symbol = symbol


def _resolve(symbol: str, request, state, env: PolicyEnvironment):
    decl = env.registry.get(symbol)
    if decl is None:
        raise _Unbindable(symbol)
    if decl.origin == "derived":
        if decl.derived is None:
            raise _Unbindable(symbol)
        return _eval(decl.derived, request, state, env)
    if decl.origin == "request":
        source = request.params
    else:
        source = state.facts if state is not None and state.facts is not None else {}
    if symbol not in source:
        raise _Unbindable(symbol)
    value = source[symbol]
    if not _kind_ok(value, decl):
        raise _Unbindable(symbol)
    return value


def _kind_ok(value, decl) -> bool:
    if decl.kind == "quantity":
        return isinstance(value, Fraction)
    if decl.kind == "money":
        return isinstance(value, Money) and value.ccy == decl.ccy
    if decl.kind == "flag":
        return isinstance(value, bool)
    if decl.kind == "enum":
        return isinstance(value, str) and value in decl.atoms
    if decl.kind == "text":
        return isinstance(value, str)
    return False


def _eval(expr: Expr, request, state, env: PolicyEnvironment):
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, BoolLit):
        return expr.value
    if isinstance(expr, StrLit):
        return expr.value
    if isinstance(expr, Atom):
        return expr.atom
    if isinstance(expr, Sym):
        return _resolve(expr.symbol, request, state, env)
    if isinstance(expr, Unary):
        value = _eval(expr.operand, request, state, env)
        if expr.op == "not":
            return not value
        if isinstance(value, Money):
            return Money(-value.minor, value.ccy)
        return -value
    if isinstance(expr, Binary):
        left = _eval(expr.left, request, state, env)
        right = _eval(expr.right, request, state, env)
        return _arith(expr.op, left, right)
    if isinstance(expr, Compare):
        left = _eval(expr.left, request, state, env)
        right = _eval(expr.right, request, state, env)
        return _compare(expr.op, left, right)
    if isinstance(expr, BoolOp):
        left = _eval(expr.left, request, state, env)
        right = _eval(expr.right, request, state, env)
        return (left and right) if expr.op == "and" else (left or right)
    raise TypeError(f"oracle cannot evaluate {expr!r}")


def _arith(op: str, left, right):
    if isinstance(left, Money) or isinstance(right, Money):
        if isinstance(left, Money) and isinstance(right, Money):
            if op == "+":
                return Money(left.minor + right.minor, left.ccy)
            if op == "-":
                return Money(left.minor - right.minor, left.ccy)
            raise TypeError(f"money {op} money")
        money, scalar = (left, right) if isinstance(left, Money) else (right, left)
        if op == "*":
            return Money(money.minor * scalar, money.ccy)
        if op == "/" and money is left:
            return Money(money.minor / scalar, money.ccy)
        raise TypeError(f"money arithmetic {op} with scalar on the wrong side")
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    return left / right


def _compare(op: str, left, right) -> bool:
    if isinstance(left, Money) and isinstance(right, Money):
        left, right = left.minor, right.minor
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    if op == "==":
        return left == right
    return left != right


def oracle_verify(request, state, env: PolicyEnvironment) -> str:
    """Decide one action the slow, obvious way."""
    in_scope = [a for a in env.axioms if a.tool == "*" or a.tool == request.tool]

    any_unbindable = False
    forbid_fired = False
    permit_satisfied = False
    for axiom in in_scope:
        try:
            value = _eval(axiom.condition, request, state, env)
        except _Unbindable:
            any_unbindable = True
            continue
        if axiom.effect == "forbid" and value is True:
            forbid_fired = True
        if axiom.effect == "permit" and value is True:
            permit_satisfied = True

    if forbid_fired:
        return REFUTED
    if any_unbindable:
        return REFUTED  # fail closed: an unevaluable axiom can never permit
    if permit_satisfied:
        return PROVEN
    return REFUTED
