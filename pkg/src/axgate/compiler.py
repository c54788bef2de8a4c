"""Compilation pipeline: source text -> immutable PolicyEnvironment.

The environment is the only authority the verification kernel consults. It
is deeply immutable, safe to share across any number of threads, and
carries two digests: `source_digest` over the exact input bytes and
`version_digest` over the canonical serialization (axioms sorted by id,
concepts sorted by symbol, literals as reduced fractions), so identical
policies compile to byte-identical versions on any machine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .canonical import canonical_bytes, digest_of, rational_token, sha256_hex
from .diagnostics import Diagnostic
from .parser import parse
from .registry import (
    ConceptDecl,
    ConceptRegistry,
    build_registry,
    derivation_order,
)
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
    walk_names,
)
from .typecheck import TypedPolicy, typecheck

ENV_FORMAT = "axgate-env/1"

_BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div"}
_BINARY_OPS_BACK = {v: k for k, v in _BINARY_OPS.items()}
_COMPARE_OPS = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "==": "eq", "!=": "ne"}
_COMPARE_OPS_BACK = {v: k for k, v in _COMPARE_OPS.items()}


def expr_to_plain(expr: Expr) -> list:
    """Encode a resolved expression as canonical nested lists."""
    if isinstance(expr, Lit):
        return ["lit", rational_token(expr.value)]
    if isinstance(expr, BoolLit):
        return ["bool", expr.value]
    if isinstance(expr, StrLit):
        return ["str", expr.value]
    if isinstance(expr, Sym):
        return ["sym", expr.symbol]
    if isinstance(expr, Atom):
        return ["atom", expr.atom]
    if isinstance(expr, Unary):
        op = "not" if expr.op == "not" else "neg"
        return [op, expr_to_plain(expr.operand)]
    if isinstance(expr, Binary):
        return [_BINARY_OPS[expr.op], expr_to_plain(expr.left), expr_to_plain(expr.right)]
    if isinstance(expr, Compare):
        return [_COMPARE_OPS[expr.op], expr_to_plain(expr.left), expr_to_plain(expr.right)]
    if isinstance(expr, BoolOp):
        return [expr.op, expr_to_plain(expr.left), expr_to_plain(expr.right)]
    raise TypeError(f"cannot serialize unresolved expression: {expr!r}")


def expr_from_plain(plain: object) -> Expr:
    if not isinstance(plain, list) or not plain:
        raise ValueError(f"malformed expression encoding: {plain!r}")
    op = plain[0]
    if op == "lit":
        return Lit(Fraction(plain[1]))
    if op == "bool":
        return BoolLit(bool(plain[1]))
    if op == "str":
        return StrLit(str(plain[1]))
    if op == "sym":
        return Sym(str(plain[1]))
    if op == "atom":
        return Atom(str(plain[1]))
    if op == "neg":
        return Unary("-", expr_from_plain(plain[1]))
    if op == "not":
        return Unary("not", expr_from_plain(plain[1]))
    if op in _BINARY_OPS_BACK:
        return Binary(_BINARY_OPS_BACK[op], expr_from_plain(plain[1]),
                      expr_from_plain(plain[2]))
    if op in _COMPARE_OPS_BACK:
        return Compare(_COMPARE_OPS_BACK[op], expr_from_plain(plain[1]),
                       expr_from_plain(plain[2]))
    if op in ("and", "or"):
        return BoolOp(op, expr_from_plain(plain[1]), expr_from_plain(plain[2]))
    raise ValueError(f"unknown expression op: {op!r}")


@dataclass(frozen=True, slots=True)
class Axiom:
    id: str
    effect: str  # "forbid" | "permit"
    tool: str  # exact tool name or "*"
    condition: Expr  # resolved
    explain: str | None = None

    def matches_tool(self, tool: str) -> bool:
        return self.tool == "*" or self.tool == tool

    def to_plain(self) -> dict:
        return {
            "id": self.id,
            "effect": self.effect,
            "tool": self.tool,
            "when": expr_to_plain(self.condition),
            "explain": self.explain,
        }

    @classmethod
    def from_plain(cls, plain: dict) -> "Axiom":
        return cls(
            id=str(plain["id"]),
            effect=str(plain["effect"]),
            tool=str(plain["tool"]),
            condition=expr_from_plain(plain["when"]),
            explain=plain.get("explain"),
        )


def concept_to_plain(decl: ConceptDecl) -> dict:
    return {
        "symbol": decl.symbol,
        "kind": decl.kind,
        "display": decl.display,
        "origin": decl.origin,
        "ccy": decl.ccy,
        "atoms": list(decl.atoms),
        "unit": decl.unit,
        "derived": expr_to_plain(decl.derived) if decl.derived is not None else None,
    }


def concept_from_plain(plain: dict) -> ConceptDecl:
    derived = plain.get("derived")
    return ConceptDecl(
        symbol=str(plain["symbol"]),
        kind=str(plain["kind"]),
        display=str(plain["display"]),
        origin=str(plain["origin"]),
        ccy=plain.get("ccy"),
        atoms=tuple(plain.get("atoms") or ()),
        unit=plain.get("unit"),
        derived=expr_from_plain(derived) if derived is not None else None,
    )


def policy_to_plain(registry: ConceptRegistry, axioms: tuple[Axiom, ...]) -> dict:
    return {
        "concepts": sorted(
            (concept_to_plain(d) for d in registry), key=lambda c: c["symbol"]
        ),
        "axioms": sorted((a.to_plain() for a in axioms), key=lambda a: a["id"]),
    }


@dataclass(frozen=True, slots=True)
class BindingPlan:
    """Per-tool plan precomputed from an immutable environment."""

    axioms: tuple[Axiom, ...]  # in-scope, environment order
    request_symbols: tuple[str, ...]
    state_symbols: tuple[str, ...]
    derived_symbols: tuple[str, ...]  # dependency order
    axiom_base_symbols: dict  # axiom id -> frozenset of non-derived symbols
    axiom_symbols: dict  # axiom id -> frozenset of all needed symbols


class PolicyEnvironment:
    """Immutable compiled policy: registry + ordered axioms + digests.

    Safe for unbounded concurrent readers. The per-tool plan cache is a
    benign-race memo: entries are pure functions of immutable state.
    """

    def __init__(
        self,
        registry: ConceptRegistry,
        axioms: tuple[Axiom, ...],
        source_digest: str,
    ) -> None:
        self.registry = registry
        self.axioms = tuple(axioms)
        self.source_digest = source_digest
        self.version_digest = digest_of(policy_to_plain(registry, self.axioms))
        self.derivation_order = derivation_order(registry)
        self.base_expansion = self._compute_expansions()
        self._plans: dict[str, BindingPlan] = {}

    def _compute_expansions(self) -> dict[str, frozenset[str]]:
        """Map each symbol to the base (non-derived) symbols it depends on."""
        expansion: dict[str, frozenset[str]] = {}
        for decl in self.registry:
            if decl.origin != "derived":
                expansion[decl.symbol] = frozenset((decl.symbol,))
        for symbol in self.derivation_order:
            decl = self.registry.get(symbol)
            base: set[str] = set()
            if decl is not None and decl.derived is not None:
                for ref in walk_names(decl.derived):
                    base |= expansion.get(ref.symbol, frozenset())
            expansion[symbol] = frozenset(base)
        return expansion

    def _direct_symbols(self, expr: Expr) -> set[str]:
        return {ref.symbol for ref in walk_names(expr)}

    def plan_for(self, tool: str) -> BindingPlan:
        plan = self._plans.get(tool)
        if plan is not None:
            return plan

        in_scope = tuple(a for a in self.axioms if a.matches_tool(tool))
        needed: set[str] = set()
        axiom_syms: dict[str, frozenset[str]] = {}
        axiom_base: dict[str, frozenset[str]] = {}
        for axiom in in_scope:
            direct = self._direct_symbols(axiom.condition)
            full: set[str] = set()
            base: set[str] = set()
            stack = list(direct)
            while stack:
                sym = stack.pop()
                if sym in full:
                    continue
                full.add(sym)
                decl = self.registry.get(sym)
                if decl is not None and decl.origin == "derived" \
                        and decl.derived is not None:
                    stack.extend(self._direct_symbols(decl.derived))
                else:
                    base.add(sym)
            axiom_syms[axiom.id] = frozenset(full)
            axiom_base[axiom.id] = frozenset(base)
            needed |= full

        request_syms = []
        state_syms = []
        for symbol in self.registry.symbols():  # declaration order, deterministic
            if symbol not in needed:
                continue
            decl = self.registry.get(symbol)
            if decl.origin == "request":
                request_syms.append(symbol)
            elif decl.origin == "state":
                state_syms.append(symbol)
        derived_syms = [s for s in self.derivation_order if s in needed]

        plan = BindingPlan(
            axioms=in_scope,
            request_symbols=tuple(request_syms),
            state_symbols=tuple(state_syms),
            derived_symbols=tuple(derived_syms),
            axiom_base_symbols=axiom_base,
            axiom_symbols=axiom_syms,
        )
        self._plans[tool] = plan
        return plan

    def with_axiom_order(self, order: tuple[int, ...]) -> "PolicyEnvironment":
        """Same environment with axioms permuted (version digest unchanged)."""
        axioms = tuple(self.axioms[i] for i in order)
        return PolicyEnvironment(self.registry, axioms, self.source_digest)

    def to_plain(self) -> dict:
        # The stored policy keeps declaration/environment order so that a
        # loaded environment replays traces byte-identically; the version
        # digest is computed over the order-insensitive canonical form.
        return {
            "format": ENV_FORMAT,
            "source_digest": self.source_digest,
            "version_digest": self.version_digest,
            "policy": {
                "concepts": [concept_to_plain(d) for d in self.registry],
                "axioms": [a.to_plain() for a in self.axioms],
            },
        }


@dataclass(frozen=True, slots=True)
class CompileResult:
    environment: PolicyEnvironment | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.environment is not None


def compile_policy(typed: TypedPolicy, source_digest: str) -> PolicyEnvironment:
    """Lower a typechecked policy into the immutable environment."""
    axioms = tuple(
        Axiom(id=a.ident, effect=a.effect, tool=a.tool,
              condition=a.condition, explain=a.explain)
        for a in typed.axioms
    )
    return PolicyEnvironment(typed.registry, axioms, source_digest)


def compile_source(source: str | bytes) -> CompileResult:
    """Run the full pipeline: parse -> registry -> typecheck -> compile."""
    raw = source.encode("utf-8") if isinstance(source, str) else source
    source_digest = sha256_hex(raw)

    parsed = parse(source)
    diagnostics = list(parsed.diagnostics)
    if parsed.ast is None:
        return CompileResult(None, diagnostics)

    reg = build_registry(parsed.ast)
    diagnostics.extend(reg.diagnostics)
    if reg.registry is None:
        return CompileResult(None, diagnostics)

    checked = typecheck(parsed.ast, reg.registry)
    diagnostics.extend(checked.diagnostics)
    if checked.typed is None:
        return CompileResult(None, diagnostics)

    return CompileResult(compile_policy(checked.typed, source_digest), diagnostics)


def compile_file(path: str) -> CompileResult:
    with open(path, "rb") as handle:
        return compile_source(handle.read())


def save_environment(env: PolicyEnvironment, path: str) -> None:
    with open(path, "wb") as handle:
        handle.write(canonical_bytes(env.to_plain()))
        handle.write(b"\n")


class EnvironmentFormatError(ValueError):
    """Raised when a stored environment fails validation on load."""


def environment_from_plain(doc: dict) -> PolicyEnvironment:
    if doc.get("format") != ENV_FORMAT:
        raise EnvironmentFormatError(f"unsupported format: {doc.get('format')!r}")
    policy = doc.get("policy")
    if not isinstance(policy, dict):
        raise EnvironmentFormatError("missing policy body")
    concepts = [concept_from_plain(c) for c in policy.get("concepts", [])]
    registry = ConceptRegistry({c.symbol: c for c in concepts})
    axioms = tuple(Axiom.from_plain(a) for a in policy.get("axioms", []))
    env = PolicyEnvironment(registry, axioms, str(doc.get("source_digest", "")))
    stored = doc.get("version_digest")
    if stored != env.version_digest:
        raise EnvironmentFormatError(
            f"version digest mismatch: stored {stored}, "
            f"recomputed {env.version_digest}"
        )
    return env


def load_environment(path: str) -> PolicyEnvironment:
    with open(path, "rb") as handle:
        doc = json.loads(handle.read().decode("utf-8"))
    return environment_from_plain(doc)
