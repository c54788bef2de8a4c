"""Concept-symbol registry.

The registry is the compile-time table binding every policy symbol to a
kind, origin, unit, and display name. Axioms may only mention registered
symbols (or members of registered enums), so a drifted or adversarial
symbol can never enter a compiled environment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterator, Mapping

from .diagnostics import (
    Diagnostic,
    E_CYCLIC_DERIVATION,
    E_DUPLICATE_AXIOM,
    E_DUPLICATE_SYMBOL,
    E_EMPTY_DISPLAY,
    E_UNIT_MISMATCH,
    E_UNREGISTERED_SYMBOL,
    W_UNUSED_CONCEPT,
    error,
    has_errors,
    warning,
)
from .syntax import Expr, Name, PolicyAst, walk_names

TEMPLATE_SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True, slots=True)
class ConceptDecl:
    symbol: str
    kind: str
    display: str
    origin: str = "state"  # "request" | "state" | "derived"
    ccy: str | None = None
    atoms: tuple[str, ...] = ()
    unit: str | None = None
    derived: Expr | None = None


class ConceptRegistry:
    """Immutable symbol table; declaration order is preserved."""

    def __init__(self, concepts: Mapping[str, ConceptDecl]) -> None:
        self._concepts = dict(concepts)
        self._atoms = frozenset(
            atom for decl in self._concepts.values() for atom in decl.atoms
        )

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._concepts

    def __iter__(self) -> Iterator[ConceptDecl]:
        return iter(self._concepts.values())

    def __len__(self) -> int:
        return len(self._concepts)

    def get(self, symbol: str) -> ConceptDecl | None:
        return self._concepts.get(symbol)

    def symbols(self) -> tuple[str, ...]:
        return tuple(self._concepts)

    def is_atom(self, name: str) -> bool:
        return name in self._atoms

    def derived_symbols(self) -> tuple[str, ...]:
        return tuple(s for s, d in self._concepts.items() if d.origin == "derived")

    def with_resolved(self, resolved: Mapping[str, Expr]) -> "ConceptRegistry":
        """Return a copy whose derived declarations carry resolved expressions."""
        out = {}
        for symbol, decl in self._concepts.items():
            if symbol in resolved:
                out[symbol] = replace(decl, derived=resolved[symbol])
            else:
                out[symbol] = decl
        return ConceptRegistry(out)


@dataclass(frozen=True, slots=True)
class RegistryResult:
    registry: ConceptRegistry | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.registry is not None


def template_slots(template: str) -> list[str]:
    return TEMPLATE_SLOT.findall(template)


def build_registry(ast: PolicyAst) -> RegistryResult:
    """Build the registry and validate every symbol reference in the policy."""
    diagnostics: list[Diagnostic] = []
    concepts: dict[str, ConceptDecl] = {}

    for node in ast.concepts:
        if node.symbol in concepts:
            diagnostics.append(
                error(E_DUPLICATE_SYMBOL, node.span,
                      f"concept '{node.symbol}' is already declared")
            )
            continue
        if not node.display:
            diagnostics.append(
                error(E_EMPTY_DISPLAY, node.span,
                      f"concept '{node.symbol}' needs a non-empty display name")
            )
        if node.unit is not None and node.kind != "quantity":
            diagnostics.append(
                error(E_UNIT_MISMATCH, node.span,
                      f"unit tags only apply to quantity concepts, "
                      f"'{node.symbol}' is {node.kind}")
            )
        seen_atoms = set()
        for atom in node.atoms:
            if atom in seen_atoms:
                diagnostics.append(
                    error(E_DUPLICATE_SYMBOL, node.span,
                          f"enum member '{atom}' is repeated in '{node.symbol}'")
                )
            seen_atoms.add(atom)
        concepts[node.symbol] = ConceptDecl(
            symbol=node.symbol, kind=node.kind, display=node.display,
            origin=node.origin, ccy=node.ccy, atoms=node.atoms,
            unit=node.unit, derived=node.derived,
        )

    registry = ConceptRegistry(concepts)
    used: set[str] = set()

    def check_names(expr: Expr, where: str) -> None:
        for ref in walk_names(expr):
            name = ref.ident if isinstance(ref, Name) else ref.symbol
            if name in registry:
                used.add(name)
            elif not registry.is_atom(name):
                diagnostics.append(
                    error(E_UNREGISTERED_SYMBOL, getattr(ref, "span", None) or ref.span,
                          f"'{name}' is not a registered concept ({where})")
                )

    for node in ast.concepts:
        if node.derived is not None:
            check_names(node.derived, f"derived definition of '{node.symbol}'")

    axiom_ids: set[str] = set()
    for node in ast.axioms:
        if node.ident in axiom_ids:
            diagnostics.append(
                error(E_DUPLICATE_AXIOM, node.span,
                      f"axiom id '{node.ident}' is already used")
            )
        axiom_ids.add(node.ident)
        check_names(node.condition, f"axiom '{node.ident}'")
        if node.explain is not None:
            for slot in template_slots(node.explain):
                if slot in registry:
                    used.add(slot)
                else:
                    diagnostics.append(
                        error(E_UNREGISTERED_SYMBOL, node.span,
                              f"explain template of '{node.ident}' interpolates "
                              f"unregistered symbol '{slot}'")
                    )

    _check_derivation_cycles(registry, diagnostics, ast)

    for symbol, decl in concepts.items():
        if symbol not in used and decl.origin != "derived":
            span = next(n.span for n in ast.concepts if n.symbol == symbol)
            diagnostics.append(
                warning(W_UNUSED_CONCEPT, span,
                        f"concept '{symbol}' is never referenced")
            )

    if has_errors(diagnostics):
        return RegistryResult(None, diagnostics)
    return RegistryResult(registry, diagnostics)


def _check_derivation_cycles(
    registry: ConceptRegistry, diagnostics: list[Diagnostic], ast: PolicyAst
) -> None:
    spans = {n.symbol: n.span for n in ast.concepts}
    deps: dict[str, list[str]] = {}
    for decl in registry:
        if decl.origin != "derived" or decl.derived is None:
            continue
        refs = []
        for ref in walk_names(decl.derived):
            name = ref.ident if isinstance(ref, Name) else ref.symbol
            other = registry.get(name)
            if other is not None and other.origin == "derived":
                refs.append(name)
        deps[decl.symbol] = refs

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {s: WHITE for s in deps}
    reported: set[str] = set()

    def visit(symbol: str, path: list[str]) -> None:
        color[symbol] = GRAY
        path.append(symbol)
        for dep in deps.get(symbol, ()):
            if color.get(dep, BLACK) == GRAY:
                cycle = path[path.index(dep):] + [dep]
                key = "->".join(sorted(set(cycle)))
                if key not in reported:
                    reported.add(key)
                    diagnostics.append(
                        error(E_CYCLIC_DERIVATION, spans.get(symbol, path_span(path)),
                              "derived concepts form a cycle: " + " -> ".join(cycle))
                    )
            elif color.get(dep) == WHITE:
                visit(dep, path)
        path.pop()
        color[symbol] = BLACK

    def path_span(path: list[str]):
        return spans[path[0]]

    for symbol in deps:
        if color[symbol] == WHITE:
            visit(symbol, [])


def derivation_order(registry: ConceptRegistry) -> tuple[str, ...]:
    """Topological order of derived symbols (callers ensure acyclicity)."""
    order: list[str] = []
    seen: set[str] = set()

    def visit(symbol: str) -> None:
        if symbol in seen:
            return
        seen.add(symbol)
        decl = registry.get(symbol)
        if decl is None or decl.origin != "derived" or decl.derived is None:
            return
        for ref in walk_names(decl.derived):
            name = ref.ident if isinstance(ref, Name) else ref.symbol
            other = registry.get(name)
            if other is not None and other.origin == "derived":
                visit(name)
        order.append(symbol)

    for symbol in registry.derived_symbols():
        visit(symbol)
    return tuple(order)
