import random
from fractions import Fraction

from axgate import (
    ActionRequest,
    Conjecture,
    FormulationFailure,
    Money,
    SystemState,
    compile_source,
    decide,
    eval_condition,
    formulate_conjecture,
    oracle_verify,
    verify,
)
from axgate.kernel import ProofTrace, TraceEntry, ValNode
from axgate.randgen import PolicyGenerator, iter_instances
from axgate.syntax import Compare, Lit, Sym


def shipped_env():
    with open("src/axgate/policies/sec15c3_5.pol", encoding="utf-8") as fh:
        return compile_source(fh.read()).environment


def trade_request(volume=50000, request_id="r1"):
    return ActionRequest(request_id, "execute_trade",
                         {"volume": Fraction(volume),
                          "symbol": "AAPL", "type": "market"})


def trade_state(capital_minor=5_000_000_000, price_minor=20000,
                max_order=100000):
    return SystemState({
        "share_price": Money(Fraction(price_minor), "USD"),
        "daily_capital": Money(Fraction(capital_minor), "USD"),
        "max_order_size": Fraction(max_order),
    })


# Formulation -----------------------------------------------------------------


def test_formulate_closed_conjecture_with_derived_value():
    env = shipped_env()
    conjecture = formulate_conjecture(trade_request(), trade_state(), env)
    assert isinstance(conjecture, Conjecture)
    assert conjecture.in_scope_axioms == (
        "capital_threshold", "max_order", "ordinary_order"
    )
    # derived trade_value = volume * share_price, computed once, exactly
    assert conjecture.bindings["trade_value"] == Money(
        Fraction(50000) * Fraction(20000), "USD"
    )
    # extra request params never bind: they are not registered
    assert "symbol" not in conjecture.bindings
    assert "type" not in conjecture.bindings


def test_formulate_scope_mismatch_yields_zero_axioms():
    env = shipped_env()
    request = ActionRequest("r2", "transfer", {"volume": Fraction(10)})
    conjecture = formulate_conjecture(request, trade_state(), env)
    assert isinstance(conjecture, Conjecture)
    assert conjecture.in_scope_axioms == ()
    assert conjecture.bindings == {}


def test_formulate_missing_state_fact_fails():
    env = shipped_env()
    state = SystemState({
        "share_price": Money(Fraction(20000), "USD"),
        "max_order_size": Fraction(100000),
    })
    failure = formulate_conjecture(trade_request(), state, env)
    assert isinstance(failure, FormulationFailure)
    assert ("daily_capital", "missing") in failure.failures


def test_formulate_kind_mismatch():
    env = shipped_env()
    state = trade_state()
    request = ActionRequest("r3", "execute_trade", {"volume": "not a number"})
    failure = formulate_conjecture(request, state, env)
    assert isinstance(failure, FormulationFailure)
    assert ("volume", "kind-mismatch") in failure.failures


def test_request_param_cannot_shadow_state_fact():
    env = shipped_env()
    request = ActionRequest("r4", "execute_trade", {
        "volume": Fraction(50000),
        # an agent trying to inject a huge capital figure via params
        "daily_capital": Money(Fraction(10**15), "USD"),
    })
    state = trade_state(capital_minor=5_000_000_000)
    result = verify(request, state, env)
    assert result.decision == "Refuted"  # state's figure is authoritative
    assert oracle_verify(request, state, env) == "Refuted"


# Evaluation ------------------------------------------------------------------


def test_eval_condition_dti_strict_boundary():
    condition = Compare("<", Sym("debt_to_income"), Lit(Fraction(43, 100)))
    value, tree = eval_condition(condition, {"debt_to_income": Fraction(9, 20)})
    assert value is False
    value, _ = eval_condition(condition, {"debt_to_income": Fraction(43, 100)})
    assert value is False  # strict inequality, no tolerance fudge
    value, _ = eval_condition(condition, {"debt_to_income": Fraction(42, 100)})
    assert value is True
    assert tree.op == "lt"
    assert tree.kids[0].value == Fraction(9, 20)


def _reeval(node: ValNode):
    """Independent bottom-up re-evaluation of a recorded valuation tree."""
    kids = [_reeval(k) for k in node.kids]
    op = node.op
    if op in ("lit", "bool", "str", "sym", "atom"):
        return node.value
    if op == "neg":
        v = kids[0]
        return Money(-v.minor, v.ccy) if isinstance(v, Money) else -v
    if op == "not":
        return not kids[0]
    if op in ("add", "sub", "mul", "div"):
        a, b = kids
        if isinstance(a, Money) and isinstance(b, Money):
            return Money(a.minor + b.minor if op == "add" else a.minor - b.minor,
                         a.ccy)
        if isinstance(a, Money):
            return Money(a.minor * b if op == "mul" else a.minor / b, a.ccy)
        if isinstance(b, Money):
            return Money(a * b.minor, b.ccy)
        return {"add": a + b, "sub": a - b, "mul": a * b,
                "div": a / b if b else None}[op]
    a, b = kids
    if isinstance(a, Money) and isinstance(b, Money):
        a, b = a.minor, b.minor
    return {"lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b,
            "eq": a == b, "ne": a != b,
            "and": a and b, "or": a or b}[op]


def test_trace_soundness_on_random_instances():
    for inst in iter_instances(31, 300, env_reuse=25):
        result = verify(inst.request, inst.state, inst.env)
        for entry in result.trace.entries:
            if entry.tree is not None:
                assert bool(_reeval(entry.tree)) == entry.value


# Decision --------------------------------------------------------------------


def _mk_trace(entries):
    return ProofTrace("e" * 64, "t", tuple(entries), {}, {})


def test_decide_forbid_trumps_permit():
    trace = _mk_trace([
        TraceEntry("p", "permit", True, ValNode("bool", True)),
        TraceEntry("f", "forbid", True, ValNode("bool", True)),
    ])
    decision, causes = decide(trace)
    assert decision == "Refuted"
    assert any(c.reason == "forbid-fired" and c.axiom_id == "f" for c in causes)


def test_decide_empty_trace_refutes():
    decision, causes = decide(_mk_trace([]))
    assert decision == "Refuted"
    assert causes[0].reason == "no-permit-satisfied"


def test_decide_permit_without_forbid_proves():
    trace = _mk_trace([
        TraceEntry("p", "permit", True, ValNode("bool", True)),
        TraceEntry("f", "forbid", False, ValNode("bool", False)),
    ])
    decision, causes = decide(trace)
    assert decision == "Proven"
    assert causes == ()


def test_decide_unevaluated_entry_refutes():
    trace = _mk_trace([
        TraceEntry("p", "permit", True, ValNode("bool", True)),
        TraceEntry("f", "forbid", None, None, (("daily_capital", "missing"),)),
    ])
    decision, causes = decide(trace)
    assert decision == "Refuted"
    assert any(c.reason == "binding-failure" and c.symbol == "daily_capital"
               for c in causes)


# Whole verification ----------------------------------------------------------


def test_verify_capital_breach_refuted():
    # volume 50,000 x $200.00 = $10,000,000 > 10% of $50,000,000 -> Refuted.
    env = shipped_env()
    request, state = trade_request(), trade_state()
    result = verify(request, state, env)
    assert result.decision == "Refuted"
    assert any(c.axiom_id == "capital_threshold" for c in result.refusal_causes)
    assert oracle_verify(request, state, env) == "Refuted"


def test_verify_within_capital_proven():
    # Same trade against $200,000,000 capital: $10M <= $20M and permit holds.
    env = shipped_env()
    request, state = trade_request(), trade_state(capital_minor=20_000_000_000)
    result = verify(request, state, env)
    assert result.decision == "Proven"
    assert result.refusal_causes == ()
    assert oracle_verify(request, state, env) == "Proven"


def test_verify_repeated_thousand_times_identical():
    env = shipped_env()
    request, state = trade_request(), trade_state()
    first = verify(request, state, env)
    for _ in range(999):
        again = verify(request, state, env)
        assert again.trace_digest == first.trace_digest
        assert again.trace.canonical() == first.trace.canonical()
        assert again.decision == first.decision


def test_verify_ignores_request_id_and_timestamps():
    env = shipped_env()
    state = trade_state()
    a = verify(trade_request(request_id="a"), state, env)
    b = verify(
        ActionRequest("b", "execute_trade",
                      {"volume": Fraction(50000)}, received_at=123456789),
        SystemState(state.facts, as_of=42),
        env,
    )
    assert a.trace_digest == b.trace_digest
    assert a.decision == b.decision


def test_verify_unreadable_state_fails_closed():
    env = shipped_env()
    result = verify(trade_request(), SystemState(None), env)
    assert result.decision == "Refuted"
    assert all(c.reason == "binding-failure" for c in result.refusal_causes)


# Properties ------------------------------------------------------------------


def test_permutation_invariance():
    rng = random.Random(5150)
    count = 0
    for inst in iter_instances(5150, 400, env_reuse=20):
        n = len(inst.env.axioms)
        base = verify(inst.request, inst.state, inst.env)
        base_causes = {(c.reason, c.axiom_id, c.symbol)
                       for c in base.refusal_causes}
        for _ in range(3):
            order = list(range(n))
            rng.shuffle(order)
            permuted = inst.env.with_axiom_order(tuple(order))
            again = verify(inst.request, inst.state, permuted)
            assert again.decision == base.decision
            causes = {(c.reason, c.axiom_id, c.symbol)
                      for c in again.refusal_causes}
            assert causes == base_causes
            count += 1
    assert count > 0


def test_deny_monotonicity():
    from axgate.compiler import Axiom, PolicyEnvironment
    from axgate.syntax import BoolLit

    for inst in iter_instances(616, 300, env_reuse=30):
        base = verify(inst.request, inst.state, inst.env)
        if base.decision != "Refuted":
            continue
        # Adding any forbid must never flip Refuted to Proven.
        extra = Axiom("added_forbid", "forbid", inst.request.tool,
                      BoolLit(False))
        grown = PolicyEnvironment(inst.env.registry,
                                  inst.env.axioms + (extra,),
                                  inst.env.source_digest)
        assert verify(inst.request, inst.state, grown).decision == "Refuted"
        # Removing any evaluable permit must never flip Refuted to Proven.
        # (Removing an *unevaluable* permit can: its binding failure was
        # itself forcing the fail-closed refusal, so it is exempt here.)
        evaluated = {e.axiom_id for e in base.trace.entries
                     if e.value is not None}
        for i, axiom in enumerate(inst.env.axioms):
            if axiom.effect != "permit" or axiom.id not in evaluated:
                continue
            shrunk = PolicyEnvironment(
                inst.env.registry,
                inst.env.axioms[:i] + inst.env.axioms[i + 1:],
                inst.env.source_digest,
            )
            assert verify(inst.request, inst.state, shrunk).decision == "Refuted"


def test_fail_closed_state_fact_deletion():
    proven = []
    gen = PolicyGenerator(random.Random(2024), drop_prob=0.0, mutate_prob=0.0,
                          alien_tool_prob=0.0)
    policy = None
    while len(proven) < 40:
        policy = gen.gen_policy()
        for _ in range(5):
            inst = gen.gen_instance("p", policy=policy)
            if verify(inst.request, inst.state, inst.env).decision == "Proven":
                proven.append(inst)

    for inst in proven:
        plan = inst.env.plan_for(inst.request.tool)
        for symbol in plan.state_symbols:
            if symbol not in inst.state.facts:
                continue
            facts = dict(inst.state.facts)
            del facts[symbol]
            result = verify(inst.request, SystemState(facts), inst.env)
            assert result.decision == "Refuted"
            assert any(
                c.reason == "binding-failure" and c.symbol == symbol
                for c in result.refusal_causes
            )


def test_oracle_equivalence_sample():
    for inst in iter_instances(8080, 2000, env_reuse=40):
        kernel = verify(inst.request, inst.state, inst.env).decision
        oracle = oracle_verify(inst.request, inst.state, inst.env)
        assert kernel == oracle, inst.source


def test_trace_digest_is_sha256_of_canonical_bytes():
    import hashlib

    env = shipped_env()
    result = verify(trade_request(), trade_state(), env)
    assert result.trace_digest == hashlib.sha256(
        result.trace.canonical()
    ).hexdigest()
    assert result.trace.to_plain()["env"] == env.version_digest


def test_result_invariants_on_random_instances():
    for inst in iter_instances(4459, 800, env_reuse=40):
        result = verify(inst.request, inst.state, inst.env)
        if result.decision == "Proven":
            assert result.refusal_causes == ()
        else:
            assert result.refusal_causes


def test_per_axiom_condition_values_match_oracle():
    """10,000 (condition, bindings) pairs: kernel valuation == naive oracle."""
    from axgate.oracle import _eval as oracle_eval, _Unbindable

    pairs = 0
    for inst in iter_instances(97, 5000, env_reuse=40):
        result = verify(inst.request, inst.state, inst.env)
        for axiom, entry in zip(
            inst.env.plan_for(inst.request.tool).axioms, result.trace.entries
        ):
            try:
                expected = oracle_eval(
                    axiom.condition, inst.request, inst.state, inst.env
                )
            except _Unbindable:
                expected = None
            if expected is None:
                assert entry.value is None
            else:
                assert entry.value == bool(expected), inst.source
            pairs += 1
        if pairs >= 10_000:
            break
    assert pairs >= 10_000


def test_oracle_edge_semantics():
    from axgate.compiler import compile_source as cs

    empty = cs("").environment
    request = ActionRequest("e", "any_tool", {})
    assert oracle_verify(request, SystemState({}), empty) == "Refuted"
    assert verify(request, SystemState({}), empty).decision == "Refuted"

    both = cs(
        'concept go : flag from request "Go"\n'
        "axiom allow permit t when go\n"
        "axiom deny forbid t when go\n"
    ).environment
    request = ActionRequest("b", "t", {"go": True})
    assert oracle_verify(request, SystemState({}), both) == "Refuted"
    assert verify(request, SystemState({}), both).decision == "Refuted"
