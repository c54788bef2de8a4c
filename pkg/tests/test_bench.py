from fractions import Fraction

import pytest

from axgate import compile_source
from axgate.bench import InsufficientSamplesError, bench, fixed_workload
from axgate.kernel import ActionRequest, SystemState


def _env(axioms: int):
    lines = ['concept x : quantity from request "X"']
    for i in range(axioms):
        lines.append(f"axiom a{i} permit execute_trade when x >= {i}")
    result = compile_source("\n".join(lines) + "\n")
    assert result.ok
    return result.environment


def _workload():
    return fixed_workload(
        ActionRequest("b", "execute_trade", {"x": Fraction(10**6)}),
        SystemState({}),
    )


def test_report_percentiles_ordered():
    report = bench(_env(1), _workload(), 2000)
    assert report.p50_ns <= report.p90_ns <= report.p99_ns <= report.max_ns
    assert report.samples == 2000
    assert report.axiom_count == 1
    assert not report.reportable  # < 10k samples


def test_zero_samples_rejected():
    with pytest.raises(InsufficientSamplesError):
        bench(_env(1), _workload(), 0)
    with pytest.raises(InsufficientSamplesError):
        bench(_env(1), _workload(), 100, threads=0)


def test_multithreaded_mode_collects_all_samples():
    report = bench(_env(1), _workload(), 2001, threads=4)
    assert report.samples == 2001
    assert report.threads == 4


def test_scaling_with_axiom_count_is_monotone_and_bounded():
    small = bench(_env(1), _workload(), 3000)
    large = bench(_env(100), _workload(), 3000)
    assert large.p50_ns >= small.p50_ns
    # at most linear in in-scope axiom count, within a 2x allowance
    assert large.p50_ns <= small.p50_ns * 100 * 2


def test_bench_never_touches_audit(monkeypatch):
    import axgate.audit as audit_mod

    calls = {"n": 0}
    original = audit_mod.AuditWriter.append

    def counting_append(self, **fields):
        calls["n"] += 1
        return original(self, **fields)

    monkeypatch.setattr(audit_mod.AuditWriter, "append", counting_append)
    bench(_env(1), _workload(), 500)
    assert calls["n"] == 0
