"""Latency microbenchmarks for the verification hot path.

Measures verify() wall time only: no request parsing, no network, no audit
I/O anywhere near the timed region. Per-call timings are collected with
perf_counter_ns, warmup iterations are discarded, and percentiles are read
off the sorted samples.
"""

from __future__ import annotations

import platform
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from .compiler import PolicyEnvironment
from .kernel import ActionRequest, SystemState, verify

Workload = Callable[[int], tuple[ActionRequest, SystemState]]


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyReport:
    samples: int
    p50_ns: int
    p90_ns: int
    p99_ns: int
    max_ns: int
    axiom_count: int
    warmup_discarded: int
    threads: int
    hardware_note: str

    @property
    def reportable(self) -> bool:
        return self.samples >= 10_000

    def render(self) -> str:
        def us(ns: int) -> str:
            return f"{ns / 1000:.2f} us"

        lines = [
            f"samples: {self.samples} (warmup discarded: {self.warmup_discarded},"
            f" threads: {self.threads})",
            f"axioms in environment: {self.axiom_count}",
            f"p50: {us(self.p50_ns)}   p90: {us(self.p90_ns)}   "
            f"p99: {us(self.p99_ns)}   max: {us(self.max_ns)}",
            f"hardware: {self.hardware_note}",
        ]
        if not self.reportable:
            lines.append("note: fewer than 10000 samples; not a reportable run")
        return "\n".join(lines)


def percentile(sorted_ns: Sequence[int], q: float) -> int:
    if not sorted_ns:
        raise InsufficientSamplesError("no samples")
    index = int(q * (len(sorted_ns) - 1))
    return sorted_ns[index]


def _hardware_note() -> str:
    uname = platform.uname()
    return f"{uname.machine} {uname.system}, python {platform.python_version()}"


def bench(
    env: PolicyEnvironment,
    workload: Workload,
    samples: int,
    *,
    threads: int = 1,
    warmup: int | None = None,
) -> LatencyReport:
    """Time `samples` verifications of workload-generated (request, state)
    pairs against one shared environment."""
    if samples < 1:
        raise InsufficientSamplesError(f"samples must be >= 1, got {samples}")
    if threads < 1:
        raise InsufficientSamplesError(f"threads must be >= 1, got {threads}")
    warmup = min(1000, max(16, samples // 10)) if warmup is None else warmup

    for i in range(warmup):
        request, state = workload(i)
        verify(request, state, env)

    if threads == 1:
        timings = _timed_run(env, workload, 0, samples)
    else:
        per_thread = samples // threads
        counts = [per_thread] * threads
        counts[0] += samples - per_thread * threads
        buckets: list[list[int]] = [[] for _ in range(threads)]
        workers = []
        for t, count in enumerate(counts):
            def run(t=t, count=count):
                buckets[t] = _timed_run(env, workload, t * count, count)
            workers.append(threading.Thread(target=run))
        for w in workers:
            w.start()
        for w in workers:
            w.join()
        timings = [ns for bucket in buckets for ns in bucket]

    timings.sort()
    return LatencyReport(
        samples=len(timings),
        p50_ns=percentile(timings, 0.50),
        p90_ns=percentile(timings, 0.90),
        p99_ns=percentile(timings, 0.99),
        max_ns=timings[-1],
        axiom_count=len(env.axioms),
        warmup_discarded=warmup,
        threads=threads,
        hardware_note=_hardware_note(),
    )


def _timed_run(env, workload, offset: int, count: int) -> list[int]:
    timings = []
    clock = time.perf_counter_ns
    for i in range(count):
        request, state = workload(offset + i)
        t0 = clock()
        verify(request, state, env)
        timings.append(clock() - t0)
    return timings


def fixed_workload(request: ActionRequest, state: SystemState) -> Workload:
    def workload(_: int) -> tuple[ActionRequest, SystemState]:
        return request, state

    return workload
