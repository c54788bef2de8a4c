"""Hash-chained, append-only audit log.

Each record binds a decision to its proof-trace digest and to the digest of
the previous record, so any byte-level tampering, deletion, or reordering
is detectable by rescanning the file. Records are newline-delimited
canonical JSON; digests are lowercase hex SHA-256.

Only one writer may ever append to a given log (the gateway funnels all
handlers through a single consumer); verification and reading are pure and
safe to run concurrently with the writer.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .canonical import ZERO_DIGEST, canonical_bytes, sha256_hex

CAUSE_PARSE = "parse-error"
CAUSE_DIGEST = "digest-mismatch"
CAUSE_LINK = "link-mismatch"
CAUSE_SEQ = "seq-gap"


@dataclass(frozen=True, slots=True)
class AuditRecord:
    seq: int
    prev_digest: str
    ts_ns: int
    request_id: str
    tool: str
    env_version: str
    decision: str
    trace_digest: str
    refusal_causes: tuple  # tuples of (reason, axiom_id, symbol)
    enforced: bool
    record_digest: str = ""
    duplicate_of: int | None = None
    note: str | None = None

    def payload(self) -> dict:
        doc = {
            "seq": self.seq,
            "prev_digest": self.prev_digest,
            "ts_ns": self.ts_ns,
            "request_id": self.request_id,
            "tool": self.tool,
            "env_version": self.env_version,
            "decision": self.decision,
            "trace_digest": self.trace_digest,
            "refusal_causes": [list(c) for c in self.refusal_causes],
            "enforced": self.enforced,
        }
        if self.duplicate_of is not None:
            doc["duplicate_of"] = self.duplicate_of
        if self.note is not None:
            doc["note"] = self.note
        return doc

    def compute_digest(self) -> str:
        return sha256_hex(canonical_bytes(self.payload()))

    def line(self) -> bytes:
        doc = self.payload()
        doc["record_digest"] = self.record_digest
        return canonical_bytes(doc) + b"\n"

    @classmethod
    def from_doc(cls, doc: dict) -> "AuditRecord":
        return cls(
            seq=doc["seq"],
            prev_digest=doc["prev_digest"],
            ts_ns=doc["ts_ns"],
            request_id=doc["request_id"],
            tool=doc["tool"],
            env_version=doc["env_version"],
            decision=doc["decision"],
            trace_digest=doc["trace_digest"],
            refusal_causes=tuple(tuple(c) for c in doc.get("refusal_causes", [])),
            enforced=doc["enforced"],
            record_digest=doc.get("record_digest", ""),
            duplicate_of=doc.get("duplicate_of"),
            note=doc.get("note"),
        )


class AuditStorageError(OSError):
    """Appending could not be completed durably."""


class AuditWriter:
    """The single appender: assigns sequence numbers, chains digests, and
    flushes each record before acknowledging it."""

    def __init__(self, path: str, *, fsync: bool = True) -> None:
        self.path = path
        self._fsync = fsync
        self._seq = 0
        self._prev = ZERO_DIGEST
        self._recover_tail()
        self._fh: IO[bytes] = open(path, "ab")

    def _recover_tail(self) -> None:
        """Resume the chain from an existing log (append-only restarts)."""
        if not os.path.exists(self.path):
            return
        last: dict | None = None
        count = 0
        with open(self.path, "rb") as fh:
            for line in fh:
                if line.strip():
                    last = json.loads(line)
                    count += 1
        if last is not None:
            self._seq = last["seq"] + 1
            self._prev = last["record_digest"]
        else:
            self._seq = count

    @property
    def next_seq(self) -> int:
        return self._seq

    def append(self, **fields) -> AuditRecord:
        record = AuditRecord(seq=self._seq, prev_digest=self._prev, **fields)
        record = dataclasses.replace(record, record_digest=record.compute_digest())
        try:
            self._fh.write(record.line())
            self._fh.flush()
            if self._fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise AuditStorageError(str(exc)) from exc
        self._seq += 1
        self._prev = record.record_digest
        return record

    def close(self) -> None:
        try:
            self._fh.close()
        except OSError:
            pass

    def __enter__(self) -> "AuditWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


CAUSE_HEAD = "head-mismatch"


@dataclass(frozen=True, slots=True)
class ChainReport:
    ok: bool
    records: int
    bad_index: int | None = None
    cause: str | None = None
    head: str | None = None  # digest of the last intact record

    def render(self) -> str:
        if self.ok:
            return (f"ok: {self.records} records, chain intact, "
                    f"head {self.head or ZERO_DIGEST}")
        return f"bad record at index {self.bad_index}: {self.cause}"


def verify_chain_lines(
    lines: Iterable[bytes], *, expected_head: str | None = None
) -> ChainReport:
    """Recompute every record digest and linkage over raw log lines.

    Tamper evidence is byte-level: each line must be exactly the canonical
    serialization of the record it claims to be (so injected keys, renamed
    fields, whitespace, or anything else the parser would forgive still
    reports digest-mismatch), the recomputed payload digest must match the
    stored one, each prev_digest must equal the predecessor's digest, and
    sequence numbers must be gapless from zero. A final line without its
    newline is a truncated write and reports parse-error.

    Truncating the tail of a hash chain is indistinguishable from a shorter
    log by content alone; pass `expected_head` (the last record digest the
    auditor trusts) to detect it.
    """
    expected_prev = ZERO_DIGEST
    index = 0
    for line in lines:
        if not line.endswith(b"\n") or line == b"\n":
            return ChainReport(False, index, index, CAUSE_PARSE)
        try:
            doc = json.loads(line)
            record = AuditRecord.from_doc(doc)
        except (ValueError, KeyError, TypeError):
            return ChainReport(False, index, index, CAUSE_PARSE)
        if record.line() != line:
            return ChainReport(False, index, index, CAUSE_DIGEST)
        if record.compute_digest() != record.record_digest:
            return ChainReport(False, index, index, CAUSE_DIGEST)
        if record.prev_digest != expected_prev:
            return ChainReport(False, index, index, CAUSE_LINK)
        if record.seq != index:
            return ChainReport(False, index, index, CAUSE_SEQ)
        expected_prev = record.record_digest
        index += 1
    if expected_head is not None and expected_prev != expected_head:
        return ChainReport(False, index, index, CAUSE_HEAD, head=expected_prev)
    return ChainReport(True, index, head=expected_prev)


def verify_chain(path: str, *, expected_head: str | None = None) -> ChainReport:
    with open(path, "rb") as fh:
        return verify_chain_lines(fh, expected_head=expected_head)


def iter_records(path: str) -> Iterator[AuditRecord]:
    with open(path, "rb") as fh:
        for line in fh:
            if line.strip():
                yield AuditRecord.from_doc(json.loads(line))


def find_record(path: str, *, seq: int | None = None,
                request_id: str | None = None) -> AuditRecord | None:
    for record in iter_records(path):
        if seq is not None and record.seq == seq:
            return record
        if request_id is not None and record.request_id == request_id:
            return record
    return None
