"""Canonical serialization and digests.

Everything that gets hashed (policy environments, proof traces, audit
records) goes through here: UTF-8, lexicographically sorted keys, no
insignificant whitespace, rationals as reduced "p/q" with a positive
denominator, money as {"ccy": code, "minor": integer}. Equal structures
serialize to byte-identical documents on any platform.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction

from .values import Money

ZERO_DIGEST = "0" * 64


def rational_token(q: Fraction) -> str:
    """Reduced p/q form, q > 0 (Fraction normalizes the sign to p)."""
    return f"{q.numerator}/{q.denominator}"


def rational_from_token(token: str) -> Fraction:
    return Fraction(token)


def to_plain(value: object) -> object:
    """Map a typed value tree onto JSON-compatible canonical structures."""
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, Fraction):
        return rational_token(value)
    if isinstance(value, Money):
        minor: object
        if value.minor.denominator == 1:
            minor = value.minor.numerator
        else:
            # Scaled intermediates can carry fractional minor units.
            minor = rational_token(value.minor)
        return {"ccy": value.ccy, "minor": minor}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    raise TypeError(f"not canonicalizable: {value!r}")


def plain_value(value: object) -> object:
    """Fast single-value canonicalization for already-flat leaves."""
    t = type(value)
    if t is Fraction:
        return f"{value.numerator}/{value.denominator}"
    if t is Money:
        minor = value.minor
        return {
            "ccy": value.ccy,
            "minor": minor.numerator if minor.denominator == 1
            else f"{minor.numerator}/{minor.denominator}",
        }
    return value  # None, bool, int, str pass through


def canonical_bytes(doc: object) -> bytes:
    return json.dumps(
        to_plain(doc), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def canonical_bytes_plain(doc: object) -> bytes:
    """Serialize a document that is already in canonical plain form."""
    return json.dumps(
        doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(doc: object) -> str:
    return sha256_hex(canonical_bytes(doc))
