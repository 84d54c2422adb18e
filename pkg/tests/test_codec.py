from dataclasses import dataclass, replace
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from politeia.codec import (
    CodecError,
    canonical_decode,
    canonical_encode,
    parse_json,
    record,
    record_digest,
    render_json,
    sign_record,
    verify_record,
)
from politeia.crypto import Digest, Signature
from politeia.deliberation import Kind, Proposal
from politeia.economy import TxReport

from conftest import key_for


@dataclass(frozen=True)
class Inner:
    label: str
    weight: Fraction


@record
@dataclass(frozen=True)
class Sample:
    n: int
    flag: bool
    name: str
    blob: bytes
    ref: Digest
    items: tuple[int, ...]
    table: dict[str, int]
    maybe: int | None
    inner: Inner
    kind: Kind
    signature: Signature | None = None

    UNSIGNED = ("signature",)


ints = st.integers(-(1 << 63), (1 << 63) - 1)
samples = st.builds(
    Sample,
    n=ints,
    flag=st.booleans(),
    name=st.text(max_size=20),
    blob=st.binary(max_size=20),
    ref=st.binary(min_size=32, max_size=32).map(Digest),
    items=st.lists(ints, max_size=5).map(tuple),
    table=st.dictionaries(st.text(max_size=5), ints, max_size=4),
    maybe=st.none() | ints,
    inner=st.builds(Inner, st.text(max_size=5), st.fractions(-(10**12), 10**12, max_denominator=10**6)),
    kind=st.sampled_from(list(Kind)),
)


@given(samples)
def test_binary_round_trip(x):
    assert canonical_decode(canonical_encode(x)) == x


@given(samples)
def test_json_round_trip_is_canonical(x):
    data = render_json(x)
    assert parse_json(data, Sample) == x


@given(samples, samples)
def test_encoding_is_injective(x, y):
    assert (canonical_encode(x) == canonical_encode(y)) == (x == y)


def test_dict_order_does_not_matter():
    base = dict(n=1, flag=True, name="a", blob=b"", ref=Digest(bytes(32)), items=(), maybe=None,
                inner=Inner("i", Fraction(1, 3)), kind=Kind.RULE)
    a = Sample(table={"x": 1, "y": 2}, **base)
    b = Sample(table={"y": 2, "x": 1}, **base)
    assert canonical_encode(a) == canonical_encode(b)


def test_reports_differing_in_amount_encode_differently():
    r = TxReport("t1", "n1", "g1", 40, Digest(bytes(32)), 3)
    assert canonical_encode(r) != canonical_encode(replace(r, amount=41))


def test_out_of_range_integer_rejected():
    r = TxReport("t1", "n1", "g1", 1 << 63, Digest(bytes(32)), 3)
    with pytest.raises(CodecError):
        canonical_encode(r)


def test_out_of_range_fraction_rejected():
    base = dict(n=1, flag=True, name="a", blob=b"", ref=Digest(bytes(32)), items=(), table={}, maybe=None,
                kind=Kind.RULE)
    with pytest.raises(CodecError):
        canonical_encode(Sample(inner=Inner("i", Fraction(1 << 63)), **base))


def test_decode_rejects_trailing_and_unknown():
    r = TxReport("t1", "n1", "g1", 5, Digest(bytes(32)), 3)
    with pytest.raises(CodecError):
        canonical_decode(canonical_encode(r) + b"\x00")
    with pytest.raises(CodecError):
        canonical_decode(b"\x00\x00\x00\x03Foo")


def test_parse_rejects_non_canonical_bytes():
    r = TxReport("t1", "n1", "g1", 5, Digest(bytes(32)), 3)
    data = render_json(r)
    with pytest.raises(CodecError):
        parse_json(data.replace(b"\n", b"\r\n", 1), TxReport)
    with pytest.raises(CodecError):
        parse_json(data.rstrip(b"\n"), TxReport)
    with pytest.raises(CodecError):
        parse_json(b"{}", TxReport)


def test_signature_excluded_from_digest_and_checked():
    key = key_for("alice")
    p = Proposal("p1", Kind.RULE, "alice", "g1", b"body", 0, 2)
    signed = replace(p, signature=sign_record(key, p))
    assert record_digest(signed) == record_digest(p)
    assert verify_record(key.public_key, signed, signed.signature)
    assert not verify_record(key.public_key, replace(signed, group="g2"), signed.signature)
    assert not verify_record(key.public_key, p, None)
