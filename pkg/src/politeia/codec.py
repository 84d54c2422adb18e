"""Canonical binary encoding and JSON rendering of protocol records.

Every record is a frozen dataclass registered with :func:`record`. The binary
layout is fixed by the dataclass field order:

* integers: 8-byte signed big-endian; bools: one byte
* str / bytes: 4-byte big-endian length, then UTF-8 / raw bytes
* Digest: 32 raw bytes
* Fraction: numerator then denominator, as integers
* tuple / list: 4-byte count, then items
* dict: 4-byte count, then (key, value) pairs sorted by encoded key
* optional: one presence byte, then the value if present
* nested dataclass: its fields in order, no tag

A top-level encoding is prefixed with the record's type tag, so two records
of different types never share an encoding.

The JSON rendering is a human-readable view of the same values. It is
itself canonical (sorted keys, fixed indentation), which lets a verifier
reject any file whose bytes differ from the rendering of what it parsed.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import struct
import types
import typing
from fractions import Fraction
from typing import Any, Callable, TypeVar

from .crypto import Digest, KeyPair, Signature, hash_bytes, sign, verify

T = TypeVar("T")

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")


class CodecError(ValueError):
    """Raised for values outside the schema or undecodable input."""


_REGISTRY: dict[str, type] = {}


def record(cls: type[T]) -> type[T]:
    """Register a dataclass as a top-level record type."""
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"{cls.__name__} is not a dataclass")
    tag = cls.__name__
    if tag in _REGISTRY and _REGISTRY[tag] is not cls:
        raise TypeError(f"duplicate record tag {tag}")
    _REGISTRY[tag] = cls
    return cls


def record_type(tag: str) -> type:
    return _REGISTRY[tag]


# -- type introspection -----------------------------------------------------

_hints_cache: dict[type, list[tuple[str, Any]]] = {}


def _fields(cls: type) -> list[tuple[str, Any]]:
    cached = _hints_cache.get(cls)
    if cached is None:
        hints = typing.get_type_hints(cls)
        cached = [(f.name, hints[f.name]) for f in dataclasses.fields(cls)]
        _hints_cache[cls] = cached
    return cached


def _optional_arg(tp: Any) -> Any | None:
    origin = typing.get_origin(tp)
    if origin is typing.Union or origin is types.UnionType:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) != 1 or len(typing.get_args(tp)) != 2:
            raise TypeError(f"only Optional unions are supported: {tp}")
        return args[0]
    return None


# -- binary encoding --------------------------------------------------------

Encoder = Callable[[Any, list], None]
_encoders: dict[Any, Encoder] = {}


def _encoder(tp: Any) -> Encoder:
    enc = _encoders.get(tp)
    if enc is None:
        enc = _build_encoder(tp)
        _encoders[tp] = enc
    return enc


def _enc_int(v: Any, out: list) -> None:
    if type(v) is not int:
        raise CodecError(f"expected int, got {type(v).__name__}")
    if not INT_MIN <= v <= INT_MAX:
        raise CodecError(f"integer {v} outside 64-bit range")
    out.append(_I64.pack(v))


def _enc_bool(v: Any, out: list) -> None:
    if type(v) is not bool:
        raise CodecError(f"expected bool, got {type(v).__name__}")
    out.append(b"\x01" if v else b"\x00")


def _enc_str(v: Any, out: list) -> None:
    if not isinstance(v, str):
        raise CodecError(f"expected str, got {type(v).__name__}")
    raw = v.encode("utf-8")
    out.append(_U32.pack(len(raw)))
    out.append(raw)


def _enc_bytes(v: Any, out: list) -> None:
    if not isinstance(v, bytes):
        raise CodecError(f"expected bytes, got {type(v).__name__}")
    out.append(_U32.pack(len(v)))
    out.append(bytes(v))


def _enc_digest(v: Any, out: list) -> None:
    if not isinstance(v, Digest):
        raise CodecError(f"expected Digest, got {type(v).__name__}")
    out.append(bytes(v))


def _enc_fraction(v: Any, out: list) -> None:
    if not isinstance(v, Fraction):
        raise CodecError(f"expected Fraction, got {type(v).__name__}")
    _enc_int(v.numerator, out)
    _enc_int(v.denominator, out)


def _build_encoder(tp: Any) -> Encoder:
    if tp is bool:
        return _enc_bool
    if tp is int:
        return _enc_int
    if tp is str:
        return _enc_str
    if tp is Digest:
        return _enc_digest
    if tp is bytes:
        return _enc_bytes
    if tp is Fraction:
        return _enc_fraction
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        def enc_enum(v: Any, out: list) -> None:
            if not isinstance(v, tp):
                raise CodecError(f"expected {tp.__name__}")
            _enc_str(v.value, out)
        return enc_enum
    inner = _optional_arg(tp)
    if inner is not None:
        inner_enc = _encoder(inner)

        def enc_opt(v: Any, out: list) -> None:
            if v is None:
                out.append(b"\x00")
            else:
                out.append(b"\x01")
                inner_enc(v, out)
        return enc_opt
    origin = typing.get_origin(tp)
    if origin in (tuple, list):
        args = typing.get_args(tp)
        if origin is tuple and (len(args) != 2 or args[1] is not Ellipsis):
            raise TypeError(f"only homogeneous tuples are supported: {tp}")
        item_enc = _encoder(args[0])

        def enc_seq(v: Any, out: list) -> None:
            if not isinstance(v, (tuple, list)):
                raise CodecError(f"expected sequence, got {type(v).__name__}")
            out.append(_U32.pack(len(v)))
            for item in v:
                item_enc(item, out)
        return enc_seq
    if origin is dict:
        key_tp, val_tp = typing.get_args(tp)
        key_enc, val_enc = _encoder(key_tp), _encoder(val_tp)

        def enc_map(v: Any, out: list) -> None:
            if not isinstance(v, dict):
                raise CodecError(f"expected dict, got {type(v).__name__}")
            pairs = []
            for k, item in v.items():
                kb: list = []
                key_enc(k, kb)
                pairs.append((b"".join(kb), item))
            pairs.sort(key=lambda p: p[0])
            out.append(_U32.pack(len(pairs)))
            for kb, item in pairs:
                out.append(kb)
                val_enc(item, out)
        return enc_map
    if dataclasses.is_dataclass(tp):
        field_encs = [(name, _encoder(ftp)) for name, ftp in _fields(tp)]

        def enc_dc(v: Any, out: list) -> None:
            if type(v) is not tp:
                raise CodecError(f"expected {tp.__name__}, got {type(v).__name__}")
            for name, fenc in field_encs:
                fenc(getattr(v, name), out)
        return enc_dc
    raise TypeError(f"unsupported schema type: {tp!r}")


def canonical_encode(obj: Any, exclude: frozenset[str] | set[str] = frozenset()) -> bytes:
    """Tagged canonical encoding of a registered record.

    ``exclude`` drops top-level fields, which is how signing and digest
    preimages leave out the signature fields themselves.
    """
    cls = type(obj)
    if _REGISTRY.get(cls.__name__) is not cls:
        raise CodecError(f"{cls.__name__} is not a registered record")
    out: list = []
    _enc_str(cls.__name__, out)
    for name, ftp in _fields(cls):
        if name in exclude:
            continue
        _encoder(ftp)(getattr(obj, name), out)
    return b"".join(out)


def encode_value(value: Any, tp: Any) -> bytes:
    """Untagged encoding of a bare value under a schema type."""
    out: list = []
    _encoder(tp)(value, out)
    return b"".join(out)


# -- binary decoding --------------------------------------------------------

class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise CodecError("truncated input")
        chunk = self.buf[self.pos:end]
        self.pos = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def _decode(tp: Any, r: _Reader) -> Any:
    if tp is bool:
        b = r.take(1)
        if b not in (b"\x00", b"\x01"):
            raise CodecError("invalid bool byte")
        return b == b"\x01"
    if tp is int:
        return _I64.unpack(r.take(8))[0]
    if tp is str:
        try:
            return r.take(r.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError("invalid UTF-8") from exc
    if tp is Digest:
        return Digest(r.take(32))
    if tp is bytes:
        return r.take(r.u32())
    if tp is Fraction:
        num, den = _decode(int, r), _decode(int, r)
        if den <= 0:
            raise CodecError("invalid fraction denominator")
        return Fraction(num, den)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(_decode(str, r))
        except ValueError as exc:
            raise CodecError(str(exc)) from exc
    inner = _optional_arg(tp)
    if inner is not None:
        flag = r.take(1)
        if flag == b"\x00":
            return None
        if flag != b"\x01":
            raise CodecError("invalid presence flag")
        return _decode(inner, r)
    origin = typing.get_origin(tp)
    if origin in (tuple, list):
        item_tp = typing.get_args(tp)[0]
        items = [_decode(item_tp, r) for _ in range(r.u32())]
        return tuple(items) if origin is tuple else items
    if origin is dict:
        key_tp, val_tp = typing.get_args(tp)
        result = {}
        for _ in range(r.u32()):
            k = _decode(key_tp, r)
            result[k] = _decode(val_tp, r)
        return result
    if dataclasses.is_dataclass(tp):
        return tp(**{name: _decode(ftp, r) for name, ftp in _fields(tp)})
    raise TypeError(f"unsupported schema type: {tp!r}")


def canonical_decode(data: bytes) -> Any:
    r = _Reader(data)
    tag = _decode(str, r)
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise CodecError(f"unknown record tag {tag!r}")
    obj = cls(**{name: _decode(ftp, r) for name, ftp in _fields(cls)})
    if r.pos != len(data):
        raise CodecError("trailing bytes after record")
    return obj


# -- digests and signatures over records ------------------------------------

def unsigned_fields(cls: type) -> frozenset[str]:
    """Fields left out of a record's digest preimage (signatures, self-digests)."""
    return frozenset(getattr(cls, "UNSIGNED", ()))


def record_digest(obj: Any) -> Digest:
    """Digest of a record over every field except its signature fields."""
    return hash_bytes(canonical_encode(obj, unsigned_fields(type(obj))))


def sign_record(key: KeyPair, obj: Any) -> Signature:
    return sign(key, bytes(record_digest(obj)))


def verify_record(public_key: bytes, obj: Any, signature: Signature | None) -> bool:
    if signature is None:
        return False
    return verify(public_key, bytes(record_digest(obj)), signature)


# -- JSON rendering ---------------------------------------------------------

def to_jsonable(value: Any, tp: Any) -> Any:
    if value is None:
        return None
    if tp is bool or tp is int or tp is str:
        return value
    if tp is Digest or tp is bytes:
        return bytes(value).hex()
    if tp is Fraction:
        return f"{value.numerator}/{value.denominator}"
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return value.value
    inner = _optional_arg(tp)
    if inner is not None:
        return to_jsonable(value, inner)
    origin = typing.get_origin(tp)
    if origin in (tuple, list):
        item_tp = typing.get_args(tp)[0]
        return [to_jsonable(v, item_tp) for v in value]
    if origin is dict:
        key_tp, val_tp = typing.get_args(tp)
        if key_tp is not str:
            raise TypeError("JSON rendering requires str map keys")
        return {k: to_jsonable(v, val_tp) for k, v in value.items()}
    if dataclasses.is_dataclass(tp):
        return {name: to_jsonable(getattr(value, name), ftp) for name, ftp in _fields(tp)}
    raise TypeError(f"unsupported schema type: {tp!r}")


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise CodecError(msg)


def from_jsonable(data: Any, tp: Any) -> Any:
    inner = _optional_arg(tp)
    if inner is not None:
        return None if data is None else from_jsonable(data, inner)
    _expect(data is not None, f"null where {tp!r} expected")
    if tp is bool:
        _expect(type(data) is bool, "expected boolean")
        return data
    if tp is int:
        _expect(type(data) is int, "expected integer")
        return data
    if tp is str:
        _expect(isinstance(data, str), "expected string")
        return data
    if tp is Digest or tp is bytes:
        _expect(isinstance(data, str), "expected hex string")
        try:
            raw = bytes.fromhex(data)
        except ValueError as exc:
            raise CodecError(f"bad hex: {exc}") from exc
        if tp is Digest:
            _expect(len(raw) == 32, "digest must be 32 bytes")
            return Digest(raw)
        return raw
    if tp is Fraction:
        _expect(isinstance(data, str) and data.count("/") == 1, "expected n/d fraction")
        num, den = data.split("/")
        try:
            return Fraction(int(num), int(den))
        except (ValueError, ZeroDivisionError) as exc:
            raise CodecError(f"bad fraction {data!r}") from exc
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(data)
        except ValueError as exc:
            raise CodecError(str(exc)) from exc
    origin = typing.get_origin(tp)
    if origin in (tuple, list):
        _expect(isinstance(data, list), "expected array")
        item_tp = typing.get_args(tp)[0]
        items = [from_jsonable(v, item_tp) for v in data]
        return tuple(items) if origin is tuple else items
    if origin is dict:
        _expect(isinstance(data, dict), "expected object")
        _, val_tp = typing.get_args(tp)
        return {k: from_jsonable(v, val_tp) for k, v in data.items()}
    if dataclasses.is_dataclass(tp):
        _expect(isinstance(data, dict), f"expected object for {tp.__name__}")
        fields = _fields(tp)
        _expect(set(data) == {name for name, _ in fields}, f"field mismatch in {tp.__name__}")
        try:
            return tp(**{name: from_jsonable(data[name], ftp) for name, ftp in fields})
        except (TypeError, ValueError) as exc:
            raise CodecError(str(exc)) from exc
    raise TypeError(f"unsupported schema type: {tp!r}")


def render_json(obj: Any) -> bytes:
    """Canonical JSON file bytes for a record."""
    text = json.dumps(to_jsonable(obj, type(obj)), sort_keys=True, indent=1, ensure_ascii=True)
    return (text + "\n").encode("ascii")


def parse_json(data: bytes, cls: type[T]) -> T:
    """Parse a rendered record; the bytes must be exactly its canonical rendering."""
    try:
        obj = from_jsonable(json.loads(data.decode("ascii")), cls)
    except (UnicodeDecodeError, json.JSONDecodeError, RecursionError) as exc:
        raise CodecError(f"unparseable JSON: {exc}") from exc
    if render_json(obj) != data:
        raise CodecError("non-canonical rendering")
    return obj
