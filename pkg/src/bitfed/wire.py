"""Binary wire format for protocol messages.

Frame layout (all integers little-endian):

    [4B magic "FBT1"] [1B message tag] [8B payload length] [payload]

Message tags: 1 = encrypted update, 2 = aggregate broadcast, 3 = model init,
4 = abort. A polynomial is one domain byte (0 = coefficient, 1 = NTT)
followed by limb-major residues, n uint64 words per limb; a ciphertext is c0
then c1. Quantization metadata is a (lo, hi) float64 pair per layer.

Decoding validates everything it can without key material: magic, tag,
length, domain flags (c0 coefficient, c1 NTT), and that every residue is
below its limb modulus. Failures raise WireDecodeError carrying the absolute
byte offset of the offending field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .bfv import Ciphertext
from .errors import WireDecodeError
from .ring import Domain, Polynomial, RingContext

MAGIC = b"FBT1"
HEADER_SIZE = len(MAGIC) + 1 + 8

TAG_UPDATE = 1
TAG_BROADCAST = 2
TAG_MODEL_INIT = 3
TAG_ABORT = 4

_DOMAIN_FLAG = {Domain.COEFF: 0, Domain.NTT: 1}
_FLAG_DOMAIN = {0: Domain.COEFF, 1: Domain.NTT}


@dataclass
class EncryptedUpdate:
    client_id: int
    round_no: int
    cts: list[Ciphertext]
    quant_meta: list[tuple[float, float]]


@dataclass
class AggregateBroadcast:
    round_no: int
    participants: int
    cts: list[Ciphertext]
    quant_meta: list[tuple[float, float]]


@dataclass
class ModelInit:
    round_no: int
    layers: list[np.ndarray]


@dataclass
class Abort:
    round_no: int
    reason: str


def poly_wire_size(ctx: RingContext) -> int:
    return 1 + ctx.nlimb * ctx.n * 8


def ciphertext_wire_size(ctx: RingContext) -> int:
    return 2 * poly_wire_size(ctx)


def update_wire_size(ct_count: int, layer_count: int, ctx: RingContext) -> int:
    return HEADER_SIZE + 8 + 8 + 4 + ct_count * ciphertext_wire_size(ctx) + 16 * layer_count


def broadcast_wire_size(ct_count: int, layer_count: int, ctx: RingContext) -> int:
    return HEADER_SIZE + 8 + 4 + 4 + ct_count * ciphertext_wire_size(ctx) + 16 * layer_count


def model_init_wire_size(layer_sizes) -> int:
    return HEADER_SIZE + 8 + 4 + sum(8 + 8 * int(r) for r in layer_sizes)


def _encode_poly(p: Polynomial, out: bytearray):
    out.append(_DOMAIN_FLAG[p.domain])
    out += p.residues.astype("<u8", copy=False).tobytes()


def _encode_ct(ct: Ciphertext, out: bytearray):
    _encode_poly(ct.c0, out)
    _encode_poly(ct.c1, out)


def _frame(tag: int, payload: bytes) -> bytes:
    return MAGIC + bytes([tag]) + struct.pack("<Q", len(payload)) + payload


def encode_message(msg) -> bytes:
    body = bytearray()
    if isinstance(msg, EncryptedUpdate):
        body += struct.pack("<QQI", msg.client_id, msg.round_no, len(msg.cts))
        for ct in msg.cts:
            _encode_ct(ct, body)
        for lo, hi in msg.quant_meta:
            body += struct.pack("<dd", lo, hi)
        return _frame(TAG_UPDATE, bytes(body))
    if isinstance(msg, AggregateBroadcast):
        body += struct.pack("<QII", msg.round_no, msg.participants, len(msg.cts))
        for ct in msg.cts:
            _encode_ct(ct, body)
        for lo, hi in msg.quant_meta:
            body += struct.pack("<dd", lo, hi)
        return _frame(TAG_BROADCAST, bytes(body))
    if isinstance(msg, ModelInit):
        body += struct.pack("<QI", msg.round_no, len(msg.layers))
        for layer in msg.layers:
            arr = np.asarray(layer, dtype=np.float64).ravel()
            body += struct.pack("<Q", arr.size)
            body += arr.astype("<f8", copy=False).tobytes()
        return _frame(TAG_MODEL_INIT, bytes(body))
    if isinstance(msg, Abort):
        reason = msg.reason.encode()
        body += struct.pack("<QI", msg.round_no, len(reason))
        body += reason
        return _frame(TAG_ABORT, bytes(body))
    raise TypeError(f"not a wire message: {type(msg).__name__}")


class _Reader:
    """Cursor over a byte buffer that reports absolute offsets on failure."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def fail(self, message: str, at: int | None = None):
        raise WireDecodeError(message, self.pos if at is None else at)

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(f"truncated {what}: need {n} bytes, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f64_pair(self, what: str) -> tuple[float, float]:
        return struct.unpack("<dd", self.take(16, what))


def _decode_poly(r: _Reader, ctx: RingContext, expect: Domain, what: str) -> Polynomial:
    flag_at = r.pos
    flag = r.take(1, f"{what} domain flag")[0]
    if flag not in _FLAG_DOMAIN:
        r.fail(f"unknown domain flag {flag} for {what}", at=flag_at)
    if _FLAG_DOMAIN[flag] is not expect:
        r.fail(f"{what} must be in the {expect.name.lower()} domain", at=flag_at)
    res = np.empty((ctx.nlimb, ctx.n), dtype=np.uint64)
    for li, limb in enumerate(ctx.limbs):
        limb_at = r.pos
        raw = r.take(ctx.n * 8, f"{what} limb {li}")
        arr = np.frombuffer(raw, dtype="<u8")
        over = arr >= np.uint64(limb.value)
        if over.any():
            idx = int(np.argmax(over))
            r.fail(
                f"{what} residue {int(arr[idx])} >= modulus {limb.value}",
                at=limb_at + idx * 8,
            )
        res[li] = arr
    return Polynomial(ctx, expect, res)


def _decode_ct(r: _Reader, ctx: RingContext, round_no: int, index: int) -> Ciphertext:
    c0 = _decode_poly(r, ctx, Domain.COEFF, f"ciphertext {index} c0")
    c1 = _decode_poly(r, ctx, Domain.NTT, f"ciphertext {index} c1")
    return Ciphertext(c0=c0, c1=c1, round_tag=round_no, index=index)


def _decode_meta(r: _Reader, end: int) -> list[tuple[float, float]]:
    remaining = end - r.pos
    if remaining % 16:
        r.fail(f"quantization metadata length {remaining} is not a multiple of 16")
    return [r.f64_pair("quantization metadata") for _ in range(remaining // 16)]


def decode_message(data: bytes, ctx: RingContext):
    """Parse one frame; returns the message dataclass for its tag."""
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        r.fail(f"bad magic {magic!r}", at=0)
    tag_at = r.pos
    tag = r.take(1, "message tag")[0]
    length = r.u64("payload length")
    if r.pos + length != len(data):
        r.fail(
            f"payload length {length} does not match {len(data) - r.pos} bytes present",
            at=tag_at + 1,
        )
    end = len(data)

    if tag == TAG_UPDATE:
        client_id = r.u64("client id")
        round_no = r.u64("round number")
        count = r.u32("ciphertext count")
        cts = [_decode_ct(r, ctx, round_no, i) for i in range(count)]
        return EncryptedUpdate(client_id, round_no, cts, _decode_meta(r, end))
    if tag == TAG_BROADCAST:
        round_no = r.u64("round number")
        participants = r.u32("participant count")
        count = r.u32("ciphertext count")
        cts = [_decode_ct(r, ctx, round_no, i) for i in range(count)]
        return AggregateBroadcast(round_no, participants, cts, _decode_meta(r, end))
    if tag == TAG_MODEL_INIT:
        round_no = r.u64("round number")
        layer_count = r.u32("layer count")
        layers = []
        for i in range(layer_count):
            size = r.u64(f"layer {i} size")
            raw = r.take(size * 8, f"layer {i} weights")
            layers.append(np.frombuffer(raw, dtype="<f8").copy())
        if r.pos != end:
            r.fail(f"{end - r.pos} trailing bytes after model init")
        return ModelInit(round_no, layers)
    if tag == TAG_ABORT:
        round_no = r.u64("round number")
        size = r.u32("reason length")
        reason = r.take(size, "abort reason")
        if r.pos != end:
            r.fail(f"{end - r.pos} trailing bytes after abort")
        return Abort(round_no, reason.decode("utf-8", errors="replace"))
    r.fail(f"unknown message tag {tag}", at=tag_at)
