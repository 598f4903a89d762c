"""Additive-only BFV over R_q in secret-key form.

A ciphertext is a pair (c0, c1) with

    c0 = a*s + e + delta*m   (coefficient domain)
    c1 = -a                  (NTT domain)

so decryption computes round(t/q * (c0 + intt(c1 (*) ntt(s)))) mod t. Keeping
c1 in the NTT domain means a client spends one inverse NTT per mask it
prepares and the aggregator adds ciphertexts with no transforms at all; the
single ntt(s) is cached in the key. Masks are bound to the randomness seed
that produced them and may be consumed exactly once: reusing (a, e) across two
plaintexts would reveal delta*(m1 - m2) to anyone holding both ciphertexts.

Addition is the only homomorphic operation. Sums stay decryptable while the
accumulated noise is below delta/2 and the plaintext sum stays below t (the
packing layer enforces the latter).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MaskReuseError, ParameterError, PlaintextRangeError
from .ring import (
    Domain,
    Polynomial,
    RingContext,
    ntt_forward,
    ntt_inverse,
    poly_add,
    poly_mul,
    poly_neg,
    poly_scalar_mul,
    crt_reconstruct,
    scale_round_mod_t,
)
from .sampling import derive_seed, sample_error, sample_secret, sample_uniform


@dataclass(frozen=True)
class SecretKey:
    s: Polynomial
    s_ntt: Polynomial


@dataclass
class PlaintextPoly:
    """Degree-(n-1) polynomial with coefficients in [0, t)."""

    coeffs: np.ndarray

    @staticmethod
    def create(coeffs, ctx: RingContext) -> "PlaintextPoly":
        arr = np.asarray(coeffs, dtype=np.uint64)
        if arr.shape != (ctx.n,):
            raise ParameterError(f"plaintext must have {ctx.n} coefficients, got {arr.shape}")
        if arr.size and int(arr.max()) >= ctx.t:
            bad = int(np.argmax(arr >= np.uint64(ctx.t)))
            raise PlaintextRangeError(
                f"coefficient {int(arr[bad])} at index {bad} is >= t={ctx.t}"
            )
        return PlaintextPoly(arr)

    @staticmethod
    def zeros(ctx: RingContext) -> "PlaintextPoly":
        return PlaintextPoly(np.zeros(ctx.n, dtype=np.uint64))


@dataclass
class EncryptionMask:
    """One-time encryption material: b = a*s + e kept alongside -ntt(a)."""

    b: Polynomial
    neg_a_ntt: Polynomial
    consumed: bool = field(default=False, compare=False)


@dataclass
class Ciphertext:
    c0: Polynomial  # coefficient domain
    c1: Polynomial  # NTT domain
    round_tag: int = 0
    index: int = 0


def keygen(seed: bytes, ctx: RingContext) -> SecretKey:
    s = sample_secret(seed, ctx)
    return SecretKey(s=s, s_ntt=ntt_forward(s))


def prepare_mask(sk: SecretKey, seed: bytes, ctx: RingContext) -> EncryptionMask:
    """Derive the per-message randomness (a, e) and precompute b and -ntt(a).

    Deterministic in the seed, so a mask can be regenerated for audit, but the
    returned object still enforces single use through its consumed flag.
    """
    a = sample_uniform(derive_seed(seed, "mask-a"), ctx)
    e = sample_error(derive_seed(seed, "mask-e"), ctx)
    a_ntt = ntt_forward(a)
    b = poly_add(ntt_inverse(poly_mul(a_ntt, sk.s_ntt)), e)
    return EncryptionMask(b=b, neg_a_ntt=poly_neg(a_ntt))


def _plaintext_poly(m: PlaintextPoly, ctx: RingContext) -> Polynomial:
    res = np.empty((ctx.nlimb, ctx.n), dtype=np.uint64)
    for li, limb in enumerate(ctx.limbs):
        res[li] = m.coeffs % np.uint64(limb.value)
    return Polynomial(ctx, Domain.COEFF, res)


def encrypt(
    m: PlaintextPoly,
    mask: EncryptionMask,
    ctx: RingContext,
    round_tag: int = 0,
    index: int = 0,
) -> Ciphertext:
    if mask.consumed:
        raise MaskReuseError("encryption mask has already been used")
    if mask.b.ctx is not ctx and mask.b.ctx != ctx:
        raise ParameterError("mask belongs to a different ring context")
    if m.coeffs.size and int(m.coeffs.max()) >= ctx.t:
        raise PlaintextRangeError("plaintext coefficient out of range")
    mask.consumed = True
    c0 = poly_add(mask.b, poly_scalar_mul(_plaintext_poly(m, ctx), ctx.delta))
    return Ciphertext(c0=c0, c1=mask.neg_a_ntt, round_tag=round_tag, index=index)


def add_ciphertexts(cts: list[Ciphertext]) -> Ciphertext:
    """Coordinate-wise sum; requires matching round tags and slot indices."""
    if not cts:
        raise ParameterError("cannot add an empty list of ciphertexts")
    first = cts[0]
    c0, c1 = first.c0, first.c1
    for ct in cts[1:]:
        if ct.round_tag != first.round_tag or ct.index != first.index:
            raise ParameterError(
                f"ciphertext tags disagree: ({ct.round_tag},{ct.index}) vs "
                f"({first.round_tag},{first.index})"
            )
        c0 = poly_add(c0, ct.c0)
        c1 = poly_add(c1, ct.c1)
    return Ciphertext(c0=c0, c1=c1, round_tag=first.round_tag, index=first.index)


def _phase(ct: Ciphertext, sk: SecretKey, ctx: RingContext) -> list[int]:
    """c0 + intt(c1 (*) ntt(s)) lifted to integers in [0, q)."""
    if ct.c1.domain is not Domain.NTT or ct.c0.domain is not Domain.COEFF:
        raise ParameterError("ciphertext domains are (coeff, ntt) by construction")
    return crt_reconstruct(poly_add(ct.c0, ntt_inverse(poly_mul(ct.c1, sk.s_ntt))))


def decrypt(ct: Ciphertext, sk: SecretKey, ctx: RingContext) -> PlaintextPoly:
    vals = scale_round_mod_t(_phase(ct, sk, ctx), ctx)
    return PlaintextPoly(np.array(vals, dtype=np.uint64))


def noise_margin(ct: Ciphertext, expected, sk: SecretKey, ctx: RingContext) -> float:
    """Headroom in bits before rounding would flip: log2(delta/2) - log2(|noise|).

    `expected` is the exact integer plaintext the phase should carry (a
    PlaintextPoly or any integer sequence), given per coefficient and not
    reduced mod t, so the margin of a k-way sum is measured against the true
    accumulated noise rather than the wrapped residue.
    """
    if isinstance(expected, PlaintextPoly):
        expected = expected.coeffs
    exp = [int(v) for v in expected]
    if len(exp) != ctx.n:
        raise ParameterError(f"expected {ctx.n} coefficients, got {len(exp)}")
    phase = _phase(ct, sk, ctx)
    q = ctx.q
    half = q // 2
    worst = 0
    for v, m in zip(phase, exp):
        d = (v - ctx.delta * m) % q
        if d > half:
            d -= q
        worst = max(worst, abs(d))
    return math.log2(ctx.delta / 2) - math.log2(max(worst, 1))
