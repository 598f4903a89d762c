"""Deterministic seeded samplers for ring elements.

Every sampler is a pure function of (32-byte seed, context): the seed keys a
Philox counter-based generator, so identical seeds reproduce identical
polynomials on any platform. Uniform ring elements are drawn once in [0, q)
per coefficient (rejection sampling) and then reduced per limb, so a seeded
polynomial is a single well-defined element of R_q.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from . import kernels
from .errors import ParameterError
from .ring import Domain, Polynomial, RingContext

SEED_BYTES = 32

# Centered discrete Gaussian for RLWE error terms: sigma = 3.2, truncated at
# six standard deviations (|v| <= 19).
ERROR_SIGMA = 3.2
ERROR_BOUND = 19

_SUPPORT = np.arange(-ERROR_BOUND, ERROR_BOUND + 1)
_weights = np.exp(-(_SUPPORT.astype(np.float64) ** 2) / (2 * ERROR_SIGMA**2))
_cdf = np.cumsum(_weights) / np.sum(_weights)
# fixed-point CDF thresholds against raw uint64 draws; the top bucket absorbs
# the rest of the range, so its threshold is dropped
_THRESHOLDS = np.array(
    [min(int(c * 2**64), 2**64 - 1) for c in _cdf[:-1]], dtype=np.uint64
)


def derive_seed(seed: bytes, label: str, *indices: int) -> bytes:
    """Domain-separated 32-byte subseed."""
    h = hashlib.sha256()
    h.update(seed)
    h.update(label.encode())
    for i in indices:
        h.update(int(i).to_bytes(8, "little", signed=False))
    return h.digest()


def seed_from_int(value: int) -> bytes:
    return hashlib.sha256(b"seed:" + int(value).to_bytes(16, "little", signed=True)).digest()


def _check_seed(seed: bytes):
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_BYTES:
        raise ParameterError(f"seed must be {SEED_BYTES} bytes")


def _philox(seed: bytes):
    entropy = int.from_bytes(bytes(seed), "little")
    return np.random.Philox(np.random.SeedSequence(entropy))


def raw_uint64(seed: bytes, count: int) -> np.ndarray:
    """Deterministic stream of raw 64-bit words."""
    _check_seed(seed)
    return _philox(seed).random_raw(count)


def sample_uniform(seed: bytes, ctx: RingContext) -> Polynomial:
    """Uniform element of R_q (coefficient domain), deterministic in the seed."""
    _check_seed(seed)
    bits = ctx.q.bit_length()
    words = (bits + 63) // 64
    gen = _philox(seed)
    n = ctx.n

    if words == 1:
        mask = np.uint64((1 << bits) - 1)
        vals = _rejection_draw(gen, n, lambda w: w[:, 0] & mask, lambda v: v < ctx.q, 1)
        res = np.empty((ctx.nlimb, n), dtype=np.uint64)
        for li, limb in enumerate(ctx.limbs):
            res[li] = vals % np.uint64(limb.value)
        return Polynomial(ctx, Domain.COEFF, res)

    if words == 2:
        hi_mask = np.uint64((1 << (bits - 64)) - 1)
        q_hi = np.uint64(ctx.q >> 64)
        q_lo = np.uint64(ctx.q & ((1 << 64) - 1))

        def extract(w):
            return np.stack([w[:, 0], w[:, 1] & hi_mask], axis=1)

        def accept(v):
            return (v[:, 1] < q_hi) | ((v[:, 1] == q_hi) & (v[:, 0] < q_lo))

        vals = _rejection_draw(gen, n, extract, accept, 2)
        lo = np.ascontiguousarray(vals[:, 0])
        hi = np.ascontiguousarray(vals[:, 1])
        res = np.empty((ctx.nlimb, n), dtype=np.uint64)
        for li, limb in enumerate(ctx.limbs):
            res[li] = kernels.reduce_2words(hi, lo, np.uint64(limb.value))
        return Polynomial(ctx, Domain.COEFF, res)

    # arbitrary width: plain big-int rejection (not performance critical)
    top_mask = (1 << (bits - 64 * (words - 1))) - 1
    out = []
    while len(out) < n:
        raw = gen.random_raw(words * (n - len(out) + 16)).reshape(-1, words)
        for row in raw.tolist():
            row[-1] &= top_mask
            v = 0
            for w in reversed(row):
                v = (v << 64) | w
            if v < ctx.q:
                out.append(v)
                if len(out) == n:
                    break
    res = np.empty((ctx.nlimb, n), dtype=np.uint64)
    for li, limb in enumerate(ctx.limbs):
        m = limb.value
        res[li] = [v % m for v in out]
    return Polynomial(ctx, Domain.COEFF, res)


def _rejection_draw(gen, n, extract, accept, words):
    """Collect n accepted draws from a word stream, in stream order."""
    shape1 = words == 1
    chunks = []
    have = 0
    while have < n:
        need = n - have
        raw = gen.random_raw(words * (need + need // 2 + 16)).reshape(-1, words)
        vals = extract(raw)
        keep = vals[accept(vals)]
        chunks.append(keep)
        have += len(keep)
    vals = np.concatenate(chunks)[:n]
    return vals if not shape1 else vals.reshape(n)


def gaussian_ints(seed: bytes, count: int) -> np.ndarray:
    """Signed integer draws from the truncated centered discrete Gaussian."""
    _check_seed(seed)
    draws = _philox(seed).random_raw(count)
    idx = np.searchsorted(_THRESHOLDS, draws, side="right")
    return _SUPPORT[idx]


def sample_error(seed: bytes, ctx: RingContext) -> Polynomial:
    """Small error polynomial; negative values stored as q - |v| in every limb."""
    vals = gaussian_ints(seed, ctx.n)
    res = np.empty((ctx.nlimb, ctx.n), dtype=np.uint64)
    for li, limb in enumerate(ctx.limbs):
        m = limb.value
        res[li] = np.where(vals < 0, m + vals, vals).astype(np.uint64)
    return Polynomial(ctx, Domain.COEFF, res)


def sample_secret(seed: bytes, ctx: RingContext) -> Polynomial:
    """Uniform binary polynomial, replicated across limbs."""
    _check_seed(seed)
    bits = (_philox(seed).random_raw(ctx.n) & np.uint64(1)).astype(np.uint64)
    res = np.broadcast_to(bits, (ctx.nlimb, ctx.n)).copy()
    return Polynomial(ctx, Domain.COEFF, res)
