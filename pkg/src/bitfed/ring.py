"""Exact arithmetic over the negacyclic ring Z_q[X]/(X^n + 1) in RNS form.

The ciphertext modulus q is a product of word-sized prime limbs, each
congruent to 1 mod 2n so a negacyclic NTT of size n exists. Polynomials
carry one uint64 residue row per limb plus a domain tag (coefficient vs
NTT/evaluation). All operations are pure: contexts and polynomials are
never mutated after construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContextMismatchError, DomainMismatchError, ParameterError

# Maximal log2(q) per ring degree at 128-bit classical security
# (homomorphic encryption standard recommendation).
SECURITY_BUDGET_BITS = {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881}

DEFAULT_N = 4096
DEFAULT_T = 2281701377
DEFAULT_LIMB_BITS = 54


class Domain(enum.Enum):
    COEFF = "coefficient"
    NTT = "ntt"


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_prime(bits: int, n: int, above: int = 0) -> int:
    """Smallest prime p > max(2^bits, above) with p = 1 (mod 2n)."""
    two_n = 2 * n
    p = max(1 << bits, above) + 1
    rem = (p - 1) % two_n
    if rem:
        p += two_n - rem
    while not is_prime(p):
        p += two_n
    return p


def _find_2n_root(m: int, n: int) -> int:
    """Primitive 2n-th root of unity mod prime m (n a power of two).

    A candidate g^((m-1)/2n) has order exactly 2n iff its n-th power
    is -1, since the only divisor of 2n not dividing n is 2n itself.
    """
    exp = (m - 1) // (2 * n)
    for g in range(2, m):
        psi = pow(g, exp, m)
        if pow(psi, n, m) == m - 1:
            return psi
    raise ParameterError(f"no 2n-th root of unity mod {m}")


def _bit_reverse(x: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


@dataclass(frozen=True)
class Modulus:
    """One RNS limb: a word-sized NTT-friendly prime with reduction constants."""

    value: int
    barrett_hi: int  # floor(4^k / value) with k = value.bit_length()
    two_n_root: int  # primitive 2n-th root of unity mod value

    @classmethod
    def create(cls, value: int, n: int) -> "Modulus":
        if not is_prime(value):
            raise ParameterError(f"limb modulus {value} is not prime")
        if (value - 1) % (2 * n) != 0:
            raise ParameterError(f"limb modulus {value} is not 1 mod {2 * n}")
        k = value.bit_length()
        return cls(value=value, barrett_hi=(1 << (2 * k)) // value, two_n_root=_find_2n_root(value, n))

    @property
    def shift(self) -> int:
        return self.value.bit_length()


def mod_mul(a: int, b: int, m: Modulus) -> int:
    """(a * b) mod m.value via Barrett reduction; requires a, b < m.value."""
    k = m.shift
    x = a * b
    qhat = ((x >> (k - 1)) * m.barrett_hi) >> (k + 1)
    r = x - qhat * m.value
    while r >= m.value:
        r -= m.value
    return r


@dataclass(frozen=True)
class RingContext:
    """Immutable ring parameters plus precomputed NTT/CRT tables."""

    n: int
    limbs: tuple[Modulus, ...]
    q: int
    t: int
    delta: int
    # per-limb kernel tables (uint64 arrays, twiddles in bit-reversed order)
    mods: np.ndarray = field(repr=False)
    barrett_mus: np.ndarray = field(repr=False)
    barrett_ks: np.ndarray = field(repr=False)
    fwd_twiddles: np.ndarray = field(repr=False)
    fwd_twiddles_sh: np.ndarray = field(repr=False)
    inv_twiddles: np.ndarray = field(repr=False)
    inv_twiddles_sh: np.ndarray = field(repr=False)
    n_inv: np.ndarray = field(repr=False)
    n_inv_sh: np.ndarray = field(repr=False)
    delta_mod: np.ndarray = field(repr=False)
    # CRT reconstruction: q_i_star * (q_i_star^-1 mod m_i) mod q, per limb
    crt_coeffs: tuple[int, ...] = field(repr=False)

    @classmethod
    def create(cls, n: int, limb_values: list[int], t: int) -> "RingContext":
        if n < 2 or n & (n - 1):
            raise ParameterError("ring degree n must be a power of two >= 2")
        if len(set(limb_values)) != len(limb_values):
            raise ParameterError("limb moduli must be pairwise distinct")
        if t < 2:
            raise ParameterError("plaintext modulus t must be >= 2")
        limbs = tuple(Modulus.create(v, n) for v in limb_values)
        q = math.prod(limb_values)
        budget = SECURITY_BUDGET_BITS.get(n)
        if budget is not None and math.log2(q) > budget:
            raise ParameterError(
                f"log2(q) = {math.log2(q):.2f} exceeds the {budget}-bit security budget for n={n}"
            )

        nlimb = len(limbs)
        logn = n.bit_length() - 1
        fwd = np.empty((nlimb, n), dtype=np.uint64)
        fwd_sh = np.empty((nlimb, n), dtype=np.uint64)
        inv = np.empty((nlimb, n), dtype=np.uint64)
        inv_sh = np.empty((nlimb, n), dtype=np.uint64)
        n_inv = np.empty(nlimb, dtype=np.uint64)
        n_inv_sh = np.empty(nlimb, dtype=np.uint64)
        for li, limb in enumerate(limbs):
            m = limb.value
            psi = limb.two_n_root
            ipsi = pow(psi, -1, m)
            for i in range(n):
                e = _bit_reverse(i, logn)
                w = pow(psi, e, m)
                iw = pow(ipsi, e, m)
                fwd[li, i] = w
                fwd_sh[li, i] = (w << 64) // m
                inv[li, i] = iw
                inv_sh[li, i] = (iw << 64) // m
            ni = pow(n, -1, m)
            n_inv[li] = ni
            n_inv_sh[li] = (ni << 64) // m

        delta = q // t
        crt = []
        for limb in limbs:
            star = q // limb.value
            crt.append(star * pow(star, -1, limb.value) % q)

        return cls(
            n=n,
            limbs=limbs,
            q=q,
            t=t,
            delta=delta,
            mods=np.array([l.value for l in limbs], dtype=np.uint64),
            barrett_mus=np.array([l.barrett_hi for l in limbs], dtype=np.uint64),
            barrett_ks=np.array([l.shift for l in limbs], dtype=np.int64),
            fwd_twiddles=fwd,
            fwd_twiddles_sh=fwd_sh,
            inv_twiddles=inv,
            inv_twiddles_sh=inv_sh,
            n_inv=n_inv,
            n_inv_sh=n_inv_sh,
            delta_mod=np.array([delta % l.value for l in limbs], dtype=np.uint64),
            crt_coeffs=tuple(crt),
        )

    @classmethod
    def default(cls) -> "RingContext":
        return default_context()

    @property
    def nlimb(self) -> int:
        return len(self.limbs)


_DEFAULT_CONTEXT = None


def default_context(n: int = DEFAULT_N, limb_count: int = 2, limb_bits: int = DEFAULT_LIMB_BITS,
                    t: int = DEFAULT_T) -> RingContext:
    """Context with the default parameters: n=4096, two 54-bit limbs, t=2281701377.

    Limbs are the smallest primes above 2^limb_bits congruent to 1 mod 2n,
    which keeps log2(q) ~ 108 within the 109-bit budget for n=4096.
    """
    global _DEFAULT_CONTEXT
    defaults = (n == DEFAULT_N and limb_count == 2 and limb_bits == DEFAULT_LIMB_BITS and t == DEFAULT_T)
    if defaults and _DEFAULT_CONTEXT is not None:
        return _DEFAULT_CONTEXT
    values = []
    above = 0
    for _ in range(limb_count):
        p = find_ntt_prime(limb_bits, n, above=above)
        values.append(p)
        above = p
    ctx = RingContext.create(n, values, t)
    if defaults:
        _DEFAULT_CONTEXT = ctx
    return ctx


@dataclass
class Polynomial:
    """Element of R_q as per-limb residue rows, tagged with its domain."""

    ctx: RingContext
    domain: Domain
    residues: np.ndarray  # uint64, shape (nlimb, n)

    def __post_init__(self):
        assert self.residues.shape == (self.ctx.nlimb, self.ctx.n)
        assert self.residues.dtype == np.uint64

    def copy(self) -> "Polynomial":
        return Polynomial(self.ctx, self.domain, self.residues.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.ctx is other.ctx
            and self.domain is other.domain
            and np.array_equal(self.residues, other.residues)
        )


def zero_poly(ctx: RingContext, domain: Domain = Domain.COEFF) -> Polynomial:
    return Polynomial(ctx, domain, np.zeros((ctx.nlimb, ctx.n), dtype=np.uint64))


def poly_from_coeffs(ctx: RingContext, coeffs, domain: Domain = Domain.COEFF) -> Polynomial:
    """Polynomial from integer coefficients (taken mod q, reduced per limb)."""
    res = np.empty((ctx.nlimb, ctx.n), dtype=np.uint64)
    vals = [int(c) % ctx.q for c in coeffs]
    if len(vals) != ctx.n:
        raise ParameterError(f"expected {ctx.n} coefficients, got {len(vals)}")
    for li, limb in enumerate(ctx.limbs):
        m = limb.value
        res[li] = [v % m for v in vals]
    return Polynomial(ctx, domain, res)


def _require_domain(p: Polynomial, domain: Domain, op: str):
    if p.domain is not domain:
        raise DomainMismatchError(f"{op} requires {domain.value}-domain input, got {p.domain.value}")


def _require_same(a: Polynomial, b: Polynomial, op: str):
    if a.ctx is not b.ctx:
        raise ContextMismatchError(f"{op}: operands from different ring contexts")
    if a.domain is not b.domain:
        raise DomainMismatchError(f"{op}: operands in different domains")


def ntt_forward(p: Polynomial) -> Polynomial:
    """Negacyclic NTT per limb (coefficient -> evaluation domain)."""
    _require_domain(p, Domain.COEFF, "ntt_forward")
    ctx = p.ctx
    res = p.residues.copy()
    kernels.ntt_forward_inplace(res, ctx.fwd_twiddles, ctx.fwd_twiddles_sh, ctx.mods)
    return Polynomial(ctx, Domain.NTT, res)


def ntt_inverse(p: Polynomial) -> Polynomial:
    """Exact inverse of ntt_forward (evaluation -> coefficient domain)."""
    _require_domain(p, Domain.NTT, "ntt_inverse")
    ctx = p.ctx
    res = p.residues.copy()
    kernels.ntt_inverse_inplace(res, ctx.inv_twiddles, ctx.inv_twiddles_sh,
                                ctx.n_inv, ctx.n_inv_sh, ctx.mods)
    return Polynomial(ctx, Domain.COEFF, res)


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    """Coefficient-wise modular sum; domain preserved."""
    _require_same(a, b, "poly_add")
    return Polynomial(a.ctx, a.domain, kernels.add_mod(a.residues, b.residues, a.ctx.mods))


def poly_neg(a: Polynomial) -> Polynomial:
    return Polynomial(a.ctx, a.domain, kernels.neg_mod(a.residues, a.ctx.mods))


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    """Pointwise product in the NTT domain (= negacyclic convolution)."""
    _require_same(a, b, "poly_mul")
    _require_domain(a, Domain.NTT, "poly_mul")
    out = kernels.pointwise_mul(a.residues, b.residues, a.ctx.mods,
                                a.ctx.barrett_mus, a.ctx.barrett_ks)
    return Polynomial(a.ctx, Domain.NTT, out)


def poly_scalar_mul(p: Polynomial, k: int) -> Polynomial:
    """Multiply every coefficient by the integer k (reduced per limb)."""
    ctx = p.ctx
    reduced = [int(k) % limb.value for limb in ctx.limbs]
    scalars = np.array(reduced, dtype=np.uint64)
    shoup = np.array(
        [(s << 64) // limb.value for s, limb in zip(reduced, ctx.limbs)], dtype=np.uint64
    )
    return Polynomial(ctx, p.domain, kernels.scalar_mul(p.residues, scalars, shoup, ctx.mods))


def crt_reconstruct(p: Polynomial) -> list[int]:
    """Unique x in [0, q) per coefficient with x = residue (mod each limb)."""
    _require_domain(p, Domain.COEFF, "crt_reconstruct")
    ctx = p.ctx
    q = ctx.q
    rows = [row.tolist() for row in p.residues]
    coeffs = ctx.crt_coeffs
    if ctx.nlimb == 1:
        return rows[0]
    if ctx.nlimb == 2:
        g0, g1 = coeffs
        r0, r1 = rows
        return [(a * g0 + b * g1) % q for a, b in zip(r0, r1)]
    out = []
    for j in range(ctx.n):
        acc = 0
        for li in range(ctx.nlimb):
            acc += rows[li][j] * coeffs[li]
        out.append(acc % q)
    return out


def scale_round_mod_t(values: list[int], ctx: RingContext) -> list[int]:
    """Round t*v/q to the nearest integer, then reduce mod t.

    Implemented exactly as floor((t*v + floor(q/2)) / q) mod t; with q odd
    (a product of odd primes) no tie can occur, so the rounding rule's tie
    branch is unobservable.
    """
    q = ctx.q
    t = ctx.t
    half = q // 2
    return [((t * v + half) // q) % t for v in values]
