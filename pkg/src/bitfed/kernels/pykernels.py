"""Pure-Python kernel backend.

Reference implementation of the hot inner loops (negacyclic NTT butterflies,
pointwise modular arithmetic, word reduction). Operates on the same
``uint64 (limbs, n)`` numpy arrays as the compiled backend and must produce
bit-identical results; the compiled backend is tested against this one.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def ntt_forward_inplace(res, psis, psis_sh, mods):
    """Cooley-Tukey forward negacyclic NTT, one pass per limb, in place.

    ``psis`` holds bit-reversed powers of the 2n-th root of unity;
    ``psis_sh`` (Shoup companions) is unused here but kept for API parity.
    """
    n = res.shape[1]
    for li in range(res.shape[0]):
        m = int(mods[li])
        a = [int(x) for x in res[li]]
        tw = [int(x) for x in psis[li]]
        t = n
        size = 1
        while size < n:
            t //= 2
            for i in range(size):
                j1 = 2 * i * t
                s = tw[size + i]
                for j in range(j1, j1 + t):
                    u = a[j]
                    v = a[j + t] * s % m
                    a[j] = (u + v) % m
                    a[j + t] = (u - v) % m
            size *= 2
        res[li] = a


def ntt_inverse_inplace(res, ipsis, ipsis_sh, n_invs, n_invs_sh, mods):
    """Gentleman-Sande inverse negacyclic NTT, in place (inverse of forward)."""
    n = res.shape[1]
    for li in range(res.shape[0]):
        m = int(mods[li])
        a = [int(x) for x in res[li]]
        tw = [int(x) for x in ipsis[li]]
        ninv = int(n_invs[li])
        t = 1
        size = n
        while size > 1:
            j1 = 0
            h = size // 2
            for i in range(h):
                s = tw[h + i]
                for j in range(j1, j1 + t):
                    u = a[j]
                    v = a[j + t]
                    a[j] = (u + v) % m
                    a[j + t] = (u - v) * s % m
                j1 += 2 * t
            t *= 2
            size //= 2
        res[li] = [x * ninv % m for x in a]


def pointwise_mul(a, b, mods, mus, ks):
    out = np.empty_like(a)
    for li in range(a.shape[0]):
        m = int(mods[li])
        out[li] = [int(x) * int(y) % m for x, y in zip(a[li], b[li])]
    return out


def add_mod(a, b, mods):
    out = np.empty_like(a)
    for li in range(a.shape[0]):
        m = int(mods[li])
        out[li] = [(int(x) + int(y)) % m for x, y in zip(a[li], b[li])]
    return out


def neg_mod(a, mods):
    out = np.empty_like(a)
    for li in range(a.shape[0]):
        m = int(mods[li])
        out[li] = [(m - int(x)) % m for x in a[li]]
    return out


def scalar_mul(a, scalars, scalars_sh, mods):
    # scalars_sh (Shoup constants) are only needed by the compiled backend;
    # accepted here so the two backends share a call signature
    out = np.empty_like(a)
    for li in range(a.shape[0]):
        m = int(mods[li])
        s = int(scalars[li]) % m
        out[li] = [int(x) * s % m for x in a[li]]
    return out


def reduce_2words(hi, lo, mod):
    """Residues of ``hi*2^64 + lo`` mod a single limb modulus."""
    m = int(mod)
    return np.array(
        [((int(h) << 64) | int(l)) % m for h, l in zip(hi, lo)], dtype=np.uint64
    )
