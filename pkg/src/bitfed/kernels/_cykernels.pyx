# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Hot loops for the negacyclic NTT and coefficient-wise modular arithmetic on
uint64 RNS residue arrays. Limb moduli are below 2^55, so products fit in
128-bit intermediates; twiddle multiplications use Shoup precomputation and
variable-variable products use Barrett reduction.
"""

import numpy as np

BACKEND = "compiled"

ctypedef unsigned long long u64

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"


cdef inline u64 mulmod_shoup(u64 x, u64 w, u64 w_sh, u64 m) nogil:
    # w_sh = floor(w * 2^64 / m); valid for m < 2^63.
    cdef u64 q = <u64>((<u128>x * w_sh) >> 64)
    cdef u64 r = x * w - q * m
    if r >= m:
        r -= m
    return r


cdef inline u64 mulmod_barrett(u64 a, u64 b, u64 m, u64 mu, int k) nogil:
    # mu = floor(4^k / m) with k = bit_length(m); requires a, b < m.
    cdef u128 x = <u128>a * b
    cdef u128 qhat = ((x >> (k - 1)) * mu) >> (k + 1)
    cdef u64 r = <u64>(x - qhat * m)
    while r >= m:
        r -= m
    return r


def ntt_forward_inplace(u64[:, ::1] res, u64[:, ::1] psis, u64[:, ::1] psis_sh,
                        u64[::1] mods):
    cdef Py_ssize_t nlimb = res.shape[0]
    cdef Py_ssize_t n = res.shape[1]
    cdef Py_ssize_t li, i, j, j1, t, size
    cdef u64 m, s, s_sh, u, v
    with nogil:
        for li in range(nlimb):
            m = mods[li]
            t = n
            size = 1
            while size < n:
                t >>= 1
                for i in range(size):
                    j1 = 2 * i * t
                    s = psis[li, size + i]
                    s_sh = psis_sh[li, size + i]
                    for j in range(j1, j1 + t):
                        u = res[li, j]
                        v = mulmod_shoup(res[li, j + t], s, s_sh, m)
                        res[li, j] = u + v if u + v < m else u + v - m
                        res[li, j + t] = u - v if u >= v else u + m - v
                size <<= 1


def ntt_inverse_inplace(u64[:, ::1] res, u64[:, ::1] ipsis, u64[:, ::1] ipsis_sh,
                        u64[::1] n_invs, u64[::1] n_invs_sh, u64[::1] mods):
    cdef Py_ssize_t nlimb = res.shape[0]
    cdef Py_ssize_t n = res.shape[1]
    cdef Py_ssize_t li, i, j, j1, t, size, h
    cdef u64 m, s, s_sh, u, v, ninv, ninv_sh
    with nogil:
        for li in range(nlimb):
            m = mods[li]
            ninv = n_invs[li]
            ninv_sh = n_invs_sh[li]
            t = 1
            size = n
            while size > 1:
                j1 = 0
                h = size >> 1
                for i in range(h):
                    s = ipsis[li, h + i]
                    s_sh = ipsis_sh[li, h + i]
                    for j in range(j1, j1 + t):
                        u = res[li, j]
                        v = res[li, j + t]
                        res[li, j] = u + v if u + v < m else u + v - m
                        res[li, j + t] = mulmod_shoup(u - v if u >= v else u + m - v,
                                                      s, s_sh, m)
                    j1 += 2 * t
                t <<= 1
                size >>= 1
            for j in range(n):
                res[li, j] = mulmod_shoup(res[li, j], ninv, ninv_sh, m)


def pointwise_mul(a_arr, b_arr, mods_arr, mus_arr, ks_arr):
    out_arr = np.empty_like(a_arr)
    cdef u64[:, ::1] a = a_arr
    cdef u64[:, ::1] b = b_arr
    cdef u64[:, ::1] out = out_arr
    cdef u64[::1] mods = mods_arr
    cdef u64[::1] mus = mus_arr
    cdef long[::1] ks = ks_arr
    cdef Py_ssize_t li, j, nlimb = a.shape[0], n = a.shape[1]
    cdef u64 m, mu
    cdef int k
    with nogil:
        for li in range(nlimb):
            m = mods[li]
            mu = mus[li]
            k = <int>ks[li]
            for j in range(n):
                out[li, j] = mulmod_barrett(a[li, j], b[li, j], m, mu, k)
    return out_arr


def add_mod(a_arr, b_arr, mods_arr):
    out_arr = np.empty_like(a_arr)
    cdef u64[:, ::1] a = a_arr
    cdef u64[:, ::1] b = b_arr
    cdef u64[:, ::1] out = out_arr
    cdef u64[::1] mods = mods_arr
    cdef Py_ssize_t li, j, nlimb = a.shape[0], n = a.shape[1]
    cdef u64 m, s
    with nogil:
        for li in range(nlimb):
            m = mods[li]
            for j in range(n):
                s = a[li, j] + b[li, j]
                out[li, j] = s - m if s >= m else s
    return out_arr


def neg_mod(a_arr, mods_arr):
    out_arr = np.empty_like(a_arr)
    cdef u64[:, ::1] a = a_arr
    cdef u64[:, ::1] out = out_arr
    cdef u64[::1] mods = mods_arr
    cdef Py_ssize_t li, j, nlimb = a.shape[0], n = a.shape[1]
    cdef u64 m
    with nogil:
        for li in range(nlimb):
            m = mods[li]
            for j in range(n):
                out[li, j] = m - a[li, j] if a[li, j] != 0 else 0
    return out_arr


def scalar_mul(a_arr, scalars_arr, scalars_sh_arr, mods_arr):
    out_arr = np.empty_like(a_arr)
    cdef u64[:, ::1] a = a_arr
    cdef u64[:, ::1] out = out_arr
    cdef u64[::1] scalars = scalars_arr
    cdef u64[::1] scalars_sh = scalars_sh_arr
    cdef u64[::1] mods = mods_arr
    cdef Py_ssize_t li, j, nlimb = a.shape[0], n = a.shape[1]
    cdef u64 m, s, s_sh
    with nogil:
        for li in range(nlimb):
            m = mods[li]
            s = scalars[li]
            s_sh = scalars_sh[li]
            for j in range(n):
                out[li, j] = mulmod_shoup(a[li, j], s, s_sh, m)
    return out_arr


def reduce_2words(hi_arr, lo_arr, mod):
    out_arr = np.empty_like(hi_arr)
    cdef u64[::1] hi = hi_arr
    cdef u64[::1] lo = lo_arr
    cdef u64[::1] out = out_arr
    cdef u64 m = mod
    cdef Py_ssize_t j, n = hi.shape[0]
    with nogil:
        for j in range(n):
            out[j] = <u64>((((<u128>hi[j]) << 64) | lo[j]) % m)
    return out_arr
