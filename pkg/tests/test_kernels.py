"""Backend parity: the compiled kernels must agree bit-for-bit with the pure
Python reference on every exported function, including edge values near the
modulus."""

import subprocess
import sys

import numpy as np
import pytest

from bitfed import kernels

P54A = 18014398509506561
P54B = 18014398509998081


def _backends():
    pure = kernels.get_backend("pure")
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        pytest.skip("compiled backend unavailable")
    return compiled, pure


def _rand_residues(rng, mods, n):
    res = np.empty((len(mods), n), dtype=np.uint64)
    for li, m in enumerate(mods):
        res[li] = rng.integers(0, m, n, dtype=np.uint64)
    return res


def test_backend_is_compiled_by_default():
    assert kernels.BACKEND == "compiled"


def test_add_neg_scalar_parity(rng):
    compiled, pure = _backends()
    mods_list = [P54A, P54B]
    mods = np.array(mods_list, dtype=np.uint64)
    a = _rand_residues(rng, mods_list, 64)
    b = _rand_residues(rng, mods_list, 64)
    assert np.array_equal(compiled.add_mod(a, b, mods), pure.add_mod(a, b, mods))
    assert np.array_equal(compiled.neg_mod(a, mods), pure.neg_mod(a, mods))

    scalars = np.array([m - 1 for m in mods_list], dtype=np.uint64)
    shoup = np.array([((m - 1) << 64) // m for m in mods_list], dtype=np.uint64)
    got = compiled.scalar_mul(a, scalars, shoup, mods)
    want = pure.scalar_mul(a, scalars, shoup, mods)
    assert np.array_equal(got, want)


def test_scalar_mul_large_scalar_matches_bigint(rng):
    compiled, _ = _backends()
    mods_list = [P54A, P54B]
    mods = np.array(mods_list, dtype=np.uint64)
    a = _rand_residues(rng, mods_list, 32)
    k = 113427455640312821154458202477256070485  # wider than any limb
    scalars = np.array([k % m for m in mods_list], dtype=np.uint64)
    shoup = np.array([((k % m) << 64) // m for m in mods_list], dtype=np.uint64)
    got = compiled.scalar_mul(a, scalars, shoup, mods)
    for li, m in enumerate(mods_list):
        want = [(int(x) * (k % m)) % m for x in a[li]]
        assert got[li].tolist() == want


def test_pointwise_mul_parity_and_bigint(rng):
    compiled, pure = _backends()
    from bitfed.ring import default_context

    ctx = default_context()
    a = _rand_residues(rng, [l.value for l in ctx.limbs], 128)
    b = _rand_residues(rng, [l.value for l in ctx.limbs], 128)
    got = compiled.pointwise_mul(a, b, ctx.mods, ctx.barrett_mus, ctx.barrett_ks)
    want = pure.pointwise_mul(a, b, ctx.mods, ctx.barrett_mus, ctx.barrett_ks)
    assert np.array_equal(got, want)
    for li, limb in enumerate(ctx.limbs):
        m = limb.value
        ref = [(int(x) * int(y)) % m for x, y in zip(a[li], b[li])]
        assert got[li].tolist() == ref


def test_pointwise_mul_edge_values():
    compiled, _ = _backends()
    from bitfed.ring import default_context

    ctx = default_context()
    edges = []
    for limb in ctx.limbs:
        m = limb.value
        edges.append([m - 1, m - 1, 1, 0, m // 2, m - 2])
    a = np.array(edges, dtype=np.uint64)
    b = np.array([[m - 1, 1, m - 1, m - 1, 2, m - 2] for m in (l.value for l in ctx.limbs)],
                 dtype=np.uint64)
    got = compiled.pointwise_mul(a, b, ctx.mods, ctx.barrett_mus, ctx.barrett_ks)
    for li, limb in enumerate(ctx.limbs):
        m = limb.value
        ref = [(int(x) * int(y)) % m for x, y in zip(a[li], b[li])]
        assert got[li].tolist() == ref


def test_ntt_parity(rng):
    compiled, pure = _backends()
    from bitfed.ring import default_context

    ctx = default_context()
    res = _rand_residues(rng, [l.value for l in ctx.limbs], ctx.n)
    a = res.copy()
    b = res.copy()
    compiled.ntt_forward_inplace(a, ctx.fwd_twiddles, ctx.fwd_twiddles_sh, ctx.mods)
    pure.ntt_forward_inplace(b, ctx.fwd_twiddles, ctx.fwd_twiddles_sh, ctx.mods)
    assert np.array_equal(a, b)
    compiled.ntt_inverse_inplace(a, ctx.inv_twiddles, ctx.inv_twiddles_sh,
                                 ctx.n_inv, ctx.n_inv_sh, ctx.mods)
    pure.ntt_inverse_inplace(b, ctx.inv_twiddles, ctx.inv_twiddles_sh,
                             ctx.n_inv, ctx.n_inv_sh, ctx.mods)
    assert np.array_equal(a, b)
    assert np.array_equal(a, res)


def test_reduce_2words_matches_bigint(rng):
    compiled, pure = _backends()
    hi = rng.integers(0, 1 << 45, 64, dtype=np.uint64)
    lo = rng.integers(0, 1 << 64, 64, dtype=np.uint64)
    for m in (P54A, P54B, 65537):
        want = [((int(h) << 64) | int(l)) % m for h, l in zip(hi, lo)]
        assert compiled.reduce_2words(hi, lo, np.uint64(m)).tolist() == want
        assert pure.reduce_2words(hi, lo, np.uint64(m)).tolist() == want


def test_pure_backend_env_override():
    code = (
        "import os; os.environ['BITFED_KERNELS']='pure'; "
        "import bitfed.kernels as k; print(k.BACKEND)"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "pure"


def test_full_stack_on_pure_backend():
    """A miniature encrypt/aggregate/decrypt run forced onto the fallback."""
    code = """
import os
os.environ['BITFED_KERNELS'] = 'pure'
import numpy as np
from bitfed import bfv, sampling
from bitfed.ring import RingContext
import bitfed.kernels as k
assert k.BACKEND == 'pure'
ctx = RingContext.create(64, [65537], 257)
sk = bfv.keygen(sampling.seed_from_int(1), ctx)
rng = np.random.default_rng(0)
msgs, cts = [], []
for i in range(3):
    m = bfv.PlaintextPoly.create(rng.integers(0, 257, 64, dtype=np.uint64), ctx)
    mask = bfv.prepare_mask(sk, sampling.seed_from_int(10 + i), ctx)
    cts.append(bfv.encrypt(m, mask, ctx))
    msgs.append(m.coeffs.astype(int))
got = bfv.decrypt(bfv.add_ciphertexts(cts), sk, ctx).coeffs.astype(int)
want = (msgs[0] + msgs[1] + msgs[2]) % 257
assert np.array_equal(got, want)
print('ok')
"""
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "ok"
