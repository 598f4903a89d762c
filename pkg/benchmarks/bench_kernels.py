"""Compare the compiled kernel backend against the pure-Python fallback.

Times the raw kernels (NTT passes, pointwise ops) and the full
encrypt/decrypt/aggregate path at ring dimension n with the default two-limb
modulus. Run from the repository root::

    python benchmarks/bench_kernels.py [--n 4096] [--json out.json]
"""

import argparse
import itertools
import json
import time
from contextlib import contextmanager

import numpy as np

from bitfed import kernels
from bitfed.bfv import PlaintextPoly, add_ciphertexts, decrypt, encrypt, keygen, prepare_mask
from bitfed.ring import default_context
from bitfed.sampling import derive_seed, seed_from_int

_KERNEL_FNS = (
    "ntt_forward_inplace",
    "ntt_inverse_inplace",
    "pointwise_mul",
    "add_mod",
    "neg_mod",
    "scalar_mul",
    "reduce_2words",
)


@contextmanager
def use_backend(impl):
    # ring.py resolves kernels.<fn> at call time, so rebinding the module
    # attributes switches the whole stack for the duration of a measurement.
    saved = {name: getattr(kernels, name) for name in _KERNEL_FNS}
    for name in _KERNEL_FNS:
        setattr(kernels, name, getattr(impl, name))
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def bench(fn, target_s=0.3, max_reps=2000):
    """Mean seconds per call, rep count sized from one warmup call."""
    fn()
    t0 = time.perf_counter()
    fn()
    once = time.perf_counter() - t0
    reps = max(1, min(max_reps, int(target_s / max(once, 1e-9))))
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def kernel_ops(impl, ctx, rng):
    mods = [l.value for l in ctx.limbs]
    a = np.empty((len(mods), ctx.n), dtype=np.uint64)
    b = np.empty_like(a)
    for li, m in enumerate(mods):
        a[li] = rng.integers(0, m, ctx.n, dtype=np.uint64)
        b[li] = rng.integers(0, m, ctx.n, dtype=np.uint64)
    buf = a.copy()
    return {
        "ntt_forward": lambda: impl.ntt_forward_inplace(
            buf, ctx.fwd_twiddles, ctx.fwd_twiddles_sh, ctx.mods
        ),
        "ntt_inverse": lambda: impl.ntt_inverse_inplace(
            buf, ctx.inv_twiddles, ctx.inv_twiddles_sh, ctx.n_inv, ctx.n_inv_sh, ctx.mods
        ),
        "pointwise_mul": lambda: impl.pointwise_mul(
            a, b, ctx.mods, ctx.barrett_mus, ctx.barrett_ks
        ),
        "add_mod": lambda: impl.add_mod(a, b, ctx.mods),
    }


def bfv_ops(ctx, rng):
    sk = keygen(seed_from_int(1), ctx)
    root = seed_from_int(2)
    counter = itertools.count()
    msg = PlaintextPoly.create(rng.integers(0, ctx.t, ctx.n, dtype=np.int64), ctx)

    def fresh_ct(tag=0):
        return encrypt(msg, prepare_mask(sk, derive_seed(root, "b", next(counter)), ctx),
                       ctx, round_tag=tag)

    ct = fresh_ct()
    five = [fresh_ct(1) for _ in range(5)]
    return {
        "encrypt": fresh_ct,
        "decrypt": lambda: decrypt(ct, sk, ctx),
        "aggregate 5": lambda: add_ciphertexts(five),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4096, help="ring dimension (default 4096)")
    ap.add_argument("--target", type=float, default=0.3,
                    help="seconds of repetitions per measurement")
    ap.add_argument("--json", metavar="PATH", help="also dump results as JSON")
    args = ap.parse_args(argv)

    ctx = default_context()
    if args.n != ctx.n:
        from bitfed.ring import SECURITY_BUDGET_BITS, RingContext, find_ntt_prime

        bits = min(54, SECURITY_BUDGET_BITS.get(args.n, 54) - 1)
        ctx = RingContext.create(args.n, [find_ntt_prime(bits, args.n)], 257)

    backends = {}
    try:
        backends["compiled"] = kernels.get_backend("compiled")
    except ImportError:
        print("note: compiled extension not built; timing the pure backend only\n")
    backends["pure"] = kernels.get_backend("pure")

    rng = np.random.default_rng(0)
    results: dict[str, dict[str, float]] = {}
    for name, impl in backends.items():
        for op, fn in kernel_ops(impl, ctx, rng).items():
            results.setdefault(op, {})[name] = bench(fn, args.target)
        with use_backend(impl):
            for op, fn in bfv_ops(ctx, rng).items():
                results.setdefault(op, {})[name] = bench(fn, args.target)

    cols = list(backends)
    header = f"{'op':<16}" + "".join(f"{c:>14}" for c in cols)
    if len(cols) == 2:
        header += f"{'speedup':>10}"
    print(f"n={ctx.n}, limbs={len(ctx.limbs)}, active backend: {kernels.BACKEND}")
    print(header)
    for op, times in results.items():
        line = f"{op:<16}" + "".join(f"{times[c] * 1e3:>11.3f} ms" for c in cols)
        if len(cols) == 2:
            line += f"{times['pure'] / times['compiled']:>9.1f}x"
        print(line)

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"n": ctx.n, "limbs": len(ctx.limbs), "seconds": results}, fh, indent=2)
        print(f"\nwrote {args.json}")


if __name__ == "__main__":
    main()
