"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to the pure-Python
reference kernels when the extension is unavailable. Set BITFED_KERNELS=pure
to force the fallback (used by the backend-parity tests and the benchmark).
"""

import os

if os.environ.get("BITFED_KERNELS", "").lower() == "pure":
    from . import pykernels as _impl
else:
    try:
        from . import _cykernels as _impl
    except ImportError:
        from . import pykernels as _impl

BACKEND = _impl.BACKEND

ntt_forward_inplace = _impl.ntt_forward_inplace
ntt_inverse_inplace = _impl.ntt_inverse_inplace
pointwise_mul = _impl.pointwise_mul
add_mod = _impl.add_mod
neg_mod = _impl.neg_mod
scalar_mul = _impl.scalar_mul
reduce_2words = _impl.reduce_2words


def get_backend(name=None):
    """Return a kernel module by name ("compiled", "pure", or None for active)."""
    if name is None:
        return _impl
    if name == "pure":
        from . import pykernels

        return pykernels
    if name == "compiled":
        from . import _cykernels

        return _cykernels
    raise ValueError(f"unknown kernel backend: {name!r}")
