"""Bit-interleaved packing of quantized weights into plaintext coefficients.

Each coefficient holds m fields of width beta + delta: beta bits carry one
quantized weight, delta guard bits absorb carries when up to `max_clients`
ciphertexts are summed. Weight w_{(i*n + j)*m + k} of a layer lands in slot k
of coefficient j of polynomial i, so a layer with r weights needs
ceil(r / (m*n)) polynomials.

Two bounds make the layout sound and are re-derivable via validate_layout:

  carry bound:    max_clients * (2^beta - 1) < 2^(beta + delta)
  modulus bound:  max_clients * max_packed_value(beta, delta, m) < t

The first keeps every per-slot sum inside its field; the second keeps the
whole packed coefficient sum below t so nothing wraps mod t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bfv import PlaintextPoly
from .errors import InfeasibleLayoutError, IntegrityError, ParameterError, WeightRangeError
from .ring import RingContext


def field_width(beta: int, delta: int) -> int:
    return beta + delta


def max_packed_value(beta: int, delta: int, slots: int) -> int:
    """Largest coefficient a single packed plaintext can hold: all slots full."""
    w = field_width(beta, delta)
    return (2**beta - 1) * sum(2 ** (k * w) for k in range(slots))


def carry_bound_ok(beta: int, delta: int, max_clients: int) -> bool:
    return max_clients * (2**beta - 1) < 2 ** field_width(beta, delta)


def max_slots(beta: int, delta: int, max_clients: int, t: int) -> int:
    """Most fields per coefficient such that a max_clients-way sum cannot wrap."""
    if beta < 1 or delta < 0 or max_clients < 1:
        raise ParameterError("beta >= 1, delta >= 0, max_clients >= 1 required")
    if not carry_bound_ok(beta, delta, max_clients):
        raise InfeasibleLayoutError(
            f"{max_clients} * (2^{beta} - 1) >= 2^{beta + delta}: guard bits too "
            "narrow for that many summands at any slot count"
        )
    m = 0
    while max_clients * max_packed_value(beta, delta, m + 1) < t:
        m += 1
    if m == 0:
        raise InfeasibleLayoutError(
            f"even one {beta}+{delta}-bit field overflows t={t} "
            f"with {max_clients} summands"
        )
    return m


@dataclass(frozen=True)
class FieldLayout:
    beta: int
    slots: int
    delta: int
    max_clients: int
    ring_degree: int
    plaintext_modulus: int

    @property
    def width(self) -> int:
        return field_width(self.beta, self.delta)

    @property
    def weights_per_poly(self) -> int:
        return self.slots * self.ring_degree

    def polys_for(self, weight_count: int) -> int:
        if weight_count < 0:
            raise ParameterError("weight_count must be non-negative")
        return -(-weight_count // self.weights_per_poly)


def make_layout(
    beta: int,
    delta: int,
    max_clients: int,
    ctx: RingContext,
    slots: int | None = None,
) -> FieldLayout:
    best = max_slots(beta, delta, max_clients, ctx.t)
    if slots is None:
        slots = best
    elif not 1 <= slots <= best:
        raise InfeasibleLayoutError(f"slots={slots} outside feasible range [1, {best}]")
    return FieldLayout(
        beta=beta,
        slots=slots,
        delta=delta,
        max_clients=max_clients,
        ring_degree=ctx.n,
        plaintext_modulus=ctx.t,
    )


@dataclass(frozen=True)
class BoundViolation:
    name: str
    lhs: int
    bound: int

    def __str__(self):
        return f"{self.name}: {self.lhs} not < {self.bound}"


@dataclass(frozen=True)
class LayoutCheck:
    ok: bool
    violations: tuple[BoundViolation, ...]


def validate_layout(layout: FieldLayout) -> LayoutCheck:
    """Recheck both soundness bounds from first principles."""
    out = []
    u = layout.max_clients
    if layout.slots < 1:
        out.append(BoundViolation("slot count", 0, 1))
    if not carry_bound_ok(layout.beta, layout.delta, u):
        out.append(
            BoundViolation("carry bound", u * (2**layout.beta - 1), 2**layout.width)
        )
    packed_max = u * max_packed_value(layout.beta, layout.delta, layout.slots)
    if packed_max >= layout.plaintext_modulus:
        out.append(BoundViolation("modulus bound", packed_max, layout.plaintext_modulus))
    return LayoutCheck(ok=not out, violations=tuple(out))


@dataclass(frozen=True)
class QuantParams:
    """Affine range for one layer; lo/hi come from the previous global model."""

    lo: float
    hi: float
    beta: int

    @property
    def levels(self) -> int:
        return 2**self.beta - 1


def quantize_layer(weights: np.ndarray, params: QuantParams) -> np.ndarray:
    """Map floats to [0, 2^beta - 1] with round-half-up; out-of-range clamps."""
    w = np.asarray(weights, dtype=np.float64)
    if params.hi <= params.lo:
        return np.zeros(w.shape, dtype=np.uint64)
    x = (w - params.lo) / (params.hi - params.lo) * params.levels
    q = np.floor(x + 0.5)
    return np.clip(q, 0, params.levels).astype(np.uint64)


def dequantize_layer(values: np.ndarray, params: QuantParams) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if params.hi <= params.lo:
        return np.full(v.shape, params.lo, dtype=np.float64)
    return params.lo + (params.hi - params.lo) * v / params.levels


@dataclass
class PackedLayer:
    polys: list[PlaintextPoly]
    layout: FieldLayout
    weight_count: int


def pack_layer(values: np.ndarray, layout: FieldLayout) -> PackedLayer:
    """Interleave beta-bit values into coefficients, slot k at bit k*(beta+delta)."""
    v = np.asarray(values, dtype=np.uint64).ravel()
    if v.size and int(v.max()) >= 2**layout.beta:
        bad = int(np.argmax(v >= np.uint64(2**layout.beta)))
        raise WeightRangeError(
            f"value {int(v[bad])} at index {bad} does not fit in {layout.beta} bits"
        )
    n, m = layout.ring_degree, layout.slots
    count = layout.polys_for(v.size)
    padded = np.zeros(count * n * m, dtype=np.uint64)
    padded[: v.size] = v
    grid = padded.reshape(count, n, m)
    polys = []
    for i in range(count):
        coeffs = np.zeros(n, dtype=np.uint64)
        for k in range(m):
            coeffs |= grid[i, :, k] << np.uint64(k * layout.width)
        polys.append(PlaintextPoly(coeffs))
    return PackedLayer(polys=polys, layout=layout, weight_count=v.size)


def unpack_layer(packed: PackedLayer, expected_count: int | None = None) -> np.ndarray:
    """Split coefficients back into per-slot sums; inverse of pack for one client."""
    layout = packed.layout
    n, m, w = layout.ring_degree, layout.slots, layout.width
    mask = np.uint64(2**w - 1)
    count = packed.weight_count if expected_count is None else expected_count
    need = layout.polys_for(count)
    if len(packed.polys) != need:
        raise IntegrityError(
            f"{count} weights need {need} polynomials, got {len(packed.polys)}"
        )
    out = np.empty((len(packed.polys), n, m), dtype=np.uint64)
    for i, poly in enumerate(packed.polys):
        c = poly.coeffs
        if c.size and int(c.max()) >= layout.plaintext_modulus:
            raise IntegrityError("packed coefficient at or above the plaintext modulus")
        for k in range(m):
            out[i, :, k] = (c >> np.uint64(k * w)) & mask
    flat = out.reshape(-1)
    tail = flat[count:]
    if tail.size and int(tail.max()) != 0:
        raise IntegrityError("non-zero padding slots after the last weight")
    return flat[:count]


def average_unpacked(sums: np.ndarray, participants: int) -> np.ndarray:
    """Round-to-nearest integer mean of per-slot sums (ties away from zero)."""
    if participants < 1:
        raise ParameterError("participants must be >= 1")
    s = np.asarray(sums, dtype=np.uint64)
    u = np.uint64(participants)
    return (s + np.uint64(participants // 2)) // u
