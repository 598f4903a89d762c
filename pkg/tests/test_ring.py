"""Ring arithmetic against brute-force oracles: NTT as direct evaluation,
inverse as interpolation, products as schoolbook negacyclic convolution,
CRT and decryption scaling in exact big-integer arithmetic."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from bitfed.errors import ContextMismatchError, DomainMismatchError, ParameterError
from bitfed.ring import (
    Domain,
    Modulus,
    Polynomial,
    RingContext,
    crt_reconstruct,
    default_context,
    find_ntt_prime,
    is_prime,
    mod_mul,
    ntt_forward,
    ntt_inverse,
    poly_add,
    poly_from_coeffs,
    poly_mul,
    poly_neg,
    poly_scalar_mul,
    scale_round_mod_t,
    zero_poly,
)

P = 65537


def coeff_poly(ctx, residues):
    return Polynomial(ctx, Domain.COEFF, residues)


class TestModulus:
    def test_rejects_composite(self):
        with pytest.raises(ParameterError):
            Modulus.create(65536, 8)

    def test_rejects_wrong_residue_class(self):
        # 13 is prime but 13 - 1 is not a multiple of 2n = 16
        with pytest.raises(ParameterError):
            Modulus.create(13, 8)

    def test_two_n_root_has_order_2n(self):
        m = Modulus.create(P, 8)
        assert pow(m.two_n_root, 16, P) == 1
        assert pow(m.two_n_root, 8, P) == P - 1

    def test_mod_mul_identities(self):
        m = Modulus.create(P, 8)
        assert mod_mul(0, 123, m) == 0
        assert mod_mul(1, 123, m) == 123
        assert mod_mul(P - 1, P - 1, m) == 1

    def test_mod_mul_random_against_bigint(self, rng):
        m = Modulus.create(18014398509506561, 4096)
        for _ in range(200):
            a = int(rng.integers(0, m.value))
            b = int(rng.integers(0, m.value))
            assert mod_mul(a, b, m) == a * b % m.value


class TestContext:
    def test_default_limbs_are_smallest_54bit_ntt_primes(self):
        ctx = default_context()
        values = [limb.value for limb in ctx.limbs]
        assert values == [18014398509506561, 18014398509998081]
        for v in values:
            assert is_prime(v) and v > 2**54 and (v - 1) % 8192 == 0
        # nothing smaller qualifies
        assert find_ntt_prime(54, 4096) == values[0]
        assert find_ntt_prime(54, 4096, above=values[0]) == values[1]

    def test_derived_quantities(self):
        ctx = default_context()
        assert ctx.q == 18014398509506561 * 18014398509998081
        assert ctx.t == 2281701377
        assert is_prime(ctx.t)
        assert ctx.delta == ctx.q // ctx.t
        assert math.log2(ctx.q) <= 109

    def test_default_context_is_cached(self):
        assert default_context() is default_context()

    def test_security_budget_enforced(self):
        # a third 54-bit limb pushes log2(q) past the 109-bit cap for n=4096
        p3 = find_ntt_prime(54, 4096, above=18014398509998081)
        with pytest.raises(ParameterError):
            RingContext.create(4096, [18014398509506561, 18014398509998081, p3], 2281701377)

    def test_duplicate_limbs_rejected(self):
        with pytest.raises(ParameterError):
            RingContext.create(8, [P, P], 17)

    def test_non_power_of_two_degree_rejected(self):
        with pytest.raises(ParameterError):
            RingContext.create(12, [P], 17)


class TestNtt:
    def test_constant_one_maps_to_all_ones(self, ctx8):
        out = ntt_forward(poly_from_coeffs(ctx8, [1] + [0] * 7))
        assert out.domain is Domain.NTT
        assert np.all(out.residues == 1)

    def test_zero_maps_to_zero(self, ctx8):
        assert np.all(ntt_forward(zero_poly(ctx8)).residues == 0)

    def test_matches_evaluation_oracle(self, ctx8, rng):
        psi = ctx8.limbs[0].two_n_root
        for _ in range(50):
            coeffs = [int(v) for v in rng.integers(0, P, 8)]
            got = ntt_forward(poly_from_coeffs(ctx8, coeffs)).residues[0].tolist()
            assert got == oracles.ntt_by_evaluation(coeffs, psi, P, 8)

    def test_inverse_matches_interpolation_oracle(self, ctx8, rng):
        psi = ctx8.limbs[0].two_n_root
        for _ in range(20):
            values = [int(v) for v in rng.integers(0, P, 8)]
            p = poly_from_coeffs(ctx8, values, Domain.NTT)
            got = ntt_inverse(p).residues[0].tolist()
            assert got == oracles.intt_by_interpolation(values, psi, P, 8)

    def test_roundtrip_default_context(self, ctx, rng):
        for _ in range(100):
            res = np.stack(
                [rng.integers(0, limb.value, ctx.n, dtype=np.uint64) for limb in ctx.limbs]
            )
            back = ntt_inverse(ntt_forward(coeff_poly(ctx, res)))
            assert np.array_equal(back.residues, res)

    def test_domain_mismatch_rejected(self, ctx8):
        with pytest.raises(DomainMismatchError):
            ntt_inverse(zero_poly(ctx8))
        with pytest.raises(DomainMismatchError):
            ntt_forward(ntt_forward(zero_poly(ctx8)))


class TestPolyOps:
    def test_add_identity_and_negation(self, ctx8, rng):
        a = poly_from_coeffs(ctx8, [int(v) for v in rng.integers(0, P, 8)])
        assert poly_add(a, zero_poly(ctx8)) == a
        assert np.all(poly_add(a, poly_neg(a)).residues == 0)

    def test_add_matches_integer_addition(self, ctx8, rng):
        a = [int(v) for v in rng.integers(0, P, 8)]
        b = [int(v) for v in rng.integers(0, P, 8)]
        got = poly_add(poly_from_coeffs(ctx8, a), poly_from_coeffs(ctx8, b))
        assert got.residues[0].tolist() == [(x + y) % P for x, y in zip(a, b)]

    @given(seed=st.integers(0, 2**32 - 1))
    def test_mul_by_ntt_one_is_identity(self, ctx8, seed):
        rng = np.random.default_rng(seed)
        a = ntt_forward(poly_from_coeffs(ctx8, [int(v) for v in rng.integers(0, P, 8)]))
        one = ntt_forward(poly_from_coeffs(ctx8, [1] + [0] * 7))
        assert poly_mul(a, one) == a

    def test_x_times_x_power_n_minus_1_is_minus_one(self, ctx8):
        x = poly_from_coeffs(ctx8, [0, 1] + [0] * 6)
        xn1 = poly_from_coeffs(ctx8, [0] * 7 + [1])
        prod = ntt_inverse(poly_mul(ntt_forward(x), ntt_forward(xn1)))
        assert prod.residues[0].tolist() == [P - 1] + [0] * 7

    def test_mul_matches_schoolbook(self, ctx8, rng):
        for _ in range(100):
            a = [int(v) for v in rng.integers(0, P, 8)]
            b = [int(v) for v in rng.integers(0, P, 8)]
            got = ntt_inverse(
                poly_mul(ntt_forward(poly_from_coeffs(ctx8, a)),
                         ntt_forward(poly_from_coeffs(ctx8, b)))
            )
            assert got.residues[0].tolist() == oracles.negacyclic_convolution(a, b, P, 8)

    def test_mul_requires_ntt_domain(self, ctx8):
        with pytest.raises(DomainMismatchError):
            poly_mul(zero_poly(ctx8), zero_poly(ctx8))

    def test_scalar_mul_identities(self, ctx8, rng):
        a = poly_from_coeffs(ctx8, [int(v) for v in rng.integers(0, P, 8)])
        assert np.all(poly_scalar_mul(a, 0).residues == 0)
        assert poly_scalar_mul(a, 1) == a

    def test_scalar_mul_delta_reconstructs(self, ctx):
        m = poly_from_coeffs(ctx, [1] + [0] * (ctx.n - 1))
        got = crt_reconstruct(poly_scalar_mul(m, ctx.delta))
        assert got[0] == ctx.delta
        assert all(v == 0 for v in got[1:])

    def test_context_mismatch_rejected(self, ctx8, ctx16):
        with pytest.raises(ContextMismatchError):
            poly_add(zero_poly(ctx8), zero_poly(ctx16))


class TestCrtAndScaling:
    def test_crt_small_value_everywhere(self, ctx):
        p = poly_from_coeffs(ctx, [7] * ctx.n)
        assert crt_reconstruct(p) == [7] * ctx.n

    def test_crt_roundtrip_random_bigints(self, ctx, rng):
        vals = [int.from_bytes(rng.bytes(16), "little") % ctx.q for _ in range(ctx.n)]
        vals[:5] = [0, 1, ctx.q - 1, ctx.limbs[0].value, ctx.limbs[1].value - 1]
        res = np.stack(
            [np.array([v % limb.value for v in vals], dtype=np.uint64) for limb in ctx.limbs]
        )
        got = crt_reconstruct(coeff_poly(ctx, res))
        assert got == vals
        # reconstruction stays in range and satisfies every limb congruence
        for j in range(ctx.n):
            assert 0 <= got[j] < ctx.q
            for li, limb in enumerate(ctx.limbs):
                assert got[j] % limb.value == int(res[li][j])

    def test_crt_single_limb_is_identity(self, ctx8, rng):
        coeffs = [int(v) for v in rng.integers(0, P, 8)]
        assert crt_reconstruct(poly_from_coeffs(ctx8, coeffs)) == coeffs

    def test_scale_round_exact_multiples(self, ctx, rng):
        ms = [int(v) for v in rng.integers(0, ctx.t, 64)]
        assert scale_round_mod_t([ctx.delta * m for m in ms], ctx) == ms

    def test_scale_round_matches_fraction_oracle(self, ctx, rng):
        vals = [int.from_bytes(rng.bytes(16), "little") % ctx.q for _ in range(500)]
        vals += [0, 1, ctx.q - 1, ctx.q // 2, ctx.q // 2 + 1]
        got = scale_round_mod_t(vals, ctx)
        assert got == [oracles.scale_round_reference(v, ctx.q, ctx.t) for v in vals]

    def test_scale_round_absorbs_noise(self, ctx, rng):
        # Exact-recovery window: |t*e - m*(q mod t)| < q/2. Keeping e at least
        # 2^32 above -delta/2 makes recovery guaranteed for every m < t/2.
        half = ctx.delta // 2
        lo, hi = -(half - 2**32), half - 1
        for _ in range(1000):
            m = int(rng.integers(0, ctx.t // 2))
            e = lo + int.from_bytes(rng.bytes(16), "little") % (hi - lo + 1)
            v = (ctx.delta * m + e) % ctx.q
            assert scale_round_mod_t([v], ctx) == [m]

    def test_scale_round_noise_boundary(self, ctx):
        half = ctx.delta // 2
        r = ctx.q % ctx.t
        # positive edge is safe for any message: t*(half-1) < q/2 - m*r slack
        for m in (0, 1, 12345, ctx.t // 2):
            assert scale_round_mod_t([(ctx.delta * m + half - 1) % ctx.q], ctx) == [m]
        # negative edge shifts by m*(q mod t)/t, so it only survives for the
        # first few messages; beyond that the rounding genuinely moves
        m_safe = (ctx.q // 2 - ctx.t * (half - 1)) // r
        for m in range(m_safe + 1):
            assert scale_round_mod_t([ctx.delta * m - (half - 1)], ctx) == [m]
        assert scale_round_mod_t([ctx.delta * (m_safe + 1) - (half - 1)], ctx) == [m_safe]

    def test_crt_requires_coeff_domain(self, ctx8):
        with pytest.raises(DomainMismatchError):
            crt_reconstruct(zero_poly(ctx8, Domain.NTT))


class TestPolyConstruction:
    def test_wrong_length_rejected(self, ctx8):
        with pytest.raises(ParameterError):
            poly_from_coeffs(ctx8, [1, 2, 3])

    def test_negative_coefficients_reduced(self, ctx8):
        p = poly_from_coeffs(ctx8, [-1] + [0] * 7)
        assert p.residues[0][0] == P - 1
        assert crt_reconstruct(p)[0] == P - 1
