import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import reference_solution
from threewave.core import (
    EPS_ZERO,
    SAME_SIGN,
    ComplexTriple,
    CouplingSignature,
    InvalidStateError,
    PhaseUndefinedError,
    PolarTriple,
    VelocitySet,
    from_polar,
    invariants,
    invariants_array,
    phase_distance,
    polar_rhs,
    rhs_uniform,
    to_polar,
    total_phase,
    unit_phasor,
    wrap_phase,
)

MIXED = CouplingSignature(1, -1, -1)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
amp = st.builds(complex, finite, finite)
triples = st.builds(ComplexTriple, amp, amp, amp)


def close(a, b, tol=1e-15):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


class TestRhs:
    def test_two_zeros_is_equilibrium(self):
        assert tuple(rhs_uniform(ComplexTriple(0, 0, 5))) == (0, 0, 0)

    def test_ones(self):
        assert close(rhs_uniform(ComplexTriple(1, 1, 1)), (1j, 1j, 1j))

    def test_imaginary_units(self):
        assert close(rhs_uniform(ComplexTriple(1j, 1j, 1j)), (-1j, -1j, -1j))

    def test_signs_scale_each_component(self):
        a = ComplexTriple(1 + 2j, -0.5j, 0.3)
        same = rhs_uniform(a, SAME_SIGN)
        mixed = rhs_uniform(a, MIXED)
        assert close(mixed, (same[0], -same[1], -same[2]))

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidStateError):
            rhs_uniform(ComplexTriple(float("nan"), 0, 0))


class TestInvariants:
    def test_real_triple(self):
        inv = invariants(ComplexTriple(2, 1, 0))
        assert (inv.m12, inv.m13, inv.h) == (3, 4, 0)

    def test_imaginary_units(self):
        inv = invariants(ComplexTriple(1j, 1j, 1j))
        assert inv.m12 == 0 and inv.m13 == 0 and abs(inv.h) < 1e-15

    def test_mixed_signs(self):
        inv = invariants(ComplexTriple(1, 1, 1), MIXED)
        assert (inv.m12, inv.m13, inv.h) == (-2, -2, 2)

    def test_mixed_sign_constancy_against_reference(self):
        # the sign-generalized pair is only trusted after checking it is
        # actually conserved by an independent integrator
        a0 = [1 + 0.2j, 0.7 - 0.4j, 0.5 + 0.9j]
        states = reference_solution(a0, np.linspace(0, 10, 201), g=(1, -1, -1), rtol=1e-12, atol=1e-14)
        inv = invariants_array(states, MIXED)
        assert np.abs(inv - inv[0]).max() < 1e-9

    def test_array_form_matches_scalar(self):
        rng = np.random.default_rng(3)
        s = rng.normal(size=(20, 3)) + 1j * rng.normal(size=(20, 3))
        arr = invariants_array(s, MIXED)
        for row, inv in zip(s, arr):
            assert np.allclose(invariants(ComplexTriple.from_array(row), MIXED).as_tuple(), inv, rtol=0, atol=1e-14)

    @given(triples)
    def test_phase_invariant_bounded_by_moduli(self, a):
        r1, r2, r3 = a.moduli
        assert abs(invariants(a).h) <= 2 * r1 * r2 * r3 * (1 + 1e-12) + 1e-300


class TestPolar:
    def test_axis_values(self):
        p = to_polar(ComplexTriple(1, 1j, -1))
        assert p.moduli == (1, 1, 1)
        assert p.phases == (0.0, pytest.approx(math.pi / 2), pytest.approx(math.pi))

    def test_zero_has_no_phase(self):
        p = to_polar(ComplexTriple(0, 0, 3))
        assert p.moduli == (0, 0, 3)
        assert p.phases == (None, None, 0.0)

    def test_undefined_phase_maps_to_zero(self):
        assert tuple(from_polar(PolarTriple(0, 0, 3, None, None, 0.0))) == (0, 0, 3)

    def test_negative_modulus_rejected(self):
        with pytest.raises(InvalidStateError):
            from_polar(PolarTriple(-1, 1, 1, 0, 0, 0))

    def test_round_trip_seeded(self):
        rng = np.random.default_rng(1000)
        worst = 0.0
        for _ in range(1000):
            mod = rng.uniform(1e-6, 10, 3)
            ph = rng.uniform(-math.pi, math.pi, 3)
            a = ComplexTriple(*(mod * np.exp(1j * ph)))
            b = from_polar(to_polar(a))
            worst = max(worst, max(abs(x - y) for x, y in zip(a, b)))
        assert worst < 1e-12

    @given(triples)
    def test_round_trip_property(self, a):
        if min(a.moduli) < EPS_ZERO:
            return
        b = from_polar(to_polar(a))
        assert all(abs(x - y) < 1e-12 for x, y in zip(a, b))

    @given(st.floats(-100, 100, allow_nan=False))
    def test_wrap_phase_range(self, t):
        w = wrap_phase(t)
        assert 0.0 <= w < 2 * math.pi
        assert phase_distance(w, t) < 1e-9

    def test_unit_phasor_is_exact_on_axes(self):
        assert unit_phasor(1.5 * math.pi) == -1j
        assert unit_phasor(math.pi) == -1
        assert unit_phasor(-0.5 * math.pi) == -1j
        assert unit_phasor(0.3) == cmath.exp(0.3j)


class TestTotalPhase:
    def test_ones(self):
        assert total_phase(ComplexTriple(1, 1, 1)) == 0

    def test_imaginary_units(self):
        assert total_phase(ComplexTriple(1j, 1j, 1j)) == pytest.approx(1.5 * math.pi)

    def test_sixth_roots(self):
        z = cmath.exp(1j * math.pi / 6)
        assert total_phase(ComplexTriple(z, z, z)) == pytest.approx(0.5 * math.pi, abs=1e-15)

    def test_zero_raises(self):
        with pytest.raises(PhaseUndefinedError):
            total_phase(ComplexTriple(0, 1, 1))

    @given(triples)
    def test_matches_phase_invariant(self, a):
        prod = abs(a.a1 * a.a2 * a.a3)
        if min(a.moduli) < 1e-3:
            return
        theta = total_phase(a)
        h = invariants(a).h
        assert abs(2 * prod * math.cos(theta) - h) <= 1e-12 * max(1.0, 2 * prod)


class TestPolarRhs:
    @settings(max_examples=50)
    @given(triples)
    def test_agrees_with_cartesian(self, a):
        if min(a.moduli) < 1e-3:
            return
        d_r2, d_th = polar_rhs(to_polar(a))
        da = rhs_uniform(a)
        for j in range(3):
            cart_r2 = 2 * (a[j].conjugate() * da[j]).real
            cart_th = (da[j] / a[j]).imag
            scale = 1 + abs(cart_r2) + abs(cart_th)
            assert abs(cart_r2 - d_r2[j]) < 1e-11 * scale
            assert abs(cart_th - d_th[j]) < 1e-11 * scale

    def test_zero_modulus_raises(self):
        with pytest.raises(PhaseUndefinedError):
            polar_rhs(to_polar(ComplexTriple(1, 0, 2)))


class TestTypes:
    def test_same_sign_query(self):
        assert SAME_SIGN.is_same_sign
        assert not MIXED.is_same_sign

    def test_bad_sign(self):
        with pytest.raises(ValueError):
            CouplingSignature(1, 0, 1)

    def test_velocities(self):
        v = VelocitySet((1,), (1,), (1,))
        assert v.dim == 1 and v.all_equal
        assert not VelocitySet((1, 0), (0, 1), (1, 1)).all_equal
        with pytest.raises(ValueError):
            VelocitySet((0,), (1,), (1,))
        with pytest.raises(ValueError):
            VelocitySet((1,), (1, 0), (1,))
        with pytest.raises(ValueError):
            VelocitySet((1, 0, 0), (1, 0, 0), (1, 0, 0))
