from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergoflow.errors import DomainError, OrbitOverflowError
from ergoflow.poly import (
    Polynomial,
    compose_linear,
    floor_poly_orbit,
    frac_poly_orbit,
    normalize_for_decomposition,
    shift_scale_decompose,
)


def exact_eval(Q, u):
    u = Fraction(u)
    return sum(Fraction(c) * u ** m for m, c in enumerate(Q.coeffs))


def test_parse_forms():
    assert Polynomial.parse("t^3 - 2*t").to_list() == [0.0, -2.0, 0.0, 1.0]
    assert Polynomial.parse([0, 1, 0, 0]).degree == 1
    assert Polynomial.parse([]).degree <= 0


def test_decomposition_of_t_squared():
    d = shift_scale_decompose(Polynomial([0, 0, 1]), 0.1)
    assert d.s == 2
    np.testing.assert_allclose(d.P.to_list(), [0, 0, 1])
    np.testing.assert_allclose(d.P_i[0].to_list(), [0, 2])


def test_decomposition_preconditions():
    with pytest.raises(DomainError):
        shift_scale_decompose(Polynomial([0, 1]), 0.1)
    with pytest.raises(DomainError):
        shift_scale_decompose(Polynomial([1, 0, 1]), 0.1)
    with pytest.raises(DomainError):
        shift_scale_decompose(Polynomial([0, 0, 1]), 0.0)


coef = st.floats(-3, 3, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(st.lists(coef, min_size=2, max_size=5), st.floats(0.01, 3.0), st.integers(0, 200), st.floats(0, 1))
def test_decomposition_identity(cs, delta, n, frac):
    Q = Polynomial([0.0] + cs)
    t = frac * delta
    d = shift_scale_decompose(Q, delta)
    u = Fraction(n) * Fraction(delta) + Fraction(t)
    exact = exact_eval(Q, u)
    scale = float(sum(abs(Fraction(c)) * abs(u) ** m for m, c in enumerate(Q.coeffs)))
    assert abs(float(Fraction(float(d.evaluate(n, t))) - exact)) <= 1e-10 * scale


def test_lead_of_first_cross_term():
    Q = Polynomial([0, 1.0, 0.5, -2.0])
    d = shift_scale_decompose(Q, 1.0)
    assert d.P_i[0].lead == pytest.approx(d.s * Q.lead)


def test_normalization():
    Q0, c, lead = normalize_for_decomposition(Polynomial([3.0, 1.0, 0.0, 2.0]))
    assert c == 3.0 and lead == 2.0
    np.testing.assert_allclose(Q0.to_list(), [0, 0.5, 0, 1])


def test_compose_linear():
    assert compose_linear(Polynomial([0, -1, 0, 1]), 1, 1).to_list() == [0, 2, 3, 1]


# 1/7 rounds down as a double, so 49 * fl(1/7) is just below 7
@pytest.mark.parametrize("P,n,want", [([0, 0, 1], 7, 49), ([0, 0, 0.5], 7, 24), ([0, 0, 1 / 7], 7, 6), ([0, 0.1], 30, 3)])
def test_floor_orbit_examples(P, n, want):
    got = floor_poly_orbit(Polynomial(P), n)
    assert isinstance(got, int) and got == want


def test_floor_orbit_matches_high_precision():
    mpmath.mp.prec = 200
    P = Polynomial([0.0, 0.1, 0.0, 1 / 3])
    n = np.arange(0, 2000)
    fl = floor_poly_orbit(P, n)
    ref = [int(mpmath.floor(sum(mpmath.mpf(c) * mpmath.mpf(int(k)) ** m for m, c in enumerate(P.coeffs)))) for k in n]
    assert np.array_equal(fl, ref)
    fr = frac_poly_orbit(P, n)
    assert np.all((fr >= 0) & (fr < 1))


def test_floor_orbit_overflow():
    with pytest.raises(OrbitOverflowError):
        floor_poly_orbit(Polynomial([0, 0, 0, 1]), 10 ** 6)
