import math

import numpy as np
import pytest

from ergoflow.errors import ContractViolation
from ergoflow.flows import KroneckerFlow, PermutationMap, Sl2Flow, SuspensionFlow
from ergoflow.observables import (
    BaseFunction,
    Constant,
    FiberCharacter,
    OnComponent,
    Product,
    RealPart,
    SmoothBump,
    Sum,
    TorusCharacter,
    observable_from_dict,
)
from ergoflow.points import ProductPoint, SuspensionPoint, TorusPoint
from ergoflow.sampling import MeasureSampler, haar_sample_sl2, sample_invariant

from haar_grid import BUMP_14, BUMP_15, grid_integral


def test_character_values_and_sup():
    chi = TorusCharacter([1, -2])
    x = TorusPoint([[0.25, 0.0], [0.1, 0.3]])
    v = chi.evaluate(x)
    np.testing.assert_allclose(v[0], 1j, atol=1e-15)
    assert np.all(np.abs(np.abs(v) - 1) < 1e-14)
    assert chi.sup_norm == 1.0
    assert chi.exact_integral == 0
    assert TorusCharacter([0, 0]).exact_integral == 1


def test_product_and_sum_expansions():
    f = Product([TorusCharacter([1, 0]), TorusCharacter([-1, 1])])
    (t,) = f.terms()
    assert t.tor == (0, 1)
    g = Sum([TorusCharacter([0, 0]), TorusCharacter([1, 0])], [2.0, 3.0])
    assert g.exact_integral == 2.0
    assert g.sup_norm == 5.0
    x = TorusPoint(np.random.default_rng(2).random((9, 2)))
    np.testing.assert_allclose(RealPart(g).evaluate(x), g.evaluate(x).real, atol=1e-15)


def test_conjugation():
    f = Sum([TorusCharacter([1, 2]), Constant(1j)], [1.0, 0.5j])
    x = TorusPoint(np.random.default_rng(3).random((5, 2)))
    np.testing.assert_allclose(f.conj().evaluate(x), np.conj(f.evaluate(x)), atol=1e-15)


def test_suspension_observables():
    h = BaseFunction([1.0, 2.0, 4.0])
    x = SuspensionPoint(np.array([0, 1, 2]), np.array([[0.1], [0.2], [0.3]]))
    np.testing.assert_allclose(h.evaluate(x), [1, 2, 4])
    fc = FiberCharacter([1])
    np.testing.assert_allclose(fc.evaluate(x), np.exp(2j * np.pi * np.array([0.1, 0.2, 0.3])))
    assert abs(h.exact_integral - 7 / 3) < 1e-15
    assert (h * fc).exact_integral == 0


def test_component_observable():
    f = OnComponent(1, TorusCharacter([1]))
    x = ProductPoint((TorusPoint([0.5]), TorusPoint([0.25])))
    assert abs(f.evaluate(x) - 1j) < 1e-15


@pytest.mark.parametrize("spec", [BUMP_14, BUMP_15])
def test_bump_integral_matches_grid_reference(spec):
    c, w, ref = spec
    assert abs(SmoothBump(c, w).haar_integral() - ref) < 1e-12


def test_grid_reference_converged():
    c, w, ref = BUMP_14
    assert abs(grid_integral(c, w, n=200) - ref) < 1e-12


def test_bump_monte_carlo_mean():
    c, w, ref = BUMP_14
    x = haar_sample_sl2(11, 200000)
    v = SmoothBump(c, w).evaluate(x).real
    se = v.std() / math.sqrt(v.size)
    assert abs(v.mean() - ref) < 4 * se


def test_bump_support_checks():
    with pytest.raises(ContractViolation):
        SmoothBump(2j, 0.9)
    with pytest.raises(ContractViolation):
        SmoothBump(0.45 + 2j, 0.2)
    b = SmoothBump(1.4j, 0.3)
    assert b.rate(Sl2Flow("geodesic"))[0][0] > b.rate(Sl2Flow("horocycle"))[0][0]


@pytest.mark.parametrize("obs", [
    Constant(2 - 1j),
    TorusCharacter([1, 0, -3]),
    BaseFunction([1.0, 2j]),
    SmoothBump(1.4j, 0.3),
    Sum([TorusCharacter([1]), Product([TorusCharacter([2]), Constant(0.5)])], [1.0, 1j]),
    RealPart(OnComponent(0, TorusCharacter([1]))),
])
def test_observable_dict_round_trip(obs):
    assert observable_from_dict(obs.to_dict()).to_dict() == obs.to_dict()


def test_invariant_sampler_is_deterministic_and_uniform():
    T = KroneckerFlow([0.1, 0.2])
    a = sample_invariant(MeasureSampler(T, 7), 5000)
    b = sample_invariant(MeasureSampler(T, 7), 5000)
    assert np.array_equal(a.coords, b.coords)
    assert abs(a.coords.mean() - 0.5) < 0.02
    S = SuspensionFlow(PermutationMap.cycle(3))
    y = sample_invariant(MeasureSampler(S, 1), 3000)
    counts = np.bincount(y.base, minlength=3)
    assert counts.min() > 900
