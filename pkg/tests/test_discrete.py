import math
from fractions import Fraction

import numpy as np
import pytest

from ergoflow.discrete import (
    DiscreteSystem,
    birkhoff_average,
    conditional_expectation,
    double_recurrence_average,
    floor_multi_average,
    fractional_power_average,
    polynomial_average,
    suspension_transfer_check,
)
from ergoflow.errors import DomainError
from ergoflow.flows import MultiSuspensionFlow, PermutationMap, RotationMap, SuspensionFlow

RHO = math.sqrt(2) - 1


def e1(c):
    return np.exp(2j * np.pi * np.asarray(c)[..., 0])


def test_birkhoff_cycle_mean_exact():
    sys = DiscreteSystem(PermutationMap.cycle(3))
    v = birkhoff_average(sys, [1.0, 2.0, 4.0], 1, 3)
    assert Fraction(v.real).limit_denominator(100) == Fraction(7, 3)
    assert abs(v - 7 / 3) < 1e-15
    assert birkhoff_average(sys, 2.5, 0, 17) == 2.5


def test_birkhoff_rotation_geometric_bound():
    sys = DiscreteSystem.rotation([RHO])
    N = 10 ** 4
    v = birkhoff_average(sys, e1, np.array([0.0]), N)
    assert abs(v) <= 2 / (N * abs(np.exp(2j * np.pi * RHO) - 1))


def test_conditional_expectation_finite():
    five = DiscreteSystem(PermutationMap.cycle(5))
    tab = [1.0, 3.0, 5.0, 8.0, 11.0]
    ce = conditional_expectation(five, tab, 2, 10, 100)
    assert ce.value == pytest.approx(np.mean(tab), abs=1e-15) and ce.error == 0 and ce.exact
    two = DiscreteSystem(PermutationMap([1, 2, 0, 4, 5, 3]))
    tab = [1.0, 2.0, 3.0, 10.0, 20.0, 30.0]
    assert conditional_expectation(two, tab, 0, 10, 100).value == pytest.approx(2.0)
    assert conditional_expectation(two, tab, 4, 10, 100).value == pytest.approx(20.0)
    assert conditional_expectation(two, 3.0, 4, 10, 100).value == 3.0


def test_conditional_expectation_projection_and_invariance():
    P = PermutationMap([2, 0, 1, 4, 3, 5, 7, 8, 6])
    sys = DiscreteSystem(P)
    tab = np.random.default_rng(0).normal(size=9) + 1j
    vals = np.array([conditional_expectation(sys, tab, s, 4, 10).value for s in range(9)])
    assert abs(vals.mean() - tab.mean()) < 1e-12
    for s in range(9):
        assert conditional_expectation(sys, tab, P(s), 4, 10).value == vals[s]


def test_conditional_expectation_rotation_flags():
    sys = DiscreteSystem.rotation([RHO])
    good = conditional_expectation(sys, e1, np.array([0.3]), 20000, 100)
    assert good.converged and abs(good.value) < 1e-2
    bad = conditional_expectation(sys, e1, np.array([0.3]), 4, 1e6)
    assert not bad.converged


def test_polynomial_average_mod6():
    sys = DiscreteSystem(PermutationMap.cycle(6))
    tab = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    got = polynomial_average(sys, tab, 0, [0, 0, 1], 36)
    want = np.mean([tab[(n * n) % 6] for n in range(36)])
    assert got == want
    assert polynomial_average(sys, tab, 2, [0, 1], 13) == birkhoff_average(sys, tab, 2, 13)


def test_double_recurrence():
    sys = DiscreteSystem(PermutationMap.cycle(4))
    f1, f2 = np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.0, -1.0, 2.0, 0.5])
    got = double_recurrence_average(sys, f1, f2, 1, 2, 1, 40)
    want = np.mean([f1[(1 + n) % 4] * f2[(1 + 2 * n) % 4] for n in range(4)])
    assert abs(got - want) < 1e-15
    assert double_recurrence_average(sys, f1, f2, 0, 0, 3, 9) == f1[3] * f2[3]
    assert abs(double_recurrence_average(sys, f1, 1.0, 1, 5, 0, 8) - birkhoff_average(sys, f1, 0, 8)) < 1e-15


def test_floor_multi_average_enumeration():
    sh1 = PermutationMap([((s // 6 + 1) % 6) * 6 + s % 6 for s in range(36)])
    sh2 = PermutationMap([(s // 6) * 6 + (s % 6 + 1) % 6 for s in range(36)])
    tab = np.random.default_rng(1).normal(size=36)
    N = 720
    got = floor_multi_average([sh1, sh2], [[0, math.sqrt(2)], [0, 0, 1]], tab, 5, N)
    want = []
    for n in range(N):
        i = math.floor(math.sqrt(2) * n) % 6
        j = (n * n) % 6
        s0 = 5
        want.append(tab[((s0 // 6 + i) % 6) * 6 + (s0 % 6 + j) % 6])
    assert abs(got - np.mean(want)) < 1e-12
    with pytest.raises(DomainError):
        floor_multi_average([PermutationMap([1, 0, 2]), PermutationMap([0, 2, 1])], [[0, 1], [0, 1]], [1, 2, 3], 0, 5)


def test_suspension_transfer_exact():
    S = SuspensionFlow(PermutationMap.cycle(3))
    r = suspension_transfer_check(S, [1.0, 2.0, 4.0], [[0, 0, 1]], 0, z=(0.5,), N=30)
    assert r.residual == 0
    r0 = suspension_transfer_check(S, [1.0, 2.0, 4.0], [[0]], 1, z=(0.5,), N=30)
    assert r0.residual == 0 and r0.lhs == 2.0
    m1 = PermutationMap([((s // 3 + 1) % 2) * 3 + s % 3 for s in range(6)])
    m2 = PermutationMap([(s // 3) * 3 + (s % 3 + 1) % 3 for s in range(6)])
    S2 = MultiSuspensionFlow([m1, m2])
    tab = np.random.default_rng(2).normal(size=6) + 1j * np.random.default_rng(3).normal(size=6)
    r2 = suspension_transfer_check(S2, tab, [[0, 0, 1.5], [0, 0.5, 0, 0.25]], 4, N=50)
    assert r2.residual == 0


def test_transfer_redraws_on_boundary():
    S = SuspensionFlow(PermutationMap.cycle(3))
    r = suspension_transfer_check(S, [1.0, 2.0, 4.0], [[0, 0.5]], 0, z=(0.5,), N=10)
    assert r.redraws >= 1 and r.residual == 0


def test_fractional_powers_are_exploratory():
    sys = DiscreteSystem(PermutationMap.cycle(4))
    res = fractional_power_average(sys, [1.0, 0, 0, 0], [1.0, 1.0, 1.0, 1.0], 1, 2, 0.5, 0, 100)
    assert res.label.startswith("exploratory")
