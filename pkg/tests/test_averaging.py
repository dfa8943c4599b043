import math

import numpy as np
import pytest

from ergoflow.averaging import (
    AveragePlan,
    QuadratureConfig,
    block_average,
    box_average,
    continuous_average,
    power_substitute_check,
)
from ergoflow.errors import ConfigurationError, EvaluationError, UnsupportedScaleError
from ergoflow.flows import KroneckerFlow, PermutationMap, Sl2Flow, SuspensionFlow
from ergoflow.observables import BaseFunction, Constant, FiberCharacter, Observable, TorusCharacter
from ergoflow.points import SuspensionPoint, TorusPoint

from conftest import SQ2, SQ3, SQ5

chi = TorusCharacter


def e(v):
    return np.exp(2j * np.pi * v)


def test_constants_exact(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [Constant(2.0), Constant(1.5j), Constant(-3.0)], Q=(0, 0, 1))
    c = continuous_average(p, x)
    assert np.max(np.abs(np.asarray(c.values) + 9j)) < 1e-14
    assert abs(block_average(p, x, 0.7, 100) + 9j) < 1e-14


def test_thmA_closed_form(kron_pair):
    T, S, x = kron_pair
    k, l = np.array([1, 0, 0]), np.array([0, 2, 0])
    p = AveragePlan("ThmA", [T, S], [chi(k), chi(l), Constant(1.0)], Q=(0, 0, 1))
    M = 1000.0
    c = continuous_average(p, x, QuadratureConfig(M_grid=(M,)))
    w = float((k + l) @ T.velocity[:, 0])
    want = e((k + l) @ x.coords) * (e(w * M) - 1) / (2j * np.pi * w * M)
    assert abs(c.tail - want) < 1e-3 + c.errors[-1]
    assert abs(c.tail - want) < 1e-10


def brute_force_thmA(T, S, ks, Q, x, M, h):
    total = 0j
    n = int(round(M / h))
    for lo in range(0, n, 1_000_000):
        t = (np.arange(lo, min(n, lo + 1_000_000)) + 0.5) * h
        ph = (ks[0] @ x.coords + np.outer(t, T.velocity[:, 0]) @ ks[0]
              + ks[1] @ x.coords + np.outer(t, T.velocity[:, 0]) @ ks[1]
              + ks[2] @ x.coords + np.outer(np.polyval(Q[::-1], t), S.velocity[:, 0]) @ ks[2])
        total += np.exp(2j * np.pi * np.mod(ph, 1.0)).sum()
    return total * h / M


def test_thmA_triple_brute_force(kron_pair):
    T, S, x = kron_pair
    ks = [np.array([1, 0, 1]), np.array([0, -1, 0]), np.array([0, 1, 2])]
    p = AveragePlan("ThmA", [T, S], [chi(k) for k in ks], Q=(0, 0, 1))
    M = 1000.0
    c = continuous_average(p, x, QuadratureConfig(M_grid=(M,)))
    ref = brute_force_thmA(T, S, ks, [0, 0, 1], x, M, 1e-4)
    assert abs(c.tail - ref) < 1e-5


@pytest.mark.parametrize("rule", ["gauss4", "midpoint", "phase"])
def test_rules_agree(kron_pair, rule):
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [chi([1, 0, 0]), chi([0, 1, 0]), chi([0, 1, 1])], Q=(0, -1, 1))
    step = 1e-3 if rule == "midpoint" else None
    ref = continuous_average(p, x, QuadratureConfig(M_grid=(100.0,), rule="gauss4"))
    c = continuous_average(p, x, QuadratureConfig(M_grid=(100.0,), rule=rule, step=step))
    assert abs(c.tail - ref.tail) < 1e-5


def test_rebracketing_identity(kron_pair):
    T, S, x = kron_pair
    rng = np.random.default_rng(4)
    for _ in range(20):
        ks = rng.integers(-2, 3, size=(3, 3))
        p = AveragePlan("ThmA", [T, S], [chi(k) for k in ks], Q=(0, 0, 1))
        delta, N = 0.25, 400
        quad = QuadratureConfig(step=0.025, M_grid=(delta * N,))
        cont = continuous_average(p, x, quad).tail
        blk = block_average(p, x, delta, N, quad)
        assert abs(blk - cont) <= 5e-12 * N / 10 + 1e-15


def test_truncation_bound(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [chi([1, 0, 0]), chi([0, 0, 0]), chi([0, 1, 1])], Q=(0, 0, 1))
    delta = 0.7
    for M in (50.0, 133.3, 1000.0):
        full = continuous_average(p, x, QuadratureConfig(M_grid=(M,)))
        N = int(math.floor(M / delta))
        trunc = block_average(p, x, delta, N)
        assert abs(full.tail - trunc) <= 2 * p.sup_bound * delta / M + full.errors[-1] + 1e-12


def test_boundedness_and_conjugation(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmB", [T, S], [chi([1, 1, 0]), Constant(0.5), chi([0, 1, -1])], Q=(0, 0, 1), a=(1, 2),
                    alpha=(0.5,), beta=1.0)
    c = continuous_average(p, x)
    cc = continuous_average(p.conj(), x)
    assert np.all(np.abs(c.values) <= p.sup_bound + 1e-12)
    np.testing.assert_allclose(np.conj(c.values), cc.values, atol=1e-13)


def test_too_few_panels():
    with pytest.raises(ConfigurationError, match="fewer than 10"):
        QuadratureConfig(step=20.0, M_grid=(100.0,))


class _Blowup(Observable):
    sup_norm = 1.0

    def evaluate(self, x):
        v = np.ones(x.batch_shape, dtype=complex)
        v[x.coords[..., 0] > 0.5] = np.nan
        return v

    def rate(self, flow):
        return np.zeros(1), False

    def conj(self):
        return self

    def to_dict(self):
        return {"kind": "blowup"}


def test_nonfinite_integrand_reports_time():
    T = KroneckerFlow([0.1])
    p = AveragePlan("Single", [T], [_Blowup()], Q=(0, 1))
    with pytest.raises(EvaluationError) as info:
        continuous_average(p, TorusPoint([0.0]), QuadratureConfig(M_grid=(100.0,)))
    assert info.value.t is not None and 4.0 <= info.value.t <= 100.0


def test_power_substitute():
    T = KroneckerFlow([SQ2, SQ3])
    x = TorusPoint([0.2, 0.4])
    a, b = power_substitute_check(T, chi([1, 0]), 1.0, (100.0, 1000.0), x)
    np.testing.assert_allclose(a.values, b.values, atol=1e-14)
    a, b = power_substitute_check(T, Constant(2.0), 2.0, (100.0, 1000.0), x)
    np.testing.assert_allclose(a.values, 2.0, atol=1e-13)
    np.testing.assert_allclose(b.values, 2.0, atol=1e-13)
    a, b = power_substitute_check(T, chi([1, 0]), 2.0, (1e3, 1e4), x)
    assert abs(a.tail - b.tail) <= 0.05


def test_box_k1_equals_continuous(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmC", [T, S], [chi([1, 0, 0]), chi([0, 1, 1])], c=0.5, l=(1,))
    M = 200.0
    assert abs(box_average(p, x, (M,)) - continuous_average(p, x, QuadratureConfig(M_grid=(M,))).tail) < 1e-12


def test_box_constants_and_scale_cap(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmC", [T, S], [Constant(2.0), Constant(-1j)], c=0.5, l=(1, 2))
    assert abs(box_average(p, x, (30.0, 40.0)) + 2j) < 1e-13
    p5 = AveragePlan("ThmC", [T, S], [Constant(1.0), Constant(1.0)], c=0.5, l=(1, 1, 1, 1, 1))
    with pytest.raises(UnsupportedScaleError, match="unsupported-scale"):
        box_average(p5, x, (10.0,) * 5)


def _fresnel_inner(A, B, C, M):
    """int_0^M e(A + B t + C t^2) dt for C > 0 through scipy's Fresnel integrals."""
    from scipy.special import fresnel

    k = math.sqrt(4 * C)
    s1, c1 = fresnel(k * (M + B / (2 * C)))
    s0, c0 = fresnel(k * B / (2 * C))
    return np.exp(2j * np.pi * (A - B * B / (4 * C))) * ((c1 - c0) + 1j * (s1 - s0)) / k


def nested_box_reference(M, al, be, c, l, x0, width=0.01):
    """Outer axis: dense Gauss-Legendre; inner axis: exact Fresnel form."""
    from numpy.polynomial.legendre import leggauss

    u, wt = leggauss(8)
    edges = np.arange(0.0, M, width)
    t1 = (edges[:, None] + width / 2 * (u + 1)).ravel()
    W = np.tile(wt * width / 2, edges.size)
    A = x0 + al * t1 + be * (t1 * t1 + c * l[0] * t1)
    B = al + be * (2 * t1 + c * l[1])
    return np.sum(W * _fresnel_inner(A, B, be, M)) / (M * M)


@pytest.mark.parametrize("al,be", [(SQ2, 0.1 * SQ3), (0.003 * SQ2, 1e-5 * SQ3)])
def test_box_nested_reference(al, be):
    T = KroneckerFlow([al, 0.0])
    S = KroneckerFlow([0.0, be])
    x = TorusPoint([0.1, 0.2])
    p = AveragePlan("ThmC", [T, S], [chi([1, 0]), chi([0, 1])], c=0.5, l=(1, 2))
    M = 300.0
    got = box_average(p, x, (M, M))
    ref = nested_box_reference(M, al, be, 0.5, (1, 2), 0.3)
    assert abs(got - ref) < 1e-4
    assert abs(got - ref) < 1e-10


def test_suspension_linear_Q_is_exact():
    S = SuspensionFlow(PermutationMap.cycle(3))
    x = SuspensionPoint(np.array(0), np.array([0.3]))
    h = np.exp(2j * np.pi * np.arange(3) / 3)
    p = AveragePlan("ThmA", [S, S], [BaseFunction(h), Constant(1.0), BaseFunction(np.conj(h))], Q=(0, 1))
    c = continuous_average(p, x, QuadratureConfig(M_grid=(10.0, 100.0)))
    np.testing.assert_allclose(c.values, 1.0, atol=1e-13)


def test_fiber_character_suspension_average():
    S = SuspensionFlow(PermutationMap.cycle(2))
    x = SuspensionPoint(np.array(1), np.array([0.0]))
    p = AveragePlan("Single", [S], [FiberCharacter([1])], Q=(0, 1))
    c = continuous_average(p, x, QuadratureConfig(M_grid=(10.0, 100.0)))
    np.testing.assert_allclose(c.values, 0.0, atol=1e-12)


def test_curve_csv_format(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [chi([1, 0, 0]), Constant(1.0), Constant(1.0)], Q=(0, 0, 1))
    c = continuous_average(p, x, QuadratureConfig(M_grid=(100.0, 1000.0)))
    lines = c.to_csv().strip().splitlines()
    assert lines[0] == "M,re,im,err_estimate"
    assert float(lines[1].split(",")[1]) == complex(c.values[0]).real
    assert c.metadata["plan_hash"] == p.hash()


def test_sl2_plan_runs_with_explicit_step():
    from ergoflow.observables import SmoothBump
    from ergoflow.sampling import haar_sample_sl2

    H, G = Sl2Flow("horocycle"), Sl2Flow("geodesic")
    f = SmoothBump(1.4j, 0.3)
    p = AveragePlan("ThmA", [H, G], [f, Constant(1.0), f], Q=(0, 0, 1))
    x = haar_sample_sl2(0, 1)[0]
    c = continuous_average(p, x, QuadratureConfig(step=2e-3, M_grid=(10.0, 20.0)))
    assert np.all(np.abs(c.values) <= 1.0)
