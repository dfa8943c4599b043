import math

import numpy as np
import pytest

from ergoflow.averaging import AveragePlan, QuadratureConfig, continuous_average
from ergoflow.flows import KroneckerFlow
from ergoflow.observables import Constant, Sum, TorusCharacter as chi
from ergoflow.oracles import UndecidableError, character_limit, closed_form_linear
from ergoflow.points import TorusPoint

from conftest import SQ2, SQ3


def test_zero_frequency_survives(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [chi([1, 0, 1]), chi([-1, 0, 0]), chi([0, 0, 2])], Q=(0, 0, 1))
    lim, alive = character_limit(p, x)
    assert alive == 1
    assert abs(lim - np.exp(2j * np.pi * 3 * x.coords[2])) < 1e-15


def test_nonresonant_characters_vanish(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [chi([1, 0, 0]), chi([0, 1, 0]), chi([0, 1, 0])], Q=(0, -1, 0, 1))
    assert character_limit(p, x) == (0j, 0)


def test_rational_a_cancellation(kron_pair):
    """f1 = e(-2 x0), f2 = e(x0) with a = 2: the linear phases cancel."""
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [chi([-2, 0, 0]), chi([1, 0, 0]), Constant(1.0)], Q=(0, 0, 1), a=(2, 1))
    lim, alive = character_limit(p, x)
    assert alive == 1
    assert abs(lim - np.exp(2j * np.pi * (-x.coords[0]))) < 1e-15


def test_sums_expand(kron_pair):
    T, S, x = kron_pair
    g = Sum([chi([0, 0, 0]), chi([0, 1, 0])], [0.5, 2.0])
    p = AveragePlan("ThmA", [T, S], [Constant(1.0), Constant(1.0), g], Q=(0, 0, 1))
    assert abs(character_limit(p, x)[0] - 0.5) < 1e-15


def test_matches_engine(kron_pair):
    T, S, x = kron_pair
    p = AveragePlan("ThmA", [T, S], [chi([1, 0, 1]), chi([-1, 0, 0]), chi([0, 0, 2])], Q=(0, -1, 0, 1), a=(1, 2))
    c = continuous_average(p, x, QuadratureConfig(M_grid=(1e3, 1e4)))
    assert abs(c.tail - character_limit(p, x)[0]) < 5e-3


def test_dependent_velocities_refused():
    T = KroneckerFlow([SQ2, 2 * SQ2 + 1e-13])
    x = TorusPoint([0.0, 0.0])
    p = AveragePlan("Single", [T], [chi([2, -1])], Q=(0, 1))
    with pytest.raises(UndecidableError):
        character_limit(p, x)


def test_box_limit():
    T = KroneckerFlow([SQ2, 0.0])
    S = KroneckerFlow([0.0, SQ3])
    p = AveragePlan("ThmC", [T, S], [Sum([chi([0, 0]), chi([1, 0])], [0.25, 1.0]), Constant(2.0)], c=0.5, l=(1, 2))
    assert abs(character_limit(p, TorusPoint([0.3, 0.4]))[0] - 0.5) < 1e-15


def test_closed_form_linear():
    assert closed_form_linear(0.0, 0.25, 10.0) == pytest.approx(1j)
    w, M = math.sqrt(2), 100.0
    ts = (np.arange(200000) + 0.5) * M / 200000
    ref = np.mean(np.exp(2j * np.pi * w * ts))
    assert abs(closed_form_linear(w, 0.0, M) - ref) < 1e-8
