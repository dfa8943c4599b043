"""Discrete-time averages and the finite-system oracles behind them.

States are plain arrays: integers for permutations, coordinate vectors for
rotations, tuples of those for products.  Observables on a discrete system
are either a table (finite systems), a complex constant, or any vectorized
callable of the state.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ContractViolation, DomainError
from .flows import MultiSuspensionFlow, PermutationMap, RotationMap, maps_commute
from .poly import FLOOR_GUARD, Polynomial, eval_poly, floor_poly_orbit

EXPLORATORY = "exploratory: no oracle, a.e. convergence is open for general L^2"


def _csum(z):
    z = np.asarray(z)
    return complex(math.fsum(z.real.ravel()), math.fsum(z.imag.ravel()))


def _cmean(z):
    z = np.asarray(z)
    return _csum(z) / z.size


class DiscreteSystem:
    """Invertible map: a permutation, a rotation, or a product of systems."""

    def __init__(self, spec):
        if isinstance(spec, (PermutationMap, RotationMap)):
            self.kind = "permutation" if isinstance(spec, PermutationMap) else "rotation"
            self.map = spec
            self.parts = ()
        elif isinstance(spec, (list, tuple)):
            self.kind = "product"
            self.parts = tuple(p if isinstance(p, DiscreteSystem) else DiscreteSystem(p) for p in spec)
            self.map = None
        else:
            raise ContractViolation("DiscreteSystem takes a PermutationMap, a RotationMap or a list of systems")

    @classmethod
    def permutation(cls, table):
        return cls(PermutationMap(table))

    @classmethod
    def rotation(cls, angle):
        return cls(RotationMap(angle))

    @property
    def finite(self):
        if self.kind == "product":
            return all(p.finite for p in self.parts)
        return self.kind == "permutation"

    @property
    def n_states(self):
        if not self.finite:
            return None
        if self.kind == "product":
            return int(np.prod([p.n_states for p in self.parts]))
        return self.map.n_states

    def power(self, x, k):
        """T^k x; k an integer or integer array (broadcast against x)."""
        if self.kind == "product":
            return tuple(p.power(xi, k) for p, xi in zip(self.parts, x))
        return self.map.power(x, k)

    def states(self):
        """All states of a finite system, as a batch."""
        if self.kind == "permutation":
            return np.arange(self.map.n_states)
        if self.kind == "product" and self.finite:
            grids = np.meshgrid(*[np.arange(p.n_states) for p in self.parts], indexing="ij")
            return tuple(g.ravel() for g in grids)
        raise ConfigurationError("state enumeration needs a finite system")

    def orbit_period(self, x):
        if self.kind == "permutation":
            return int(self.map._length[self.map.cycle_of[int(x)]])
        if self.kind == "product" and self.finite:
            return int(np.lcm.reduce([p.orbit_period(xi) for p, xi in zip(self.parts, x)]))
        raise ConfigurationError("orbit periods exist only on finite systems")


def as_function(sys, f):
    """Vectorized callable for a table, constant or callable observable."""
    if callable(f):
        return f
    if np.isscalar(f):
        c = complex(f)
        return lambda s: _const(s, c)
    tab = np.asarray(f, dtype=complex)
    if not sys.finite:
        raise ConfigurationError("table observables need a finite system")
    if sys.kind == "product":
        return lambda s: tab[tuple(np.asarray(v) for v in s)]
    return lambda s: tab[np.asarray(s)]


def _const(s, c):
    if isinstance(s, tuple):
        s = s[0]
    s = np.asarray(s)
    shape = s.shape if s.dtype.kind in "iu" else s.shape[:-1]
    return np.full(shape, c, dtype=complex)


def sup_norm(sys, f, sample=None):
    if np.isscalar(f):
        return abs(complex(f))
    if not callable(f):
        return float(np.max(np.abs(np.asarray(f, dtype=complex))))
    if sample is None:
        raise ConfigurationError("sup norm of a callable needs a sample")
    return float(np.max(np.abs(f(sample))))


# ---------------------------------------------------------------------------
# averages


def birkhoff_average(sys, f, x, N):
    """(1/N) sum_{n<N} f(T^n x)."""
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    F = as_function(sys, f)
    return _cmean(F(sys.power(x, np.arange(N, dtype=np.int64))))


def birkhoff_curve(sys, f, x, N):
    """A(n) = (1/n) sum_{m<n} f(T^m x) for n = 1..N."""
    F = as_function(sys, f)
    v = F(sys.power(x, np.arange(N, dtype=np.int64)))
    return np.cumsum(v) / np.arange(1, N + 1)


@dataclass(frozen=True)
class CondExpEstimate:
    """Estimate of E(f | I(T))(x)."""

    value: complex
    N: int
    error: float
    converged: bool
    exact: bool = False


def conditional_expectation(sys, f, x, N, r):
    """E(f | invariant sigma-algebra)(x).

    Finite systems: the exact mean over the orbit (cycle) of x.  Otherwise the
    Birkhoff curve on [N/2, N] is examined: its oscillation there must be
    below 1/r, and the tail mean is returned.  Failing the criterion yields a
    flagged (not raised) estimate.
    """
    if N < 2 or r <= 0:
        raise ConfigurationError("need N >= 2 and r > 0")
    F = as_function(sys, f)
    if sys.finite:
        per = sys.orbit_period(x)
        val = _cmean(F(sys.power(x, np.arange(per, dtype=np.int64))))
        return CondExpEstimate(val, per, 0.0, True, True)
    A = birkhoff_curve(sys, F, x, N)
    tail = A[N // 2 - 1:]
    osc = float(max(np.ptp(tail.real), np.ptp(tail.imag)) * math.sqrt(2.0))
    return CondExpEstimate(_cmean(tail), N, osc, osc < 1.0 / r)


def polynomial_average(sys, f, x, P, N):
    """(1/N) sum_{n<N} f(T^{floor(P(n))} x); integer-valued P gives P(n) exactly."""
    P = Polynomial.parse(P)
    F = as_function(sys, f)
    n = np.arange(N, dtype=np.int64)
    return _cmean(F(sys.power(x, floor_poly_orbit(P, n))))


def polynomial_curve(sys, f, x, P, N):
    P = Polynomial.parse(P)
    F = as_function(sys, f)
    v = F(sys.power(x, floor_poly_orbit(P, np.arange(N, dtype=np.int64))))
    return np.cumsum(v) / np.arange(1, N + 1)


def double_recurrence_average(sys, f1, f2, a, b, x, N):
    """(1/N) sum_{n<N} f1(T^{an} x) f2(T^{bn} x)."""
    F1, F2 = as_function(sys, f1), as_function(sys, f2)
    n = np.arange(N, dtype=np.int64)
    return _cmean(F1(sys.power(x, int(a) * n)) * F2(sys.power(x, int(b) * n)))


def _apply_maps(maps, x, exps):
    """T_1^{e_1} ... T_d^{e_d} x for commuting maps; exps shape (d, m)."""
    y = np.broadcast_to(np.asarray(x), exps.shape[1:] + np.shape(x)).copy() if isinstance(maps[0], RotationMap) \
        else np.full(exps.shape[1], int(x), dtype=np.int64)
    for m, e in zip(maps, exps):
        y = m.power(y, e)
    return y


def floor_multi_average(maps, polys, f, x, N):
    """(1/N) sum_{n<N} f(T_1^{floor P_1(n)} ... T_d^{floor P_d(n)} x)."""
    maps = list(maps)
    if len(maps) != len(polys) or not maps:
        raise ConfigurationError("one polynomial per map")
    if not maps_commute(maps):
        raise DomainError("the maps do not commute")
    n = np.arange(N, dtype=np.int64)
    exps = np.stack([floor_poly_orbit(Polynomial.parse(P), n) for P in polys])
    sys = DiscreteSystem(maps[0])
    F = as_function(sys, f)
    return _cmean(F(_apply_maps(maps, x, exps)))


# ---------------------------------------------------------------------------
# suspension transfer identity


@dataclass(frozen=True)
class TransferResult:
    residual: complex
    lhs: complex
    rhs: complex
    z: tuple
    redraws: int


def _draw_z(d, seed):
    from .sampling import _rng

    return tuple(float(v) for v in _rng(seed, 0, tag=7).random(d))


def _near_integer(v):
    return np.abs(v - np.round(v)) <= FLOOR_GUARD


def suspension_transfer_check(spec, f, polys, x, z=None, N=50, seed=0, max_redraws=64):
    """Both sides of the suspension transfer identity and their difference.

    LHS: E_{n<N} f(T_1^{floor(P_1(n)+z_1)} ... T_d^{floor(P_d(n)+z_d)} x).
    RHS: split n by the crossing pattern i in {0,1}^d, where i_j = 1 iff the
    fractional part of P_j(n) lies in [1 - z_j, 1); on that set the exponent
    is floor(P_j(n)) + i_j.  The RHS sums f(T^{floor P(n)} T^{i} x) pattern by
    pattern.  Both sides are exactly rounded sums of the same table entries,
    so the residual vanishes exactly on finite bases.

    If some P_j(n) + z_j falls within 1e-9 of an integer, z is redrawn from
    seed + 1, seed + 2, ...
    """
    if not isinstance(spec, MultiSuspensionFlow):
        raise ContractViolation("suspension_transfer_check needs a MultiSuspensionFlow")
    maps = spec.base_maps
    d = len(maps)
    if len(polys) != d:
        raise ContractViolation("one polynomial per suspension direction")
    if not maps_commute(maps):
        raise DomainError("the base maps do not commute")
    polys = [Polynomial.parse(P) for P in polys]
    n = np.arange(N, dtype=np.int64)
    fl = np.stack([floor_poly_orbit(P, n) for P in polys])
    fr = np.stack([eval_poly(P, n.astype(float)) for P in polys]) - fl
    redraws = 0
    zz = np.asarray(_draw_z(d, seed) if z is None else z, dtype=float)
    if zz.shape != (d,) or np.any(zz < 0) or np.any(zz >= 1):
        raise ContractViolation("z must lie in [0,1)^d")
    while np.any(_near_integer(fr + zz[:, None])):
        redraws += 1
        if redraws > max_redraws:
            raise DomainError("could not draw z off the crossing boundary")
        seed += 1
        zz = np.asarray(_draw_z(d, seed))
    F = as_function(DiscreteSystem(maps[0]), f)
    # LHS: the suspension flow itself, S^{P(n)}(x, z), read off on the base
    from .points import SuspensionPoint

    base = np.full(N, x, dtype=np.int64) if spec.finite else np.broadcast_to(x, (N,) + np.shape(x))
    moved = spec.evolve(SuspensionPoint(base, np.broadcast_to(zz, (N, d))), (fl + fr).T)
    lhs = _cmean(F(moved.base if spec.finite else moved.base.coords))
    # RHS: pattern-by-pattern sum
    cross = fr >= (1.0 - zz[:, None])
    terms = []
    for pattern in np.ndindex(*(2,) * d):
        mask = np.all(cross == np.asarray(pattern, dtype=bool)[:, None], axis=0)
        if not mask.any():
            continue
        y = x
        for m, i in zip(maps, pattern):
            y = m.power(y, int(i))
        terms.append(F(_apply_maps(maps, y, fl[:, mask])))
    rhs = _csum(np.concatenate(terms)) / N if terms else 0j
    return TransferResult(lhs - rhs, lhs, rhs, tuple(float(v) for v in zz), redraws)


# ---------------------------------------------------------------------------
# fractional powers (no oracle)


@dataclass(frozen=True)
class ExploratoryResult:
    value: complex
    curve: np.ndarray
    label: str = EXPLORATORY


def fractional_power_average(sys, f, g, p, q, gamma, x, N):
    """E_{n<N} f(T^{floor(p n^gamma)} x) g(T^{floor(q n^gamma)} x), gamma in (0,1)."""
    if not 0 < gamma < 1:
        raise ConfigurationError("gamma must lie in (0, 1)")
    n = np.arange(N, dtype=float)
    e1 = np.floor(p * n ** gamma).astype(np.int64)
    e2 = np.floor(q * n ** gamma).astype(np.int64)
    F, G = as_function(sys, f), as_function(sys, g)
    v = F(sys.power(x, e1)) * G(sys.power(x, e2))
    curve = np.cumsum(v) / np.arange(1, N + 1)
    return ExploratoryResult(complex(curve[-1]), curve)
