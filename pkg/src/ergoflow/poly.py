"""Real polynomials with exact shift-scale algebra and guarded floors."""

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import DomainError, OrbitOverflowError

# 2**53: beyond this doubles no longer represent every integer
EXACT_INT_LIMIT = float(2 ** 53)
FLOOR_GUARD = 1e-9

_HP = mpmath.MPContext()
_HP.prec = 200


def _fsum_complexless(values):
    return math.fsum(values)


@dataclass(frozen=True)
class Polynomial:
    """coeffs[i] is the coefficient of t**i; trailing zeros are stripped."""

    coeffs: tuple

    def __post_init__(self):
        c = [float(v) for v in self.coeffs]
        while c and c[-1] == 0.0:
            c.pop()
        if not all(math.isfinite(v) for v in c):
            raise DomainError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def parse(cls, spec):
        """From a coefficient list or a string such as "t^3 - 2*t"."""
        if isinstance(spec, Polynomial):
            return spec
        if isinstance(spec, str):
            import sympy

            t = sympy.Symbol("t")
            expr = sympy.sympify(spec.replace("^", "**"), locals={"t": t})
            poly = sympy.Poly(expr, t)
            deg = poly.degree()
            out = [0.0] * (deg + 1)
            for (k,), v in poly.terms():
                out[k] = float(v)
            return cls(tuple(out))
        return cls(tuple(spec))

    @classmethod
    def monomial(cls, k, c=1.0):
        return cls((0.0,) * k + (float(c),))

    @property
    def degree(self):
        return len(self.coeffs) - 1  # -1 for the zero polynomial

    @property
    def lead(self):
        return self.coeffs[-1] if self.coeffs else 0.0

    def __call__(self, t):
        return eval_poly(self, t)

    def derivative(self):
        return Polynomial(tuple(i * c for i, c in enumerate(self.coeffs))[1:])

    def __add__(self, other):
        other = Polynomial.parse(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0.0,) * (n - len(self.coeffs))
        b = other.coeffs + (0.0,) * (n - len(other.coeffs))
        return Polynomial(tuple(x + y for x, y in zip(a, b)))

    def scale(self, c):
        return Polynomial(tuple(c * v for v in self.coeffs))

    def abs_bound(self, r):
        """Upper bound of |P(s)| for |s| <= r (sum of |c_i| r^i)."""
        return sum(abs(c) * r ** i for i, c in enumerate(self.coeffs))

    def to_list(self):
        return list(self.coeffs)

    def __str__(self):
        parts = [f"{c!r}*t^{i}" for i, c in enumerate(self.coeffs) if c != 0.0]
        return " + ".join(parts) if parts else "0"


def eval_poly(Q, t):
    """Horner evaluation; t may be an array."""
    t = np.asarray(t, dtype=float)
    acc = np.zeros_like(t)
    for c in reversed(Q.coeffs):
        acc = acc * t + c
    return acc if acc.ndim else float(acc)


def compose_linear(Q, a, b):
    """Coefficients of Q(a t + b), each accumulated with exactly rounded sums."""
    n = len(Q.coeffs)
    out = []
    for k in range(n):
        terms = [Q.coeffs[j] * math.comb(j, k) * a ** k * b ** (j - k) for j in range(k, n)]
        out.append(math.fsum(terms))
    return Polynomial(tuple(out))


@dataclass(frozen=True)
class ShiftScaleDecomposition:
    """Q(n delta + t) = P(n) delta^s + Q(t) + sum_i P_i(n) delta^{s-i} t^i."""

    P: Polynomial
    P_i: tuple  # P_i[i-1] multiplies delta^{s-i} t^i, i = 1 .. s-1
    delta: float
    s: int
    Q: Polynomial

    def evaluate(self, n, t):
        """Right-hand side of the identity."""
        n = np.asarray(n, dtype=float)
        t = np.asarray(t, dtype=float)
        d, s = self.delta, self.s
        out = eval_poly(self.P, n) * d ** s + eval_poly(self.Q, t)
        for i, Pi in enumerate(self.P_i, start=1):
            out = out + eval_poly(Pi, n) * d ** (s - i) * t ** i
        return out


def shift_scale_decompose(Q, delta):
    """Split Q(n delta + t) into the n-only part, the t-only part and cross terms.

    Requires deg Q >= 2 and Q(0) = 0.  Works for any leading coefficient;
    lead(P_1) = s * lead(Q), so the monic normalisation corresponds to
    dividing Q by lead(Q) beforehand.
    """
    Q = Polynomial.parse(Q)
    s = Q.degree
    if s < 2:
        raise DomainError("shift-scale decomposition needs deg Q >= 2")
    if Q.coeffs[0] != 0.0:
        raise DomainError("subtract Q(0) before decomposing")
    delta = float(delta)
    if not (delta > 0 and math.isfinite(delta)):
        raise DomainError("delta must be positive and finite")
    q = Q.coeffs
    # coefficient of n^m in the t^i part: q_{i+m} C(i+m, i) delta^{i+m}, divided by delta^{s-i}
    P = Polynomial(tuple([0.0] + [q[m] * delta ** (m - s) for m in range(1, s + 1)]))
    P_i = []
    for i in range(1, s):
        coeffs = [0.0] * (s - i + 1)
        for m in range(1, s - i + 1):
            j = i + m
            coeffs[m] = q[j] * math.comb(j, i) * delta ** (j - s)
        P_i.append(Polynomial(tuple(coeffs)))
    return ShiftScaleDecomposition(P, tuple(P_i), delta, s, Q)


def normalize_for_decomposition(Q):
    """Return (monic Q0 with Q0(0) = 0, constant, lead) so that
    Q(t) = lead * Q0(t) + constant."""
    Q = Polynomial.parse(Q)
    const = Q.coeffs[0] if Q.coeffs else 0.0
    lead = Q.lead
    if lead == 0.0:
        raise DomainError("zero polynomial")
    shifted = Polynomial((0.0,) + Q.coeffs[1:])
    return shifted.scale(1.0 / lead), const, lead


def _hp_eval(Q, n):
    acc = _HP.mpf(0)
    x = _HP.mpf(int(n))
    for c in reversed(Q.coeffs):
        acc = acc * x + _HP.mpf(c)
    return acc


def floor_poly_orbit(P, n):
    """floor(P(n)) for integer n (scalar or array), exact for the double
    coefficients of P.

    Values within FLOOR_GUARD of an integer are re-evaluated in 200-bit
    arithmetic before flooring.  Returns a Python int for scalar n and an
    int64 array otherwise.
    """
    P = Polynomial.parse(P)
    scalar = np.ndim(n) == 0
    n_arr = np.atleast_1d(np.asarray(n, dtype=np.int64))
    v = eval_poly(P, n_arr.astype(float))
    v = np.atleast_1d(v)
    if not np.all(np.isfinite(v)) or np.any(np.abs(v) >= EXACT_INT_LIMIT):
        raise OrbitOverflowError("polynomial orbit exponent exceeds the exact-integer range")
    out = np.floor(v).astype(np.int64)
    near = np.abs(v - np.round(v)) <= FLOOR_GUARD * np.maximum(1.0, np.abs(v))
    for idx in np.flatnonzero(near):
        out[idx] = int(_HP.floor(_hp_eval(P, int(n_arr[idx]))))
    return int(out[0]) if scalar else out


def frac_poly_orbit(P, n):
    """P(n) - floor(P(n)) consistent with floor_poly_orbit (float result)."""
    P = Polynomial.parse(P)
    n_arr = np.atleast_1d(np.asarray(n, dtype=np.int64))
    fl = np.atleast_1d(floor_poly_orbit(P, n_arr))
    v = np.atleast_1d(eval_poly(P, n_arr.astype(float)))
    fr = v - fl
    return np.clip(fr, 0.0, np.nextafter(1.0, 0.0))
