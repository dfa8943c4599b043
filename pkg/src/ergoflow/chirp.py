"""Exact integrals of exp(i(B s + C s^2)) over short intervals.

Used by the phase quadrature rule: a generalized power-sum phase is replaced
on each panel by its quadratic Taylor polynomial, whose oscillatory integral
is available in closed form through the Faddeeva function.
"""

import numpy as np
from scipy.special import wofz

# below this |C| h^2 the quadratic term is dropped (relative effect < 1e-12)
_QUAD_NEGLIGIBLE = 1e-12


def _linear_integral(B, s0, s1):
    """int_{s0}^{s1} exp(iBs) ds, stable for small B."""
    h = s1 - s0
    mid = 0.5 * (s0 + s1)
    x = 0.5 * B * h
    return h * np.exp(1j * B * mid) * np.sinc(x / np.pi)


def _chirp_pos(B, C, s0, s1):
    """C > 0 branch."""
    p = np.exp(-0.25j * np.pi) * np.sqrt(C)
    shift = B / (2.0 * C)
    u0, u1 = s0 + shift, s1 + shift

    def G(s, u):
        ph = np.exp(1j * (B * s + C * s * s))
        neg = u < 0
        z = 1j * p * np.where(neg, -u, u)
        w = wofz(z)
        return np.where(neg, -ph * w, ph * w)

    diff = G(s0, u0) - G(s1, u1)
    # erfc(w) = 2 - erfc(-w) on the left half plane; the constants survive
    # only when the stationary point lies inside the interval
    straddle = (u0 < 0) & (u1 >= 0)
    if np.any(straddle):
        stat = np.where(straddle, -B * B / (4.0 * C), 0.0)
        diff = diff + np.where(straddle, 2.0 * np.exp(1j * stat), 0.0)
    return np.sqrt(np.pi) / (2.0 * p) * diff


def chirp_integral(B, C, s0, s1):
    """Vectorised int_{s0}^{s1} exp(i(B s + C s^2)) ds (angular coefficients)."""
    B, C, s0, s1 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (B, C, s0, s1)))
    out = np.empty(B.shape, dtype=complex)
    span = np.maximum(np.abs(s0), np.abs(s1))
    small = np.abs(C) * span * span < _QUAD_NEGLIGIBLE
    if np.any(small):
        out[small] = _linear_integral(B[small], s0[small], s1[small])
    pos = ~small & (C > 0)
    if np.any(pos):
        out[pos] = _chirp_pos(B[pos], C[pos], s0[pos], s1[pos])
    neg = ~small & (C < 0)
    if np.any(neg):
        out[neg] = np.conj(_chirp_pos(-B[neg], -C[neg], s0[neg], s1[neg]))
    return out
