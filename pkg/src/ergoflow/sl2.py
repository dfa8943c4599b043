"""Arithmetic on X = SL2(R)/SL2(Z).

A coset g*Gamma is stored through the canonical representative g whose
inverse h = g^{-1} satisfies: h.i lies in the standard modular fundamental
domain F = {|Re z| <= 1/2, |z| >= 1}, with Re z in [-1/2, 1/2), points of the
unit circle taken on the Re z <= 0 side, and Iwasawa frame angle of h in
[0, pi).  Right multiplication g -> g*gamma is left multiplication
h -> gamma^{-1} h, i.e. the Moebius action of SL2(Z) on z = h.i.

Left multiplication by a(t) = diag(e^t, e^-t) (geodesic) or u(t) = (1 t; 0 1)
(horocycle) becomes h -> h a(-t), h -> h u(-t).  Long flow times are split
into steps of length <= 1 with a reduction after each, which keeps every
entry O(e) and avoids overflow of e^t.
"""

import math

import numpy as np
from numba import njit

from .errors import NumericInstabilityError

MAX_REDUCTION_STEPS = 1000
GEODESIC = 0
HOROCYCLE = 1


@njit(cache=True)
def _reduce_h(a, b, c, d):
    """Reduce h = (a b; c d) in place of the Moebius action; returns (a,b,c,d,ok)."""
    for _ in range(MAX_REDUCTION_STEPS):
        # z = h.i = (a i + b) / (c i + d)
        den = c * c + d * d
        x = (a * c + b * d) / den
        y = 1.0 / den
        n = math.floor(x + 0.5)
        if n != 0.0:
            # h <- (1 -n; 0 1) h  (z -> z - n)
            a = a - n * c
            b = b - n * d
            continue
        if x * x + y * y < 1.0:
            # h <- (0 -1; 1 0) h  (z -> -1/z)
            a, b, c, d = -c, -d, a, b
            continue
        break
    else:
        return a, b, c, d, False
    den = c * c + d * d
    x = (a * c + b * d) / den
    y = 1.0 / den
    if x >= 0.5:
        a = a - c
        b = b - d
        x -= 1.0
    if x > 0.0 and x * x + y * y == 1.0:
        a, b, c, d = -c, -d, a, b
    # frame angle: h = n(x) a(y) k(theta); k = a(y)^{-1} n(x)^{-1} h
    # bottom row of h equals (sin(theta), cos(theta)) / sqrt(y)
    theta = math.atan2(c, d)
    if theta < 0.0 or theta >= math.pi:
        a, b, c, d = -a, -b, -c, -d
    det = a * d - b * c
    s = 1.0 / math.sqrt(det)
    return a * s, b * s, c * s, d * s, True


@njit(cache=True)
def _step(a, b, c, d, kind, s):
    if kind == GEODESIC:
        e = math.exp(s)
        return a / e, b * e, c / e, d * e
    return a, b - a * s, c, d - c * s


@njit(cache=True)
def _advance(a, b, c, d, kind, s):
    """Apply the flow for time s, in chunks of length <= 1, reducing after each."""
    nsteps = int(math.ceil(abs(s)))
    if nsteps == 0:
        return _reduce_h(a, b, c, d)
    ds = s / nsteps
    for _ in range(nsteps):
        a, b, c, d = _step(a, b, c, d, kind, ds)
        a, b, c, d, ok = _reduce_h(a, b, c, d)
        if not ok:
            return a, b, c, d, False
    return a, b, c, d, True


@njit(cache=True)
def _evolve_pairs(H, kind, speed, T, out):
    """out[i] = reduce(h_i * flow(-speed*T[i])); returns index of failure or -1."""
    for i in range(H.shape[0]):
        a, b, c, d, ok = _advance(H[i, 0], H[i, 1], H[i, 2], H[i, 3], kind, speed * T[i])
        if not ok:
            return i
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
        out[i, 3] = d
    return -1


@njit(cache=True)
def _walk(H, kind, speed, times, out):
    """Sequential orbit: out[j, i] = h_i advanced to times[j], stepping between
    consecutive times.  Returns (j, i) of the first failure or (-1, -1)."""
    for i in range(H.shape[0]):
        a, b, c, d = H[i, 0], H[i, 1], H[i, 2], H[i, 3]
        prev = 0.0
        for j in range(times.shape[0]):
            a, b, c, d, ok = _advance(a, b, c, d, kind, speed * (times[j] - prev))
            if not ok:
                return j, i
            prev = times[j]
            out[j, i, 0] = a
            out[j, i, 1] = b
            out[j, i, 2] = c
            out[j, i, 3] = d
    return -1, -1


def _flat_h(g):
    """Matrices g (..., 2, 2) -> inverses h flattened to (n, 4)."""
    g = np.asarray(g, dtype=float).reshape(-1, 2, 2)
    h = np.empty((g.shape[0], 4))
    h[:, 0] = g[:, 1, 1]
    h[:, 1] = -g[:, 0, 1]
    h[:, 2] = -g[:, 1, 0]
    h[:, 3] = g[:, 0, 0]
    return h


def _g_from_flat_h(h, shape):
    g = np.empty(h.shape[:-1] + (2, 2))
    g[..., 0, 0] = h[..., 3]
    g[..., 0, 1] = -h[..., 1]
    g[..., 1, 0] = -h[..., 2]
    g[..., 1, 1] = h[..., 0]
    return g.reshape(tuple(shape) + (2, 2))


def reduce_matrices(g):
    """Canonical fundamental-domain representatives of the cosets g*Gamma."""
    g = np.asarray(g, dtype=float)
    shape = g.shape[:-2]
    h = _flat_h(g)
    out = np.empty_like(h)
    bad = _evolve_pairs(h, GEODESIC, 0.0, np.zeros(h.shape[0]), out)
    if bad >= 0:
        raise NumericInstabilityError("fundamental-domain reduction did not converge", t=0.0)
    return _g_from_flat_h(out, shape)


def evolve_matrices(g, kind, speed, t):
    """Reduced representatives of flow(speed*t) * g; g and t broadcast together."""
    g = np.asarray(g, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(g.shape[:-2], t.shape)
    g = np.broadcast_to(g, shape + (2, 2))
    t = np.broadcast_to(t, shape).reshape(-1)
    h = _flat_h(g)
    out = np.empty_like(h)
    bad = _evolve_pairs(h, kind, float(speed), np.ascontiguousarray(t), out)
    if bad >= 0:
        raise NumericInstabilityError("fundamental-domain reduction did not converge", t=float(t[bad]))
    return _g_from_flat_h(out, shape)


def walk_matrices(g, kind, speed, times):
    """Orbit of every g (batch of n) sampled at `times` (m,), stepping sequentially.

    Returns an array of shape (m, n, 2, 2).  Consecutive times should be close
    (quadrature nodes); each increment is applied to the previous reduced point.
    """
    g = np.asarray(g, dtype=float)
    h = _flat_h(g)
    times = np.ascontiguousarray(np.asarray(times, dtype=float))
    out = np.empty((times.shape[0], h.shape[0], 4))
    j, i = _walk(h, kind, float(speed), times, out)
    if j >= 0:
        raise NumericInstabilityError("fundamental-domain reduction did not converge", t=float(times[j]))
    return _g_from_flat_h(out, (times.shape[0], h.shape[0]))


def upper_half_plane(g):
    """Return (z, theta): z = g^{-1}.i and the Iwasawa frame angle of g^{-1}."""
    g = np.asarray(g, dtype=float)
    a, b = g[..., 1, 1], -g[..., 0, 1]
    c, d = -g[..., 1, 0], g[..., 0, 0]
    den = c * c + d * d
    z = (a * c + b * d) / den + 1j / den
    return z, np.arctan2(c, d)


def in_fundamental_domain(g, tol=1e-9):
    """Membership predicate for canonical representatives."""
    g = np.asarray(g, dtype=float)
    z, theta = upper_half_plane(g)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    return (
        (z.real >= -0.5 - tol)
        & (z.real < 0.5 + tol)
        & (np.abs(z) >= 1.0 - tol)
        & (theta >= -tol)
        & (theta < np.pi + tol)
        & (np.abs(det - 1.0) <= 1e-12)
    )


# small set of lattice elements used to compare representatives near the
# boundary of F, where canonical choices can legitimately jump
_NEAR_IDENTITY = [
    np.array(m, dtype=float)
    for m in (
        [[1, 0], [0, 1]], [[1, 1], [0, 1]], [[1, -1], [0, 1]],
        [[0, -1], [1, 0]], [[0, 1], [-1, 0]], [[1, -1], [1, 0]],
        [[0, -1], [1, 1]], [[1, 1], [-1, 0]], [[0, 1], [-1, -1]],
        [[-1, 1], [-1, 0]], [[-1, 0], [1, -1]], [[1, 0], [1, 1]], [[1, 0], [-1, 1]],
    )
]


def coset_distance(g1, g2):
    """Frobenius distance between representatives, minimised over +-gamma for
    gamma in a fixed set of small lattice elements (handles boundary jumps)."""
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    best = None
    for gam in _NEAR_IDENTITY:
        for sign in (1.0, -1.0):
            d = np.linalg.norm(g1 - sign * (g2 @ gam), axis=(-2, -1))
            best = d if best is None else np.minimum(best, d)
    return best


# ---------------------------------------------------------------------------
# extended-precision scalar path
#
# The geodesic flow expands perturbations of the representative by up to
# e^{2|t|}, so double-precision orbits of length 20 carry O(1e-16 * e^40)
# errors.  Single points are therefore evolved in 320-bit arithmetic and carry
# their high-precision entries along; batches use the double kernels above.

import mpmath  # noqa: E402

_MP = mpmath.MPContext()
_MP.prec = 320


def mp_matrix(g):
    """Tuple (a, b, c, d) of high-precision entries of a 2x2 matrix."""
    g = np.asarray(g, dtype=float)
    return tuple(_MP.mpf(float(v)) for v in (g[0, 0], g[0, 1], g[1, 0], g[1, 1]))


def _mp_reduce_h(a, b, c, d, t=None):
    ctx = _MP
    for _ in range(MAX_REDUCTION_STEPS):
        den = c * c + d * d
        x = (a * c + b * d) / den
        y = 1 / den
        n = ctx.floor(x + ctx.mpf(0.5))
        if n != 0:
            a, b = a - n * c, b - n * d
            continue
        if x * x + y * y < 1:
            a, b, c, d = -c, -d, a, b
            continue
        break
    else:
        raise NumericInstabilityError("fundamental-domain reduction did not converge", t=t)
    den = c * c + d * d
    x = (a * c + b * d) / den
    y = 1 / den
    if x >= ctx.mpf(0.5):
        a, b = a - c, b - d
        x -= 1
    if x > 0 and x * x + y * y == 1:
        a, b, c, d = -c, -d, a, b
    theta = ctx.atan2(c, d)
    if theta < 0 or theta >= ctx.pi:
        a, b, c, d = -a, -b, -c, -d
    s = 1 / ctx.sqrt(a * d - b * c)
    return a * s, b * s, c * s, d * s


def mp_evolve(gm, kind, speed, t):
    """High-precision analogue of evolve_matrices for one point.

    `gm` is the (a, b, c, d) tuple of g; returns the tuple of the reduced
    representative of flow(speed*t) * g.
    """
    ctx = _MP
    ga, gb, gc, gd = gm
    a, b, c, d = gd, -gb, -gc, ga  # h = g^{-1}
    s = ctx.mpf(float(speed)) * ctx.mpf(float(t))
    nsteps = int(ctx.ceil(abs(s)))
    if nsteps == 0:
        a, b, c, d = _mp_reduce_h(a, b, c, d, t=float(t))
    else:
        ds = s / nsteps
        e = ctx.exp(ds)
        for _ in range(nsteps):
            if kind == GEODESIC:
                a, b, c, d = a / e, b * e, c / e, d * e
            else:
                b, d = b - a * ds, d - c * ds
            a, b, c, d = _mp_reduce_h(a, b, c, d, t=float(t))
    return (d, -b, -c, a)


def mp_to_array(gm):
    return np.array([[float(gm[0]), float(gm[1])], [float(gm[2]), float(gm[3])]])
