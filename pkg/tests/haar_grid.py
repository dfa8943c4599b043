"""Independent reference for Haar integrals of radial bumps on the modular surface.

Tensor Gauss-Legendre in (x, log y) over a box that contains the bump's
support, against dx dy / y^2, normalised by the truncated area pi/3 - 1/1000.
Shares no code with the library.
"""

import math

import numpy as np
from numpy.polynomial.legendre import leggauss

AREA = math.pi / 3.0 - 1.0 / 1000.0

# frozen outputs of grid_integral(..., n=400)
BUMP_14 = (1.4j, 0.3, 0.10951873713024841)
BUMP_15 = (0.05 + 1.5j, 0.25, 0.07596367504834078)


def bump(z, center, width):
    y0 = center.imag
    r = np.arccosh(1.0 + np.abs(z - center) ** 2 / (2.0 * z.imag * y0)) / width
    inside = r < 1.0
    out = np.zeros(r.shape)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def grid_integral(center, width, n=400):
    x0, y0 = center.real, center.imag
    half = y0 * math.sinh(width) * 1.0001
    lo, hi = math.log(y0) - 1.0001 * width, math.log(y0) + 1.0001 * width
    u, w = leggauss(n)
    X, WX = x0 + half * u, half * w
    L, WL = (lo + hi) / 2 + (hi - lo) / 2 * u, (hi - lo) / 2 * w
    Xg, Lg = np.meshgrid(X, L, indexing="ij")
    Y = np.exp(Lg)
    vals = bump(Xg + 1j * Y, center, width) / Y
    return float(np.einsum("i,j,ij->", WX, WL, vals)) / AREA
