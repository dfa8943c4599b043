"""Phase points.

Every point type may carry leading batch dimensions: a TorusPoint with
coords of shape (n, dim) is a batch of n points.  Single points are the
batch-free case.  Points are immutable; the arrays they hold are made
read-only on construction.
"""

from dataclasses import dataclass, field

import numpy as np

from . import sl2
from .errors import ContractViolation


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _check_unit(a, what):
    if a.size and (not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() >= 1.0):
        raise ContractViolation(f"{what} must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class TorusPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coords)
        if c.ndim == 0:
            raise ContractViolation("torus coords need at least one axis")
        _check_unit(c, "torus coords")
        object.__setattr__(self, "coords", c)

    @property
    def batch_shape(self):
        return self.coords.shape[:-1]

    @property
    def dim(self):
        return self.coords.shape[-1]

    def __getitem__(self, idx):
        return TorusPoint(self.coords[idx])


@dataclass(frozen=True, eq=False)
class SuspensionPoint:
    """Base state plus fiber height(s).

    `base` is an integer array of state ids (finite bases) or a TorusPoint
    (rotation bases); `fiber` has shape batch + (d,).
    """

    base: object
    fiber: np.ndarray

    def __post_init__(self):
        fiber = _frozen(self.fiber)
        if fiber.ndim == 0:
            fiber = _frozen(fiber.reshape(1))
        _check_unit(fiber, "fiber coords")
        if not isinstance(self.base, TorusPoint):
            base = _frozen(self.base, dtype=np.int64)
            if base.shape != fiber.shape[:-1]:
                raise ContractViolation("base and fiber batch shapes differ")
            object.__setattr__(self, "base", base)
        elif self.base.batch_shape != fiber.shape[:-1]:
            raise ContractViolation("base and fiber batch shapes differ")
        object.__setattr__(self, "fiber", fiber)

    @property
    def batch_shape(self):
        return self.fiber.shape[:-1]

    @property
    def finite_base(self):
        return not isinstance(self.base, TorusPoint)

    def __getitem__(self, idx):
        return SuspensionPoint(self.base[idx], self.fiber[idx])


@dataclass(frozen=True, eq=False)
class Sl2Point:
    """Coset g*SL2(Z) stored by its canonical representative `matrix`.

    Batch-free points also keep 320-bit entries (`hp`) so that long geodesic
    evolutions of single points stay accurate; see ergoflow.sl2.
    """

    matrix: np.ndarray
    hp: tuple = field(default=None, repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape[-2:] != (2, 2):
            raise ContractViolation("Sl2Point needs 2x2 matrices")
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        if np.any(np.abs(det - 1.0) > 1e-12):
            raise ContractViolation("Sl2Point matrices must have determinant 1")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_matrix(cls, g):
        """Reduce arbitrary determinant-one matrices to canonical points."""
        g = np.asarray(g, dtype=float)
        if g.ndim == 2:
            hp = sl2.mp_evolve(sl2.mp_matrix(g), sl2.GEODESIC, 0.0, 0.0)
            return cls(sl2.mp_to_array(hp), hp)
        return cls(sl2.reduce_matrices(g))

    @property
    def batch_shape(self):
        return self.matrix.shape[:-2]

    def __getitem__(self, idx):
        return Sl2Point(self.matrix[idx])


@dataclass(frozen=True, eq=False)
class ProductPoint:
    """Point of a product space; components share one batch shape."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        shapes = {c.batch_shape for c in comps}
        if len(shapes) > 1:
            raise ContractViolation("product components have different batch shapes")
        object.__setattr__(self, "components", comps)

    @property
    def batch_shape(self):
        return self.components[0].batch_shape

    def __getitem__(self, idx):
        return ProductPoint(tuple(c[idx] for c in self.components))


PhasePoint = (TorusPoint, SuspensionPoint, Sl2Point, ProductPoint)


def broadcast_point(x, shape):
    """Broadcast a point to the given batch shape (read-only views)."""
    shape = tuple(shape)
    if isinstance(x, TorusPoint):
        return TorusPoint(np.broadcast_to(x.coords, shape + (x.dim,)))
    if isinstance(x, SuspensionPoint):
        d = x.fiber.shape[-1]
        base = broadcast_point(x.base, shape) if not x.finite_base else np.broadcast_to(x.base, shape)
        return SuspensionPoint(base, np.broadcast_to(x.fiber, shape + (d,)))
    if isinstance(x, Sl2Point):
        return Sl2Point(np.broadcast_to(x.matrix, shape + (2, 2)))
    if isinstance(x, ProductPoint):
        return ProductPoint(tuple(broadcast_point(c, shape) for c in x.components))
    raise ContractViolation(f"not a phase point: {type(x).__name__}")


def _wrap_dist(a, b):
    d = np.abs(a - b) % 1.0
    return np.minimum(d, 1.0 - d)


def distance(x, y):
    """Phase-space metric (per batch element).

    Torus: max over coordinates of the wrap distance.  Suspension: wrap
    distance on fibers plus 1 if the base states differ (finite bases) or the
    torus distance of rotation bases.  SL2: Frobenius distance of reduced
    representatives, minimised over nearby lattice elements.  Products: max
    over components.
    """
    if type(x) is not type(y):
        raise ContractViolation("points live in different spaces")
    if isinstance(x, TorusPoint):
        return _wrap_dist(x.coords, y.coords).max(axis=-1)
    if isinstance(x, SuspensionPoint):
        fib = _wrap_dist(x.fiber, y.fiber).max(axis=-1)
        if x.finite_base:
            return fib + (np.asarray(x.base) != np.asarray(y.base))
        return np.maximum(fib, distance(x.base, y.base))
    if isinstance(x, Sl2Point):
        return sl2.coset_distance(x.matrix, y.matrix)
    if isinstance(x, ProductPoint):
        return np.max([distance(a, b) for a, b in zip(x.components, y.components)], axis=0)
    raise ContractViolation(f"not a phase point: {type(x).__name__}")
