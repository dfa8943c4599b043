"""Concrete measurable flows.

Every flow here is already continuous (or piecewise continuous with
measure-zero discontinuity sets, for suspensions), so no topological model
needs to be built.  A flow has a parameter dimension ``D`` and acts by
``evolve(x, t)`` with ``t`` of shape ``batch + (D,)`` (plain ``batch`` when
``D == 1``).
"""

import math

import numpy as np

from . import sl2
from .errors import ConfigurationError, ContractViolation, InputError
from .points import ProductPoint, Sl2Point, SuspensionPoint, TorusPoint, broadcast_point


def _wrap(a):
    a = np.mod(a, 1.0)
    # x mod 1 can round up to exactly 1.0 for tiny negative x
    return np.where(a >= 1.0, 0.0, a)


# ---------------------------------------------------------------------------
# discrete invertible base maps


class PermutationMap:
    """Bijection of {0, ..., n-1} given by a table: state s -> table[s]."""

    def __init__(self, table):
        table = np.asarray(table, dtype=np.int64)
        n = table.size
        if table.ndim != 1 or not np.array_equal(np.sort(table), np.arange(n)):
            raise ContractViolation("permutation table must be a bijection of range(n)")
        self.table = table
        self.n_states = n
        # cycle decomposition for O(1) powers
        cycle_of = np.full(n, -1, dtype=np.int64)
        pos = np.zeros(n, dtype=np.int64)
        cycles = []
        for s in range(n):
            if cycle_of[s] >= 0:
                continue
            cyc = [s]
            cycle_of[s] = len(cycles)
            nxt = table[s]
            while nxt != s:
                pos[nxt] = len(cyc)
                cycle_of[nxt] = len(cycles)
                cyc.append(nxt)
                nxt = table[nxt]
            cycles.append(np.array(cyc, dtype=np.int64))
        self.cycles = cycles
        self.cycle_of = cycle_of
        self.position = pos
        self._flat = np.concatenate(cycles)
        self._offset = np.cumsum([0] + [len(c) for c in cycles])[:-1]
        self._length = np.array([len(c) for c in cycles], dtype=np.int64)

    @classmethod
    def cycle(cls, n, shift=1):
        return cls((np.arange(n) + shift) % n)

    def power(self, state, k):
        """T^k applied to state(s); k may be any (broadcastable) integer array.

        Python ints of arbitrary size are accepted for scalar k.
        """
        state = np.asarray(state, dtype=np.int64)
        if isinstance(k, (int, np.integer)) and not isinstance(k, bool):
            k = int(k)
            cyc = self.cycle_of[state]
            length = self._length[cyc]
            p = (self.position[state] + (k % length)) % length
            return self._flat[self._offset[cyc] + p]
        k = np.asarray(k)
        if k.dtype.kind == "f":
            if not np.all(k == np.floor(k)):
                raise ContractViolation("permutation powers must be integers")
            k = k.astype(np.int64)
        cyc = self.cycle_of[state]
        length = self._length[cyc]
        p = np.mod(self.position[state] + np.mod(k, length), length)
        return self._flat[self._offset[cyc] + p]

    def __call__(self, state):
        return self.table[np.asarray(state, dtype=np.int64)]

    def to_dict(self):
        return {"kind": "permutation", "table": [int(v) for v in self.table]}


def _split26(v):
    """v = hi + lo with hi carrying the top 26 significant bits."""
    c = v * 134217729.0  # 2^27 + 1 (Veltkamp)
    hi = c - (c - v)
    return hi, v - hi


def frac_mul(k, a):
    """frac(k * a) for integer k (|k| < 2^53) and double a, with error of a
    few ulps of 1 instead of ulps of k*a."""
    k = np.asarray(k, dtype=np.int64)
    k_hi = (k >> 26).astype(float) * 67108864.0
    k_lo = (k & ((1 << 26) - 1)).astype(float)
    a_hi, a_lo = _split26(np.asarray(a, dtype=float))
    out = np.zeros(np.broadcast_shapes(k.shape, np.shape(a)))
    for u in (k_hi, k_lo):
        for w in (a_hi, a_lo):
            out = np.mod(out + np.mod(u * w, 1.0), 1.0)
    return _wrap(out)


class RotationMap:
    """Rotation of the torus [0,1)^dim by the vector `angle`."""

    def __init__(self, angle):
        angle = np.atleast_1d(np.asarray(angle, dtype=float))
        if angle.ndim != 1 or not np.all(np.isfinite(angle)):
            raise ContractViolation("rotation angle must be a finite vector")
        self.angle = angle
        self.dim = angle.size

    def power(self, coords, k):
        coords = np.asarray(coords, dtype=float)
        k = np.asarray(k)
        if k.dtype.kind in "iu":
            return _wrap(coords + frac_mul(k[..., None], self.angle))
        return _wrap(coords + k.astype(float)[..., None] * self.angle)

    def __call__(self, coords):
        return self.power(coords, 1)

    def to_dict(self):
        return {"kind": "rotation", "angle": [float(v) for v in self.angle]}


def base_map_from_dict(d):
    kind = d.get("kind")
    if kind == "permutation":
        return PermutationMap(d["table"])
    if kind == "rotation":
        return RotationMap(d["angle"])
    raise ConfigurationError(f"unknown base map kind {kind!r}")


def maps_commute(maps):
    """Exhaustive commutation check for permutation maps (rotations always commute)."""
    perms = [m for m in maps if isinstance(m, PermutationMap)]
    if perms and len(perms) != len(maps):
        return False
    for i, a in enumerate(perms):
        for b in perms[i + 1:]:
            if a.n_states != b.n_states or not np.array_equal(a.table[b.table], b.table[a.table]):
                return False
    if not perms:
        dims = {m.dim for m in maps}
        return len(dims) <= 1
    return True


# ---------------------------------------------------------------------------
# flows


class Flow:
    """Base class.  Subclasses implement `_evolve(x, t)` on validated input."""

    D = 1
    family = None

    def param(self, t):
        """Validate a parameter array; returns float array of shape batch (+ (D,))."""
        t = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(t)):
            raise InputError("flow parameter must be finite")
        if self.D > 1 and (t.ndim == 0 or t.shape[-1] != self.D):
            raise ContractViolation(f"flow takes {self.D} parameters, got shape {t.shape}")
        return t

    def param_batch_shape(self, t):
        return t.shape if self.D == 1 else t.shape[:-1]

    def evolve(self, x, t):
        t = self.param(t)
        self.check_point(x)
        shape = np.broadcast_shapes(x.batch_shape, self.param_batch_shape(t))
        if x.batch_shape != shape:
            x = broadcast_point(x, shape)
        tshape = shape if self.D == 1 else shape + (self.D,)
        return self._evolve(x, np.broadcast_to(t, tshape))

    def orbit(self, x, times):
        """Points T^{times[j]} x for a batch x of shape (n,); result batch (m, n).

        `times` is ordered along a quadrature sweep; flows whose evolution is
        numerically path dependent (SL2) step sequentially between entries.
        """
        times = self.param(times)
        if x.batch_shape == ():
            return self.evolve(x, times)
        tt = times[:, None] if self.D == 1 else times[:, None, :]
        return self.evolve(x, tt)

    def check_point(self, x):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class KroneckerFlow(Flow):
    """Translation flow x -> x + V t on [0,1)^dim.

    `velocity` has shape (dim,) for a one-parameter flow or (dim, D) for a
    D-parameter group (column j is the velocity of parameter j).
    """

    family = "kronecker"

    def __init__(self, velocity):
        v = np.asarray(velocity, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ContractViolation("velocity must be a finite (dim,) or (dim, D) array")
        self.velocity = v
        self.dim, self.D = v.shape

    @property
    def alpha(self):
        return self.velocity[:, 0] if self.D == 1 else self.velocity

    def check_point(self, x):
        if not isinstance(x, TorusPoint) or x.dim != self.dim:
            raise ContractViolation(f"Kronecker flow needs TorusPoint of dim {self.dim}")

    def _evolve(self, x, t):
        shift = t[..., None] * self.velocity[:, 0] if self.D == 1 else t @ self.velocity.T
        return TorusPoint(_wrap(x.coords + shift))

    def to_dict(self):
        v = self.velocity[:, 0] if self.D == 1 else self.velocity
        return {"family": "kronecker", "velocity": v.tolist()}


class MultiSuspensionFlow(Flow):
    """Unit-roof suspension of d commuting maps: Y = X x [0,1)^d with
    S^{(t_1..t_d)}(x, z) = (T_1^{floor(t_1+z_1)} ... T_d^{floor(t_d+z_d)} x, (t+z) mod 1)."""

    family = "multi_suspension"

    def __init__(self, base_maps):
        base_maps = list(base_maps)
        if not base_maps:
            raise ContractViolation("need at least one base map")
        if not maps_commute(base_maps):
            raise ContractViolation("base maps do not commute")
        self.base_maps = base_maps
        self.D = len(base_maps)
        self.finite = isinstance(base_maps[0], PermutationMap)
        self.n_states = base_maps[0].n_states if self.finite else None

    def check_point(self, x):
        if not isinstance(x, SuspensionPoint) or x.fiber.shape[-1] != self.D:
            raise ContractViolation(f"suspension flow needs SuspensionPoint with {self.D} fiber coords")
        if x.finite_base != self.finite:
            raise ContractViolation("point base type does not match the suspension base")
        if self.finite and x.base.size and (x.base.min() < 0 or x.base.max() >= self.n_states):
            raise ContractViolation("base state out of range")

    def _evolve(self, x, t):
        tt = t[..., None] if self.D == 1 else t
        s = x.fiber + tt
        k = np.floor(s)
        fiber = _wrap(s - k)
        if self.finite:
            base = x.base
            for i, m in enumerate(self.base_maps):
                base = m.power(base, k[..., i].astype(np.int64))
        else:
            coords = x.base.coords
            for i, m in enumerate(self.base_maps):
                coords = m.power(coords, k[..., i])
            base = TorusPoint(coords)
        return SuspensionPoint(base, fiber)

    def to_dict(self):
        return {"family": "multi_suspension", "base_maps": [m.to_dict() for m in self.base_maps]}


class SuspensionFlow(MultiSuspensionFlow):
    """Unit-roof suspension (y, s) -> (S^{floor(t+s)} y, (t+s) mod 1)."""

    family = "suspension"

    def __init__(self, base):
        super().__init__([base])
        self.base = base

    def to_dict(self):
        return {"family": "suspension", "base": self.base.to_dict()}


class Sl2Flow(Flow):
    """Geodesic (a(ct) x) or horocycle (u(ct) x) flow on SL2(R)/SL2(Z)."""

    family = "sl2"

    def __init__(self, kind, speed=1.0):
        if kind not in ("geodesic", "horocycle"):
            raise ContractViolation("kind must be 'geodesic' or 'horocycle'")
        speed = float(speed)
        if not math.isfinite(speed):
            raise ContractViolation("speed must be finite")
        self.kind = kind
        self.speed = speed
        self._k = sl2.GEODESIC if kind == "geodesic" else sl2.HOROCYCLE

    def check_point(self, x):
        if not isinstance(x, Sl2Point):
            raise ContractViolation("SL2 flow needs an Sl2Point")

    def evolve(self, x, t):
        t = self.param(t)
        self.check_point(x)
        if x.batch_shape == () and t.shape == ():
            gm = x.hp if x.hp is not None else sl2.mp_matrix(x.matrix)
            out = sl2.mp_evolve(gm, self._k, self.speed, float(t))
            return Sl2Point(sl2.mp_to_array(out), out)
        return Sl2Point(sl2.evolve_matrices(x.matrix, self._k, self.speed, t))

    def orbit(self, x, times):
        times = self.param(times)
        g = x.matrix.reshape((-1, 2, 2))
        out = sl2.walk_matrices(g, self._k, self.speed, times)
        return Sl2Point(out.reshape((times.shape[0],) + x.batch_shape + (2, 2)))

    def to_dict(self):
        return {"family": "sl2", "kind": self.kind, "speed": self.speed}


class ProductFlow(Flow):
    """Flows on the factors of a product space, driven by shared parameters.

    `routing` is a (sum of component D's) x D matrix; component j receives the
    parameter R_j t where R_j is its block of rows.  A zero block leaves that
    factor fixed, which is how independent flows T_1, ..., T_d, S are placed on
    one product space.
    """

    family = "product"

    def __init__(self, components, routing):
        self.components = list(components)
        R = np.asarray(routing, dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        need = sum(c.D for c in self.components)
        if R.ndim != 2 or R.shape[0] != need:
            raise ContractViolation(f"routing must have {need} rows")
        self.routing = R
        self.D = R.shape[1]
        self._blocks = np.cumsum([0] + [c.D for c in self.components])

    def check_point(self, x):
        if not isinstance(x, ProductPoint) or len(x.components) != len(self.components):
            raise ContractViolation("product flow needs a ProductPoint with matching factors")
        for c, p in zip(self.components, x.components):
            c.check_point(p)

    def _component_params(self, t):
        tt = t[..., None] if self.D == 1 else t
        full = tt @ self.routing.T
        out = []
        for j, c in enumerate(self.components):
            blk = full[..., self._blocks[j]:self._blocks[j + 1]]
            out.append(blk[..., 0] if c.D == 1 else blk)
        return out

    def _evolve(self, x, t):
        params = self._component_params(t)
        return ProductPoint(tuple(c.evolve(p, s) for c, p, s in zip(self.components, x.components, params)))

    def orbit(self, x, times):
        times = self.param(times)
        params = self._component_params(times)
        return ProductPoint(tuple(c.orbit(p, s) for c, p, s in zip(self.components, x.components, params)))

    def to_dict(self):
        return {
            "family": "product",
            "components": [c.to_dict() for c in self.components],
            "routing": self.routing.tolist(),
        }


def flow_from_dict(d):
    fam = d.get("family")
    try:
        if fam == "kronecker":
            return KroneckerFlow(d["velocity"])
        if fam == "suspension":
            return SuspensionFlow(base_map_from_dict(d["base"]))
        if fam == "multi_suspension":
            return MultiSuspensionFlow([base_map_from_dict(m) for m in d["base_maps"]])
        if fam == "sl2":
            return Sl2Flow(d["kind"], d.get("speed", 1.0))
        if fam == "product":
            return ProductFlow([flow_from_dict(c) for c in d["components"]], d["routing"])
    except KeyError as exc:
        raise ConfigurationError(f"flow {fam!r} missing key {exc}") from None
    raise ConfigurationError(f"unknown flow family {fam!r}")


# ---------------------------------------------------------------------------
# operation-level entry points


def evolve(flow, x, t):
    """T^t x."""
    return flow.evolve(x, t)


def suspension_evolve(spec, point, t):
    if not isinstance(spec, SuspensionFlow):
        raise ContractViolation("suspension_evolve needs a SuspensionFlow")
    return spec.evolve(point, t)


def multi_suspension_evolve(spec, point, t):
    if not isinstance(spec, MultiSuspensionFlow):
        raise ContractViolation("multi_suspension_evolve needs a MultiSuspensionFlow")
    return spec.evolve(point, t)


def sl2_evolve(spec, g, t):
    if not isinstance(spec, Sl2Flow):
        raise ContractViolation("sl2_evolve needs an Sl2Flow")
    return spec.evolve(g, t)
