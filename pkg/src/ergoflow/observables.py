"""Observables as small expression trees over phase coordinates.

Each node knows how to evaluate itself on a (batched) phase point, a bound on
its sup norm, its mean against the invariant measure when that is available
in closed form, and a rough oscillation rate along a given flow, used to size
quadrature panels.
"""

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy import integrate

from . import sl2
from .errors import ConfigurationError, ContractViolation
from .flows import KroneckerFlow, MultiSuspensionFlow, ProductFlow, Sl2Flow
from .points import ProductPoint, Sl2Point, SuspensionPoint, TorusPoint

# cusp truncation height for Haar measure on SL2(R)/SL2(Z)
Y_MAX = 1000.0
FUNDAMENTAL_AREA = math.pi / 3.0 - 1.0 / Y_MAX


def e(x):
    """e(x) = exp(2 pi i x)."""
    return np.exp(2j * np.pi * np.asarray(x))


@dataclass(frozen=True)
class Term:
    """coef * e(tor . x) * e(fib . z) * table[state]; None means absent factor."""

    coef: complex
    tor: tuple = None
    fib: tuple = None
    table: tuple = None

    def __mul__(self, other):
        def add(a, b):
            if a is None:
                return b
            if b is None:
                return a
            if len(a) != len(b):
                raise ContractViolation("frequency vectors of different lengths")
            return tuple(int(u) + int(v) for u, v in zip(a, b))

        if self.table is not None and other.table is not None:
            if len(self.table) != len(other.table):
                raise ContractViolation("tables over different state spaces")
            tab = tuple(u * v for u, v in zip(self.table, other.table))
        else:
            tab = self.table if self.table is not None else other.table
        return Term(self.coef * other.coef, add(self.tor, other.tor), add(self.fib, other.fib), tab)

    def conj(self):
        neg = lambda v: None if v is None else tuple(-int(u) for u in v)  # noqa: E731
        tab = None if self.table is None else tuple(complex(v).conjugate() for v in self.table)
        return Term(complex(self.coef).conjugate(), neg(self.tor), neg(self.fib), tab)

    def mean(self):
        if self.tor is not None and any(self.tor):
            return 0j
        if self.fib is not None and any(self.fib):
            return 0j
        m = complex(self.coef)
        if self.table is not None:
            m *= math.fsum(complex(v).real for v in self.table) / len(self.table) + 1j * (
                math.fsum(complex(v).imag for v in self.table) / len(self.table)
            )
        return m


class Observable:
    """Base node.  Subclasses set `sup_norm` and implement the hooks below."""

    sup_norm = 0.0

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        raise NotImplementedError

    def terms(self):
        """Finite exponential expansion, or None when the node has none."""
        return None

    @property
    def exact_integral(self):
        ts = self.terms()
        if ts is None:
            return None
        return complex(sum(t.mean() for t in ts))

    def conj(self):
        raise NotImplementedError

    def rate(self, flow):
        """(cycles per unit parameter, per flow parameter; discontinuous flag)."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    # convenience algebra
    def __mul__(self, other):
        return Product([self, other])

    def __add__(self, other):
        return Sum([self, other], [1.0, 1.0])


def _zeros(flow):
    return np.zeros(flow.D)


class Constant(Observable):
    def __init__(self, c):
        self.c = complex(c)
        self.sup_norm = abs(self.c)

    def evaluate(self, x):
        return np.full(x.batch_shape, self.c, dtype=complex)

    def terms(self):
        return [Term(self.c)]

    def conj(self):
        return Constant(self.c.conjugate())

    def rate(self, flow):
        return _zeros(flow), False

    def to_dict(self):
        return {"kind": "constant", "re": self.c.real, "im": self.c.imag}


def _torus_coords(x):
    if isinstance(x, TorusPoint):
        return x.coords
    if isinstance(x, SuspensionPoint) and not x.finite_base:
        return x.base.coords
    raise ContractViolation("torus character needs torus coordinates")


class TorusCharacter(Observable):
    """x -> e(k . x) on a torus, or on the rotation base of a suspension."""

    sup_norm = 1.0

    def __init__(self, k):
        self.k = tuple(int(v) for v in np.atleast_1d(k))

    def evaluate(self, x):
        c = _torus_coords(x)
        if c.shape[-1] != len(self.k):
            raise ContractViolation("frequency length differs from torus dimension")
        return e(c @ np.asarray(self.k, dtype=float))

    def terms(self):
        return [Term(1.0, tor=self.k)]

    def conj(self):
        return TorusCharacter([-v for v in self.k])

    def rate(self, flow):
        if isinstance(flow, KroneckerFlow):
            return np.abs(np.asarray(self.k, dtype=float) @ flow.velocity), False
        if isinstance(flow, MultiSuspensionFlow) and not flow.finite:
            return _zeros(flow), any(self.k)
        raise ContractViolation("torus character on a flow without torus coordinates")

    def to_dict(self):
        return {"kind": "torus_character", "k": list(self.k)}


class FiberCharacter(Observable):
    """(y, z) -> e(k . z) on the fiber of a suspension."""

    sup_norm = 1.0

    def __init__(self, k):
        self.k = tuple(int(v) for v in np.atleast_1d(k))

    def evaluate(self, x):
        if not isinstance(x, SuspensionPoint):
            raise ContractViolation("fiber character needs a SuspensionPoint")
        if x.fiber.shape[-1] != len(self.k):
            raise ContractViolation("frequency length differs from fiber dimension")
        return e(x.fiber @ np.asarray(self.k, dtype=float))

    def terms(self):
        return [Term(1.0, fib=self.k)]

    def conj(self):
        return FiberCharacter([-v for v in self.k])

    def rate(self, flow):
        if not isinstance(flow, MultiSuspensionFlow):
            raise ContractViolation("fiber character on a non-suspension flow")
        # fiber i moves at unit speed under parameter i; it is continuous
        # across the roof because e(k z) is 1-periodic
        return np.abs(np.asarray(self.k, dtype=float)), False

    def to_dict(self):
        return {"kind": "fiber_character", "k": list(self.k)}


class BaseFunction(Observable):
    """(y, z) -> table[y] on a finite-base suspension."""

    def __init__(self, table):
        self.table = tuple(complex(v) for v in table)
        self._arr = np.array(self.table, dtype=complex)
        self.sup_norm = float(np.abs(self._arr).max()) if self.table else 0.0

    def evaluate(self, x):
        if not isinstance(x, SuspensionPoint) or not x.finite_base:
            raise ContractViolation("base function needs a finite-base SuspensionPoint")
        if x.base.size and x.base.max() >= len(self.table):
            raise ContractViolation("base state outside the table")
        return self._arr[x.base]

    def terms(self):
        return [Term(1.0, table=self.table)]

    def conj(self):
        return BaseFunction([v.conjugate() for v in self.table])

    def rate(self, flow):
        if not isinstance(flow, MultiSuspensionFlow):
            raise ContractViolation("base function on a non-suspension flow")
        return _zeros(flow), len(set(self.table)) > 1

    def to_dict(self):
        return {"kind": "base_function", "re": [v.real for v in self.table], "im": [v.imag for v in self.table]}


def _hyperbolic_distance(z, w):
    return np.arccosh(1.0 + np.abs(z - w) ** 2 / (2.0 * z.imag * w.imag))


def _bump_profile(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


class SmoothBump(Observable):
    """C-infinity bump of hyperbolic radius `width` around `center` in the
    modular fundamental domain, pulled back to SL2(R)/SL2(Z); peak value 1.

    The support must sit inside the interior of the fundamental domain so the
    function is continuous on the quotient.
    """

    sup_norm = 1.0

    def __init__(self, center, width):
        self.center = complex(center)
        self.width = float(width)
        x0, y0 = self.center.real, self.center.imag
        if y0 <= 0 or self.width <= 0:
            raise ContractViolation("bump needs Im(center) > 0 and width > 0")
        # hyperbolic distances to the three boundary geodesics of F
        gaps = [
            math.asinh(abs(x0 - 0.5) / y0),
            math.asinh(abs(x0 + 0.5) / y0),
            math.asinh(abs(abs(self.center) ** 2 - 1.0) / (2.0 * y0)),
        ]
        if abs(x0) >= 0.5 or abs(self.center) <= 1.0 or self.width >= min(gaps):
            raise ContractViolation("bump support must lie inside the fundamental domain")
        if y0 * math.exp(self.width) >= Y_MAX:
            raise ContractViolation("bump support reaches the cusp truncation")

    def evaluate(self, x):
        if not isinstance(x, Sl2Point):
            raise ContractViolation("smooth bump needs an Sl2Point")
        z, _ = sl2.upper_half_plane(x.matrix)
        return _bump_profile(_hyperbolic_distance(z, self.center) / self.width).astype(complex)

    def haar_integral(self):
        """Mean against normalised (truncated) Haar measure.

        The bump is radial in the hyperbolic metric, so its area integral is
        2 pi int_0^w profile(rho/w) sinh(rho) d rho.
        """
        val, _ = integrate.quad(
            lambda rho: _bump_profile(rho / self.width) * math.sinh(rho), 0.0, self.width,
            epsabs=1e-14, epsrel=1e-12, limit=200,
        )
        return 2.0 * math.pi * val / FUNDAMENTAL_AREA

    @property
    def exact_integral(self):
        return complex(self.haar_integral())

    def conj(self):
        return self

    def rate(self, flow):
        if not isinstance(flow, Sl2Flow):
            raise ContractViolation("smooth bump on a non-SL2 flow")
        # z moves at hyperbolic speed 2|c| (geodesic) or |c| (horocycle)
        v = (2.0 if flow.kind == "geodesic" else 1.0) * abs(flow.speed)
        return np.array([2.0 * v / self.width]), False

    def to_dict(self):
        return {"kind": "smooth_bump", "center": [self.center.real, self.center.imag], "width": self.width}


class OnComponent(Observable):
    """Evaluate `child` on factor `index` of a ProductPoint."""

    def __init__(self, index, child):
        self.index = int(index)
        self.child = child
        self.sup_norm = child.sup_norm

    def evaluate(self, x):
        if not isinstance(x, ProductPoint) or self.index >= len(x.components):
            raise ContractViolation("component reference outside the product point")
        return self.child.evaluate(x.components[self.index])

    @property
    def exact_integral(self):
        return self.child.exact_integral

    def conj(self):
        return OnComponent(self.index, self.child.conj())

    def rate(self, flow):
        if not isinstance(flow, ProductFlow):
            raise ContractViolation("component observable on a non-product flow")
        comp = flow.components[self.index]
        r, disc = self.child.rate(comp)
        block = flow.routing[flow._blocks[self.index]:flow._blocks[self.index + 1]]
        return np.abs(block).T @ r, disc

    def to_dict(self):
        return {"kind": "component", "index": self.index, "child": self.child.to_dict()}


class Product(Observable):
    def __init__(self, children):
        self.children = list(children)
        self.sup_norm = float(np.prod([c.sup_norm for c in self.children]))

    def evaluate(self, x):
        out = np.ones(x.batch_shape, dtype=complex)
        for c in self.children:
            out = out * c.evaluate(x)
        return out

    def terms(self):
        parts = [c.terms() for c in self.children]
        if any(p is None for p in parts):
            return None
        return reduce(lambda acc, p: [a * b for a in acc for b in p], parts, [Term(1.0)])

    @property
    def exact_integral(self):
        comps = [c for c in self.children if isinstance(c, OnComponent)]
        if comps and len(comps) == len(self.children) and len({c.index for c in comps}) == len(comps):
            vals = [c.exact_integral for c in comps]
            return None if any(v is None for v in vals) else complex(np.prod(vals))
        if any(isinstance(c, SmoothBump) for c in self.children):
            return None
        return Observable.exact_integral.fget(self)

    def conj(self):
        return Product([c.conj() for c in self.children])

    def rate(self, flow):
        total, disc = _zeros(flow), False
        for c in self.children:
            r, d = c.rate(flow)
            total, disc = total + r, disc or d
        return total, disc

    def to_dict(self):
        return {"kind": "product", "children": [c.to_dict() for c in self.children]}


class Sum(Observable):
    def __init__(self, children, weights=None):
        self.children = list(children)
        w = np.ones(len(self.children)) if weights is None else weights
        self.weights = [complex(v) for v in w]
        if len(self.weights) != len(self.children):
            raise ContractViolation("one weight per child")
        self.sup_norm = float(sum(abs(w) * c.sup_norm for w, c in zip(self.weights, self.children)))

    def evaluate(self, x):
        out = np.zeros(x.batch_shape, dtype=complex)
        for w, c in zip(self.weights, self.children):
            out = out + w * c.evaluate(x)
        return out

    def terms(self):
        out = []
        for w, c in zip(self.weights, self.children):
            ts = c.terms()
            if ts is None:
                return None
            out.extend(Term(w, None, None, None) * t for t in ts)
        return out

    @property
    def exact_integral(self):
        vals = [c.exact_integral for c in self.children]
        if any(v is None for v in vals):
            return None
        return complex(sum(w * v for w, v in zip(self.weights, vals)))

    def conj(self):
        return Sum([c.conj() for c in self.children], [w.conjugate() for w in self.weights])

    def rate(self, flow):
        total, disc = _zeros(flow), False
        for c in self.children:
            r, d = c.rate(flow)
            total, disc = np.maximum(total, r), disc or d
        return total, disc

    def to_dict(self):
        return {
            "kind": "sum",
            "children": [c.to_dict() for c in self.children],
            "weights_re": [w.real for w in self.weights],
            "weights_im": [w.imag for w in self.weights],
        }


class RealPart(Observable):
    def __init__(self, child):
        self.child = child
        self.sup_norm = child.sup_norm

    def evaluate(self, x):
        return self.child.evaluate(x).real.astype(complex)

    def terms(self):
        ts = self.child.terms()
        if ts is None:
            return None
        half = Term(0.5)
        return [half * t for t in ts] + [half * t.conj() for t in ts]

    @property
    def exact_integral(self):
        v = self.child.exact_integral
        return None if v is None else complex(v.real)

    def conj(self):
        return self

    def rate(self, flow):
        return self.child.rate(flow)

    def to_dict(self):
        return {"kind": "real_part", "child": self.child.to_dict()}


def eval_observable(obs, x):
    """Pointwise value f(x); |f(x)| <= obs.sup_norm."""
    return obs.evaluate(x)


def observable_from_dict(d):
    kind = d.get("kind")
    try:
        if kind == "constant":
            return Constant(complex(d.get("re", 0.0), d.get("im", 0.0)))
        if kind == "torus_character":
            return TorusCharacter(d["k"])
        if kind == "fiber_character":
            return FiberCharacter(d["k"])
        if kind == "base_function":
            im = d.get("im", [0.0] * len(d["re"]))
            return BaseFunction([complex(a, b) for a, b in zip(d["re"], im)])
        if kind == "smooth_bump":
            return SmoothBump(complex(*d["center"]), d["width"])
        if kind == "component":
            return OnComponent(d["index"], observable_from_dict(d["child"]))
        if kind == "product":
            return Product([observable_from_dict(c) for c in d["children"]])
        if kind == "sum":
            wr = d.get("weights_re", [1.0] * len(d["children"]))
            wi = d.get("weights_im", [0.0] * len(wr))
            return Sum([observable_from_dict(c) for c in d["children"]], [complex(a, b) for a, b in zip(wr, wi)])
        if kind == "real_part":
            return RealPart(observable_from_dict(d["child"]))
    except KeyError as exc:
        raise ConfigurationError(f"observable {kind!r} missing key {exc}") from None
    raise ConfigurationError(f"unknown observable kind {kind!r}")
