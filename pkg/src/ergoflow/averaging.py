"""Continuous-time multiple ergodic averages by deterministic quadrature.

An `AveragePlan` fixes which polynomial average is meant (the forms are
named after the limit theorems they illustrate); `continuous_average` turns
a plan, a starting point and a `QuadratureConfig` into an `AverageCurve`.

Two integration routes exist.  The generic route evaluates the composed
integrand at composite Gauss-Legendre (or midpoint) nodes.  When every flow
is a Kronecker flow and every observable expands into finitely many torus
characters, the integrand is a finite sum of e(Phi(t)) with Phi a
generalized power sum, and the "phase" route integrates each panel's
quadratic Taylor model of Phi exactly (see `chirp`).  The second route is
what makes horizons like M = 1e4 with Q(t) = t^3 reachable on a desk.
"""

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .chirp import chirp_integral
from .errors import ConfigurationError, ContractViolation, EvaluationError, UnsupportedScaleError
from .flows import Flow, KroneckerFlow, MultiSuspensionFlow, flow_from_dict
from .observables import Observable, observable_from_dict
from .points import TorusPoint
from .poly import Polynomial, eval_poly

FORMS = ("ThmA", "ThmB", "ThmC", "ThmD1", "ThmD2", "Single")
RULES = ("auto", "gauss4", "midpoint", "phase")
DEFAULT_GRID = (100.0, 10 ** 2.5, 1000.0, 10 ** 3.5, 10000.0)
MAX_BOX_DIM = 3
BOX_NODE_BUDGET = 20_000_000
CHUNK = 1 << 16

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
# Gauss-Legendre 4-point remainder constant: (n!)^4 / ((2n+1) ((2n)!)^3)
_C4 = math.factorial(4) ** 4 / (9 * math.factorial(8) ** 3)
_LD_EPS = float(np.finfo(np.longdouble).eps)


def parse_rational(a):
    """Accept int, Fraction, "p/q" or a (p, q) pair; return (p, q) with q > 0."""
    if isinstance(a, (tuple, list)):
        if len(a) != 2:
            raise ConfigurationError("rational parameter must be a (p, q) pair")
        fr = Fraction(int(a[0]), int(a[1]))
    elif isinstance(a, float):
        if not a.is_integer():
            raise ConfigurationError("give non-integer rationals as (p, q) or 'p/q'")
        fr = Fraction(int(a))
    else:
        fr = Fraction(a)
    return fr.numerator, fr.denominator


@dataclass(frozen=True)
class TimeMap:
    """tau(t) = poly(t ** gamma)."""

    poly: Polynomial
    gamma: float = 1.0

    def __call__(self, t):
        s = t if self.gamma == 1.0 else np.power(t, self.gamma)
        return eval_poly(self.poly, s)

    def power_terms(self):
        return {self.gamma * m: q for m, q in enumerate(self.poly.coeffs) if q != 0.0}

    def deriv_bound(self, a, b):
        """Bound of |tau'| on [a, b]; each term is monotone in t."""
        tot = 0.0
        for p, q in self.power_terms().items():
            if p == 0.0:
                continue
            ends = [b ** (p - 1.0)]
            if a > 0.0 or p >= 1.0:
                ends.append(a ** (p - 1.0) if a > 0.0 else (1.0 if p == 1.0 else 0.0))
            else:
                return math.inf
            tot += abs(q) * p * max(ends)
        return tot


def _tm(coeffs, gamma=1.0):
    return TimeMap(Polynomial.parse(coeffs), float(gamma))


@dataclass(frozen=True)
class AveragePlan:
    """Which average to compute.

    flows / observables by form:
      ThmA, ThmB : (T, S), (f1, f2, g)        f1(T^{t^a}) f2(T^{a t^al}) g(S^{Q(t^be)})
      ThmC       : (T, S), (f, g)             f(T^{|t|}) g(S^{|t|^2 + c l.t}), t in a box
      ThmD1      : (T_1..T_d, S), (f_1..f_d, g) with S a 2-parameter flow
      ThmD2      : (S,), (f, g)               f(S^{(0, c t^be)}) g(S^{(Q(t^be), t^be)})
      Single     : (T,), (f,)                 f(T^{Q(t^al)})
    `a` is kept as an exact (p, q) pair.
    """

    form: str
    flows: tuple
    observables: tuple
    Q: Optional[Polynomial] = None
    a: tuple = (1, 1)
    alpha: tuple = (1.0,)
    beta: float = 1.0
    c: float = 0.0
    l: tuple = ()

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if self.form not in FORMS:
            raise ConfigurationError(f"unknown plan form {self.form!r}")
        set_("flows", tuple(self.flows))
        set_("observables", tuple(self.observables))
        if self.Q is not None:
            set_("Q", Polynomial.parse(self.Q))
        set_("a", parse_rational(self.a))
        set_("alpha", tuple(float(v) for v in np.atleast_1d(self.alpha)))
        set_("beta", float(self.beta))
        set_("c", float(self.c))
        set_("l", tuple(int(v) for v in self.l))
        self._validate()

    def _validate(self):
        nf, no = len(self.flows), len(self.observables)
        if not all(isinstance(f, Flow) for f in self.flows):
            raise ConfigurationError("flows must be Flow instances")
        if not all(isinstance(o, Observable) for o in self.observables):
            raise ConfigurationError("observables must be Observable instances")
        if any(v <= 0 for v in self.alpha) or self.beta <= 0:
            raise ConfigurationError("exponents must be positive")
        need_q = self.form in ("ThmA", "ThmB", "ThmD1", "ThmD2", "Single")
        if need_q and (self.Q is None or self.Q.degree < 1):
            raise ConfigurationError(f"{self.form} needs a non-constant polynomial Q")
        f = self.form
        if f in ("ThmA", "ThmB"):
            if nf != 2 or no != 3:
                raise ConfigurationError(f"{f} needs flows (T, S) and observables (f1, f2, g)")
            if any(fl.D != 1 for fl in self.flows):
                raise ConfigurationError(f"{f} flows must be one-parameter")
            if f == "ThmA" and (self.alpha != (1.0,) or self.beta != 1.0):
                raise ConfigurationError("ThmA has unit exponents; use ThmB")
        elif f == "ThmC":
            if nf != 2 or no != 2:
                raise ConfigurationError("ThmC needs flows (T, S) and observables (f, g)")
            if any(fl.D != 1 for fl in self.flows):
                raise ConfigurationError("ThmC flows must be one-parameter")
            if len(self.l) < 1:
                raise ConfigurationError("ThmC needs the linear form coefficients l (k = len(l))")
        elif f == "ThmD1":
            d = nf - 1
            if d < 1 or no != nf or len(self.alpha) != d:
                raise ConfigurationError("ThmD1 needs d flows T_j, one S, d+1 observables and d exponents")
            if any(fl.D != 1 for fl in self.flows[:-1]) or self.flows[-1].D != 2:
                raise ConfigurationError("ThmD1 needs one-parameter T_j and a two-parameter S")
        elif f == "ThmD2":
            if nf != 1 or no != 2 or self.flows[0].D != 2:
                raise ConfigurationError("ThmD2 needs one two-parameter flow S and observables (f, g)")
        elif f == "Single":
            if nf != 1 or no != 1 or self.flows[0].D != 1 or len(self.alpha) != 1:
                raise ConfigurationError("Single needs one one-parameter flow and one observable")

    # -- structure -----------------------------------------------------------

    @property
    def k(self):
        return len(self.l) if self.form == "ThmC" else 1

    @property
    def a_value(self):
        return self.a[0] / self.a[1]

    def check_scale(self):
        if self.form == "ThmC" and self.k > MAX_BOX_DIM:
            raise UnsupportedScaleError(f"unsupported-scale: box dimension k={self.k} exceeds {MAX_BOX_DIM}")

    def factors(self):
        """(observable, flow, [TimeMap per flow parameter]) for one-parameter forms."""
        f, obs, fl = self.form, self.observables, self.flows
        t = (0.0, 1.0)
        if f in ("ThmA", "ThmB"):
            al = self.alpha[0]
            return [
                (obs[0], fl[0], [_tm(t, al)]),
                (obs[1], fl[0], [_tm((0.0, self.a_value), al)]),
                (obs[2], fl[1], [TimeMap(self.Q, self.beta)]),
            ]
        if f == "ThmD1":
            out = [(o, T, [_tm(t, al)]) for o, T, al in zip(obs[:-1], fl[:-1], self.alpha)]
            out.append((obs[-1], fl[-1], [TimeMap(self.Q, self.beta), _tm(t, self.beta)]))
            return out
        if f == "ThmD2":
            S = fl[0]
            return [
                (obs[0], S, [_tm(()), _tm((0.0, self.c), self.beta)]),
                (obs[1], S, [TimeMap(self.Q, self.beta), _tm(t, self.beta)]),
            ]
        if f == "Single":
            return [(obs[0], fl[0], [TimeMap(self.Q, self.alpha[0])])]
        if f == "ThmC" and self.k == 1:
            return [
                (obs[0], fl[0], [_tm(t)]),
                (obs[1], fl[1], [_tm((0.0, self.c * self.l[0], 1.0))]),
            ]
        raise ConfigurationError("box plans with k > 1 have no one-parameter factorization")

    @property
    def sup_bound(self):
        return float(np.prod([o.sup_norm for o in self.observables]))

    def to_dict(self):
        d = {
            "form": self.form,
            "flows": [f.to_dict() for f in self.flows],
            "observables": [o.to_dict() for o in self.observables],
            "a": list(self.a),
            "alpha": list(self.alpha),
            "beta": self.beta,
            "c": self.c,
            "l": list(self.l),
        }
        if self.Q is not None:
            d["Q"] = self.Q.to_list()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            form=d["form"],
            flows=[flow_from_dict(f) for f in d["flows"]],
            observables=[observable_from_dict(o) for o in d["observables"]],
            Q=d.get("Q"),
            a=d.get("a", (1, 1)),
            alpha=d.get("alpha", (1.0,)),
            beta=d.get("beta", 1.0),
            c=d.get("c", 0.0),
            l=d.get("l", ()),
        )

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def conj(self):
        """Same plan with every observable conjugated."""
        return AveragePlan(self.form, self.flows, [o.conj() for o in self.observables], self.Q,
                           self.a, self.alpha, self.beta, self.c, self.l)


@dataclass(frozen=True)
class QuadratureConfig:
    """step=None selects the auto-tuned panel width (cap `max_step`,
    at most 0.2 cycles of the integrand per panel)."""

    step: Optional[float] = None
    rule: str = "auto"
    M_grid: tuple = DEFAULT_GRID
    box_grid: Optional[tuple] = None
    max_step: float = 0.05
    phase_tol: float = 1e-7
    workers: int = 1

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown quadrature rule {self.rule!r}")
        grid = tuple(float(m) for m in self.M_grid)
        if not grid or any(m <= 0 for m in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("M_grid must be positive and increasing")
        object.__setattr__(self, "M_grid", grid)
        if self.box_grid is not None:
            object.__setattr__(self, "box_grid", tuple(tuple(float(v) for v in b) for b in self.box_grid))
        if self.step is not None:
            if not self.step > 0:
                raise ConfigurationError("step must be positive")
            if self.step > grid[0] / 10.0:
                raise ConfigurationError("fewer than 10 quadrature panels per horizon")

    def with_grid(self, grid):
        d = dict(self.__dict__)
        d["M_grid"] = tuple(grid)
        if self.step is not None and self.step > min(grid) / 10.0:
            raise ConfigurationError("fewer than 10 quadrature panels per horizon")
        return QuadratureConfig(**d)

    def to_dict(self):
        d = dict(self.__dict__)
        d["M_grid"] = list(self.M_grid)
        if d["box_grid"] is not None:
            d["box_grid"] = [list(b) for b in d["box_grid"]]
        return {k: v for k, v in d.items() if v is not None}


@dataclass
class AverageCurve:
    """A(M) on a horizon grid; horizons are floats, or tuples for boxes."""

    horizons: list
    values: np.ndarray
    errors: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.horizons)

    @property
    def tail(self):
        return complex(self.values[-1])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = len(self.horizons[0]) if isinstance(self.horizons[0], tuple) else 1
        head = ["M"] if k == 1 else [f"M{j + 1}" for j in range(k)]
        w.writerow(head + ["re", "im", "err_estimate"])
        for h, v, e in zip(self.horizons, self.values, self.errors):
            hs = list(h) if isinstance(h, tuple) else [h]
            w.writerow([f"{u:.17g}" for u in hs] + [f"{v.real:.17g}", f"{v.imag:.17g}", f"{e:.17g}"])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({
            "horizons": [list(h) if isinstance(h, tuple) else h for h in self.horizons],
            "re": [float(v.real) for v in self.values],
            "im": [float(v.imag) for v in self.values],
            "err_estimate": [float(e) for e in self.errors],
            "metadata": self.metadata,
        }, sort_keys=True, indent=1, default=str)


# ---------------------------------------------------------------------------
# helpers shared by both routes


def _csum(z):
    z = np.asarray(z)
    return complex(math.fsum(z.real), math.fsum(z.imag))


def _frac_exponent(factors):
    """Smallest positive exponent below 1 among the time maps, or None."""
    ps = [p for _, _, tms in factors for tm in tms for p in tm.power_terms() if 0 < p < 1]
    return min(ps) if ps else None


def _sub_power(gmin):
    # t = h0 v^q turns t^p into v^{qp} with qp >= 4 for every exponent present
    return 1 if gmin is None else int(math.ceil(4.0 / gmin))


def _eval_integrand(factors, x, t):
    out = np.ones(t.shape, dtype=complex)
    for obs, flow, tms in factors:
        tau = tms[0](t) if flow.D == 1 else np.stack([tm(t) for tm in tms], axis=-1)
        out = out * obs.evaluate(flow.orbit(x, tau))
    bad = ~np.isfinite(out)
    if bad.any():
        t_bad = float(np.asarray(t)[bad][0])
        raise EvaluationError(f"non-finite integrand at t={t_bad!r}", t_bad)
    return out


def _factor_rates(factors, a, b):
    """(oscillation cycles per unit t, discontinuity crossings per unit t) on [a, b]."""
    osc = disc = 0.0
    for obs, flow, tms in factors:
        r, jumpy = obs.rate(flow)
        r = np.broadcast_to(np.asarray(r, dtype=float), (len(tms),))
        db = np.array([tm.deriv_bound(a, b) for tm in tms])
        osc += float(np.sum(r * db))
        if jumpy:
            disc += float(np.sum(db))
    return osc, disc


def _crossing_maps(factors, x):
    """(TimeMap, fiber offset) pairs whose integer crossings make the integrand jump."""
    out = []
    for obs, flow, tms in factors:
        if isinstance(flow, MultiSuspensionFlow) and obs.rate(flow)[1]:
            for i, tm in enumerate(tms):
                if tm.power_terms():
                    out.append((tm, float(x.fiber[i])))
    return out


def _insert_crossings(edges, maps):
    """Add every t where tau(t) + z crosses an integer as a panel edge.

    Assumes tau is monotone on each panel (panels are sized so tau moves by
    less than one unit across them)."""
    new = [edges]
    for tm, z in maps:
        v = np.floor(tm(edges) + z)
        lo_n, hi_n = v[:-1], v[1:]
        cnt = np.abs(hi_n - lo_n).astype(np.int64)
        where = np.flatnonzero(cnt)
        if where.size == 0:
            continue
        reps = cnt[where]
        pid = np.repeat(where, reps)
        step = np.sign(hi_n - lo_n)[pid]
        offs = np.concatenate([np.arange(1, r + 1) for r in reps]).astype(float)
        target = np.where(step > 0, lo_n[pid] + offs, lo_n[pid] - offs + 1.0)
        a, b = edges[pid].copy(), edges[pid + 1].copy()
        up = step > 0
        for _ in range(64):
            m = 0.5 * (a + b)
            above = (tm(m) + z >= target)
            go_left = np.where(up, above, ~above)
            b = np.where(go_left, m, b)
            a = np.where(go_left, a, m)
        new.append(b)
    return np.unique(np.concatenate(new))


def _snap(H, step):
    j = round(H / step)
    return (j * step, j) if abs(H / step - j) <= 1e-9 * max(1.0, H / step) else (H, None)


def _node_layout(factors, horizons, quad, x=None):
    """Panel edges (ascending, containing 0 and every horizon) and per-segment
    metadata used by the error estimate."""
    hz = sorted(set(horizons))
    if quad.step is not None:
        step = quad.step
        pts = []
        for H in hz:
            v, _ = _snap(H, step)
            pts.append(v)
        jmax = int(math.floor(pts[-1] / step + 1e-9))
        edges = np.arange(jmax + 1) * step
        extra = [p for p in pts if _snap(p, step)[1] is None]
        edges = np.unique(np.concatenate([edges, extra]))
        edges = edges[edges <= pts[-1]]
    else:
        pts = hz
        parts = [np.zeros(1)]
        lo = 0.0
        for H in hz:
            a_eff = lo if lo > 0 else min(1.0, H) * 1e-2
            osc, disc = _factor_rates(factors, a_eff, H)
            h = quad.max_step if osc == 0 else min(quad.max_step, 0.2 / osc)
            if disc > 0:
                h = min(h, 0.5 / disc)
            n = max(10, int(math.ceil((H - lo) / h)))
            parts.append(lo + (H - lo) * np.arange(1, n + 1) / n)
            lo = H
        edges = np.concatenate(parts)
    maps = _crossing_maps(factors, x) if x is not None else []
    if maps:
        edges = _insert_crossings(edges, maps)
    idx = np.searchsorted(edges, pts)
    if not np.allclose(edges[idx], pts, rtol=1e-12, atol=0):
        raise ContractViolation("horizon missing from the panel layout")
    return edges, idx, pts


def _gauss_panels(factors, x, edges, quad, rule, gmin):
    """Integral of the integrand over every panel [edges[i], edges[i+1]]."""
    left, h = edges[:-1], np.diff(edges)
    K = len(h)
    q = _sub_power(gmin)

    def chunk(lo):
        hi = min(K, lo + CHUNK)
        L, W = left[lo:hi], h[lo:hi]
        if rule == "midpoint":
            nodes, wts = (L + W / 2)[:, None], W[:, None]
        else:
            nodes = L[:, None] + W[:, None] * (_GL_X + 1.0) / 2.0
            wts = W[:, None] * _GL_W / 2.0
        vals = _eval_integrand(factors, x, nodes.ravel()).reshape(nodes.shape)
        out = np.sum(vals * wts, axis=1)
        if lo == 0 and q > 1:
            out[0] = _substituted_first_panel(lambda t: _eval_integrand(factors, x, t), edges[1], q)
        return out

    starts = range(0, K, CHUNK)
    if quad.workers > 1 and K > CHUNK:
        with ThreadPoolExecutor(quad.workers) as ex:
            parts = list(ex.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    return np.concatenate(parts) if parts else np.zeros(0, complex)


def _substituted_first_panel(F, h0, q, n=16):
    """int_0^h0 F(t) dt with t = h0 v^q, which smooths t^gamma kinks at 0."""
    e = np.linspace(0.0, 1.0, n + 1)
    v = e[:-1, None] + np.diff(e)[:, None] * (_GL_X + 1.0) / 2.0
    w = np.diff(e)[:, None] * _GL_W / 2.0
    t = h0 * v ** q
    jac = q * h0 * v ** (q - 1)
    return complex(np.sum(F(t.ravel()).reshape(t.shape) * jac * w))


def _gauss_error(factors, edges, pts, sup, rule, split=False):
    errs, lo = [], 0.0
    for H in pts:
        m = (edges > lo) & (edges <= H)
        seg = edges[m]
        hmax = float(np.max(np.diff(np.concatenate([[lo], seg])))) if seg.size else 0.0
        a_eff = lo if lo > 0 else hmax
        osc, disc = _factor_rates(factors, a_eff, H)
        L = H - lo
        z = 2 * math.pi * osc * hmax
        smooth = min(2.0, _C4 * z ** 8 if rule != "midpoint" else z * z / 24.0)
        # jumps at panel edges cost nothing; otherwise each costs <= 2 sup h
        jumps = 2.0 * hmax * (disc * L + 1.0) if disc > 0 and not split else 0.0
        errs.append(sup * (L * smooth + jumps + 1e-15 * L))
        lo = H
    return np.cumsum(errs)


# ---------------------------------------------------------------------------
# phase route


def _phase_terms(factors, x):
    """Expand the integrand as sum_r w_r e(Phi_r(t)); None if not applicable.

    Phi_r is a dict exponent -> coefficient (cycles)."""
    if not isinstance(x, TorusPoint) or x.batch_shape != ():
        return None
    combos = [(1.0 + 0j, {})]
    for obs, flow, tms in factors:
        if not isinstance(flow, KroneckerFlow):
            return None
        ts = obs.terms()
        if ts is None or any(t.fib is not None or t.table is not None for t in ts):
            return None
        local = []
        for t in ts:
            k = np.zeros(flow.dim) if t.tor is None else np.asarray(t.tor, dtype=float)
            if k.shape != (flow.dim,):
                raise ContractViolation("character frequency length differs from torus dimension")
            kx = math.fsum(k * x.coords) % 1.0
            w = complex(t.coef) * complex(np.exp(2j * np.pi * kx))
            if w == 0:
                continue
            kv = k @ flow.velocity
            ph = {}
            for i, tm in enumerate(tms):
                for p, qc in tm.power_terms().items():
                    key = round(p, 12)
                    ph[key] = ph.get(key, 0.0) + kv[i] * qc
            local.append((w, ph))
        new = []
        for w1, p1 in combos:
            for w2, p2 in local:
                m = dict(p1)
                for key, v in p2.items():
                    m[key] = m.get(key, 0.0) + v
                new.append((w1 * w2, m))
        combos = new
    out = []
    for w, ph in combos:
        ph = {p: c for p, c in ph.items() if c != 0.0}
        out.append((w, ph))
    return out


def _b3(terms, a, b):
    """Bound on |Phi'''| over [a, b] (max over terms)."""
    best = 0.0
    for _, ph in terms:
        s = 0.0
        for p, c in ph.items():
            f = p * (p - 1) * (p - 2)
            if f != 0.0:
                s += abs(c * f) * max(a ** (p - 3), b ** (p - 3))
        best = max(best, s)
    return best


def _phase_layout(terms, horizons, quad):
    hz = sorted(set(float(h) for h in horizons))
    t0 = min(1.0, hz[0])
    marks = set(hz) | {t0}
    m = t0
    while m < hz[-1]:
        m *= 2.0
        marks.add(min(m, hz[-1]))
    marks = sorted(v for v in marks if v <= hz[-1])
    parts, segs = [np.array([0.0, t0])], []
    for a, b in zip(marks, marks[1:]):
        B3 = _b3(terms, a, b)
        h = 4.0 if B3 == 0 else min(4.0, (192.0 * quad.phase_tol / (2 * math.pi * B3)) ** (1 / 3))
        h = min(h, quad.max_step * 80)
        n = int(math.ceil((b - a) / h))
        parts.append(a + (b - a) * np.arange(1, n + 1) / n)
        segs.append((a, b, (b - a) / n, B3))
    edges = np.concatenate(parts)
    idx = np.searchsorted(edges, hz)
    return edges, idx, hz, t0, segs


def _phi_parts(ph):
    ps = np.array(list(ph.keys()), dtype=float)
    cs = np.array(list(ph.values()), dtype=float)
    return ps, cs


def _phase_panels(terms, edges, t0):
    left, h = edges[1:-1], np.diff(edges)[1:]
    mid = left + h / 2
    out = np.zeros(len(edges) - 1, dtype=complex)
    for w, ph in terms:
        ps, cs = _phi_parts(ph)
        c0 = float(cs[ps == 0].sum()) if ps.size else 0.0
        nz = ps != 0
        ps, cs = ps[nz], cs[nz]
        base = w * np.exp(2j * np.pi * (c0 % 1.0))
        if ps.size == 0:
            out += base * np.diff(edges)
            continue

        def phi_at(t):
            return sum(c * np.power(t, p) for p, c in zip(ps, cs))

        # first region [0, t0] by substituted Gauss-Legendre
        q = _sub_power(min([p for p in ps if p < 1], default=None))
        rate = sum(abs(c) * p * q * t0 ** p for p, c in zip(ps, cs))
        n0 = 16 + int(math.ceil(rate / 0.2))
        out[0] += base * _substituted_first_panel(lambda t: np.exp(2j * np.pi * phi_at(t)), t0, q, n0)
        for lo in range(0, len(mid), CHUNK * 4):
            sl = slice(lo, lo + CHUNK * 4)
            m = mid[sl]
            mld = m.astype(np.longdouble)
            phi = np.zeros(m.shape, dtype=np.longdouble)
            d1 = np.zeros_like(m)
            d2 = np.zeros_like(m)
            for p, c in zip(ps, cs):
                if float(p).is_integer():
                    phi += np.longdouble(c) * mld ** int(p)
                else:
                    phi += np.longdouble(c) * np.power(mld, np.longdouble(p))
                d1 += c * p * np.power(m, p - 1)
                if p != 1.0:
                    d2 += c * p * (p - 1) * np.power(m, p - 2)
            frac = np.asarray(phi - np.floor(phi), dtype=float)
            hh = h[sl]
            val = np.exp(2j * np.pi * frac) * chirp_integral(2 * np.pi * d1, np.pi * d2, -hh / 2, hh / 2)
            out[1 + lo:1 + lo + len(m)] += base * val
    return out


def _phase_error(terms, pts, segs, t0):
    wsum = sum(abs(w) for w, _ in terms)
    errs = []
    for H in pts:
        e = wsum * t0 * 1e-12
        for a, b, h, B3 in segs:
            if a >= H:
                break
            L = min(b, H) - a
            phimax = max((sum(abs(c) * b ** p for p, c in ph.items()) for _, ph in terms), default=0.0)
            e += wsum * L * (2 * math.pi * B3 * h ** 3 / 192.0 + 2 * math.pi * phimax * _LD_EPS + 1e-15)
        errs.append(e)
    return np.array(errs)


# ---------------------------------------------------------------------------
# 1D driver


def _integrate_1d(factors, x, horizons, quad, sup):
    """Panel integrals plus the panel index of each horizon.

    Returns (panel_vals, idx, pts, cumulative_abs_error_at_pts, rule_used)."""
    rule = quad.rule
    terms = None
    if rule in ("auto", "phase"):
        terms = _phase_terms(factors, x)
        if terms is None and rule == "phase":
            raise ConfigurationError("phase rule needs Kronecker flows and character observables")
    if terms is not None:
        edges, idx, pts, t0, segs = _phase_layout(terms, horizons, quad)
        vals = _phase_panels(terms, edges, t0)
        return vals, idx, pts, _phase_error(terms, pts, segs, t0), "phase"
    rule = "gauss4" if rule == "auto" else rule
    edges, idx, pts = _node_layout(factors, horizons, quad, x)
    gmin = _frac_exponent(factors)
    vals = _gauss_panels(factors, x, edges, quad, rule, gmin)
    split = bool(_crossing_maps(factors, x))
    return vals, idx, pts, _gauss_error(factors, edges, pts, sup, rule, split), rule


def _check_point(plan, x):
    for fl in plan.flows:
        fl.check_point(x)
    if x.batch_shape != ():
        raise ContractViolation("averages are computed one starting point at a time")


def _point_meta(x):
    if isinstance(x, TorusPoint):
        return {"torus": x.coords.tolist()}
    return {"point": type(x).__name__}


def continuous_average(plan, x, quad=None):
    """A(M) = (1/M) int_0^M integrand dt for every M in quad.M_grid (box plans:
    cubes M*(1..1) or quad.box_grid)."""
    quad = quad or QuadratureConfig()
    _check_point(plan, x)
    meta = {"plan_hash": plan.hash(), "form": plan.form, "quadrature": quad.to_dict(), "x": _point_meta(x)}
    if plan.form == "ThmC" and plan.k > 1:
        plan.check_scale()
        boxes = quad.box_grid or tuple((M,) * plan.k for M in quad.M_grid)
        res = [_box(plan, x, b, quad) for b in boxes]
        meta["rule"] = res[0][2]
        return AverageCurve(list(boxes), np.array([r[0] for r in res]), np.array([r[1] for r in res]), meta)
    factors = plan.factors()
    vals, idx, pts, err, rule = _integrate_1d(factors, x, quad.M_grid, quad, plan.sup_bound)
    cum, out, lo = 0j, [], 0
    for i in idx:
        cum += _csum(vals[lo:i])
        out.append(cum)
        lo = i
    M = np.asarray(pts)
    meta["rule"] = rule
    values = np.array(out) / M
    horizons = list(quad.M_grid)
    if plan.form == "ThmC":
        horizons = [(m,) for m in horizons]
    return AverageCurve(horizons, values, err / M, meta)


def block_average(plan, x, delta, N, quad=None):
    """E_{n<N} (1/delta) int_0^delta F(n delta + t) dt: the same integral over
    [0, N delta], re-bracketed into delta-blocks."""
    delta = float(delta)
    if not delta > 0 or N < 1:
        raise ConfigurationError("block average needs delta > 0 and N >= 1")
    quad = quad or QuadratureConfig()
    _check_point(plan, x)
    ends = delta * np.arange(1, int(N) + 1)
    if quad.step is not None:
        ends = np.array([_snap(e, quad.step)[0] for e in ends])
        if quad.step > delta + 1e-12:
            raise ConfigurationError("fewer than one quadrature panel per block")
    sub = QuadratureConfig(quad.step, quad.rule, (float(ends[0]),), None, quad.max_step, quad.phase_tol, quad.workers)
    vals, idx, _, _, _ = _integrate_1d(plan.factors(), x, ends, sub, plan.sup_bound)
    lo, blocks = 0, []
    for i in idx:
        blocks.append(_csum(vals[lo:i]) / delta)
        lo = i
    return _csum(np.array(blocks)) / len(blocks)


def power_substitute_check(flow, obs, delta_exp, M_grid, x, quad=None):
    """Curves of (1/M) int_0^M F(t) dt and (1/M) int_0^M F(t^delta_exp) dt,
    F(t) = obs(T^t x)."""
    if not delta_exp > 0:
        raise ConfigurationError("delta_exp must be positive")
    quad = (quad or QuadratureConfig()).with_grid(M_grid)
    p1 = AveragePlan("Single", [flow], [obs], Q=(0.0, 1.0))
    p2 = AveragePlan("Single", [flow], [obs], Q=(0.0, 1.0), alpha=delta_exp)
    return continuous_average(p1, x, quad), continuous_average(p2, x, quad)


# ---------------------------------------------------------------------------
# box averages


def box_average(plan, x, M, quad=None):
    """(1/(M_1...M_k)) int over prod [0, M_j] of f(T^{|t|}x) g(S^{|t|^2 + c l.t}x) dt."""
    quad = quad or QuadratureConfig()
    if plan.form != "ThmC":
        raise ConfigurationError("box_average needs a ThmC plan")
    M = tuple(float(m) for m in np.atleast_1d(M))
    if len(M) != plan.k:
        raise ConfigurationError(f"box needs {plan.k} side lengths")
    plan.check_scale()
    if any(m <= 0 for m in M):
        raise ConfigurationError("box side lengths must be positive")
    _check_point(plan, x)
    return _box(plan, x, M, quad)[0]


def _box(plan, x, M, quad):
    k = plan.k
    if k == 1:
        sub = quad.with_grid((M[0],))
        c = continuous_average(plan, x, sub)
        return complex(c.values[0]), float(c.errors[0]), c.metadata["rule"]
    terms = None
    if quad.rule in ("auto", "phase"):
        terms = _box_terms(plan, x)
        if terms is None and quad.rule == "phase":
            raise ConfigurationError("phase rule needs Kronecker flows and character observables")
    if terms is not None:
        v, e = _box_phase(plan, terms, M, quad)
        return v, e, "phase"
    rule = "gauss4" if quad.rule in ("auto", "phase") else quad.rule
    v, e = _box_generic(plan, x, M, quad, rule)
    return v, e, rule


def _box_terms(plan, x):
    """Terms (w, A, Bq): integrand = sum w e(A s + Bq (s^2 + c l.t)), s = sum t."""
    T, S = plan.flows
    f, g = plan.observables
    probe = [(f, T, [_tm((0.0, 1.0))]), (g, S, [_tm((0.0, 0.0, 1.0))])]
    parts = []
    for obs, flow, _ in probe:
        if not isinstance(flow, KroneckerFlow) or not isinstance(x, TorusPoint):
            return None
        ts = obs.terms()
        if ts is None or any(t.fib is not None or t.table is not None for t in ts):
            return None
        loc = []
        for t in ts:
            kk = np.zeros(flow.dim) if t.tor is None else np.asarray(t.tor, dtype=float)
            w = complex(t.coef) * complex(np.exp(2j * np.pi * (math.fsum(kk * x.coords) % 1.0)))
            loc.append((w, float(kk @ flow.velocity[:, 0])))
        parts.append(loc)
    return [(w1 * w2, A, Bq) for w1, A in parts[0] for w2, Bq in parts[1]]


def _outer_grid(lengths, rates, quad):
    """Tensor Gauss nodes/weights over the outer axes."""
    nodes, wts, hs = [], [], []
    for L, r in zip(lengths, rates):
        h = quad.step or (quad.max_step if r == 0 else min(quad.max_step, 0.2 / r))
        n = max(10, int(math.ceil(L / h)))
        e = L * np.arange(n + 1) / n
        nd = e[:-1, None] + np.diff(e)[:, None] * (_GL_X + 1) / 2
        wt = np.diff(e)[:, None] * _GL_W / 2
        nodes.append(nd.ravel())
        wts.append(wt.ravel())
        hs.append(L / n)
    return nodes, wts, hs


def _box_phase(plan, terms, M, quad):
    """Innermost axis exact (the phase is quadratic in t_1), the rest by Gauss."""
    k, c, l = plan.k, plan.c, plan.l
    tot = sum(M)
    rates = [max(abs(A) + abs(Bq) * (2 * tot + abs(c * l[j])) for _, A, Bq in terms) for j in range(1, k)]
    nodes, wts, hs = _outer_grid(M[1:], rates, quad)
    grids = np.meshgrid(*nodes, indexing="ij")
    W = np.ones(grids[0].shape)
    for j, wt in enumerate(wts):
        W = W * wt.reshape([-1 if i == j else 1 for i in range(k - 1)])
    if W.size > BOX_NODE_BUDGET:
        raise ConfigurationError("box quadrature exceeds the node budget")
    rest = sum(grids)  # sum of outer coordinates
    lrest = sum(l[j + 1] * g for j, g in enumerate(grids))
    acc = 0j
    for w, A, Bq in terms:
        # Phi = Bq t1^2 + (2 Bq r + A + Bq c l1) t1 + Bq r^2 + A r + Bq c lrest
        lin = 2 * Bq * rest + A + Bq * c * l[0]
        const = (Bq * rest * rest + A * rest + Bq * c * lrest) % 1.0
        inner = chirp_integral(2 * np.pi * lin, np.pi * 2 * Bq, 0.0, M[0])
        acc += w * np.sum(W * np.exp(2j * np.pi * const) * inner)
    vol = float(np.prod(M))
    z = max(2 * math.pi * r * h for r, h in zip(rates, hs))
    err = sum(abs(w) for w, _, _ in terms) * vol * (_C4 * z ** 8 + 1e-14)
    return acc / vol, err / vol


def _box_generic(plan, x, M, quad, rule):
    T, S = plan.flows
    f, g = plan.observables
    k, c, l = plan.k, plan.c, plan.l
    tot = sum(M)
    rf, jf = f.rate(T)
    rg, jg = g.rate(S)
    rf, rg = float(np.sum(rf)), float(np.sum(rg))
    rates = [rf + rg * (2 * tot + abs(c * l[j])) for j in range(k)]
    nodes, wts, hs = _outer_grid(M, rates, quad)
    if int(np.prod([len(n) for n in nodes])) > BOX_NODE_BUDGET:
        raise ConfigurationError("box quadrature exceeds the node budget")
    grids = np.meshgrid(*nodes[1:], indexing="ij") if k > 1 else []
    Wrest = np.ones(grids[0].shape) if grids else np.ones(())
    for j, wt in enumerate(wts[1:]):
        Wrest = Wrest * wt.reshape([-1 if i == j else 1 for i in range(k - 1)])
    rest = sum(grids).ravel()
    lrest = sum(l[j + 1] * gg for j, gg in enumerate(grids)).ravel()
    Wrest = Wrest.ravel()
    acc = 0j
    for t1, w1 in zip(nodes[0], wts[0]):
        s = t1 + rest
        vals = f.evaluate(T.orbit(x, s)) * g.evaluate(S.orbit(x, s * s + c * (l[0] * t1 + lrest)))
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("non-finite integrand in box average", float(t1))
        acc += w1 * np.sum(Wrest * vals)
    vol = float(np.prod(M))
    sup = plan.sup_bound
    z = max(2 * math.pi * r * h for r, h in zip(rates, hs))
    err = sup * vol * (_C4 * z ** 8 + 1e-14)
    if jf or jg:
        err += 2 * sup * vol * max(hs) * (sum(rates) + k)
    return acc / vol, err / vol
