"""Convergence diagnostics and predicted-limit checks.

`predict_limit` assembles the right-hand side of the limit formula for a
plan from its ingredients (conditional expectations onto invariant
functions, and for the A/B forms the inner double average), each estimated
independently of the full average.  `convergence_report` sets the computed
curve against that prediction.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .averaging import AveragePlan, QuadratureConfig, _integrate_1d, _tm, continuous_average
from .discrete import conditional_expectation, DiscreteSystem
from .errors import ConfigurationError, DomainError
from .flows import KroneckerFlow, MultiSuspensionFlow, ProductFlow, RotationMap, Sl2Flow
from .observables import Constant, Sum, TorusCharacter
from .points import SuspensionPoint, TorusPoint

VERDICTS = ("converged-to-prediction", "converged-elsewhere", "unconverged")
TAGS = {
    "ThmA": "ThmB-product",
    "ThmB": "ThmB-product",
    "ThmC": "ThmC-product",
    "ThmD1": "ThmD1-product",
    "ThmD2": "ThmD2-integral",
}
_RELATION_BOX = 12  # integer vectors searched when testing Kronecker ergodicity


def residual_tolerance(M_max, scale=1.0):
    """max(5e-3, 10/M_max), in units of the product of sup norms."""
    return max(5e-3, 10.0 / M_max) * scale


@dataclass
class Ingredient:
    name: str
    value: complex
    error: float
    converged: bool
    route: str


@dataclass
class PredictedLimit:
    value: complex
    tag: str
    ingredients: list = field(default_factory=list)

    @property
    def converged(self):
        return all(i.converged for i in self.ingredients)

    @property
    def error(self):
        return float(sum(i.error for i in self.ingredients))

    def to_dict(self):
        return {
            "value": [self.value.real, self.value.imag],
            "tag": self.tag,
            "converged": self.converged,
            "ingredients": [
                {"name": i.name, "value": [i.value.real, i.value.imag], "error": i.error,
                 "converged": i.converged, "route": i.route}
                for i in self.ingredients
            ],
        }


@dataclass(frozen=True)
class EstimatorConfig:
    """Horizons used by the ingredient estimators."""

    discrete_N: int = 20000
    r: float = 200.0
    M_inner: float = 1e4


def kronecker_is_ergodic(flow, box=_RELATION_BOX):
    """No nonzero integer k with |k|_inf <= box has k.V = 0 (every column)."""
    V = flow.velocity
    if np.any(np.all(V == 0, axis=1)):
        return False
    dim = V.shape[0]
    if dim > 4:
        box = 3
    axes = np.meshgrid(*[np.arange(-box, box + 1)] * dim, indexing="ij")
    K = np.stack([a.ravel() for a in axes], axis=-1)
    K = K[np.any(K != 0, axis=1)]
    return not np.any(np.all(np.abs(K @ V) < 1e-10, axis=1))


def _ergodic(flow):
    if isinstance(flow, KroneckerFlow):
        return kronecker_is_ergodic(flow)
    if isinstance(flow, Sl2Flow):
        return flow.speed != 0
    if isinstance(flow, MultiSuspensionFlow) and flow.finite:
        return flow.D == 1 and len(flow.base_maps[0].cycles) == 1
    return False


def cond_exp(flow, obs, x, est):
    """E(obs | invariant functions of flow)(x) as an Ingredient."""
    if _ergodic(flow) and obs.exact_integral is not None:
        return Ingredient("E(.|I)", complex(obs.exact_integral), 0.0, True, "exact-integral")
    if isinstance(flow, KroneckerFlow) and isinstance(x, TorusPoint):
        return _kronecker_cond_exp(flow, obs, x, est)
    if isinstance(flow, MultiSuspensionFlow) and flow.finite and flow.D == 1:
        return _suspension_cond_exp(flow, obs, x)
    return _continuous_birkhoff(flow, obs, x, est)


def _kronecker_cond_exp(flow, obs, x, est):
    """Birkhoff averages of the time-one maps (one per flow parameter)."""
    V = flow.velocity
    if flow.D == 1:
        sys = DiscreteSystem(RotationMap(V[:, 0]))

        def F(c):
            return obs.evaluate(TorusPoint(c))

        ce = conditional_expectation(sys, F, x.coords, est.discrete_N, est.r)
        return Ingredient("E(.|I)", ce.value, ce.error, ce.converged, "discrete-birkhoff")
    n = int(math.sqrt(est.discrete_N)) * 2
    grids = np.meshgrid(*[np.arange(n)] * flow.D, indexing="ij")
    steps = np.stack([g.ravel() for g in grids], axis=-1).astype(float)
    vals = obs.evaluate(TorusPoint(np.mod(x.coords + steps @ V.T, 1.0))).reshape((n,) * flow.D)
    full = vals.mean()
    half = vals[(slice(0, n // 2),) * flow.D].mean()
    err = float(abs(full - half))
    return Ingredient("E(.|I)", complex(full), err, err < 1.0 / est.r, "discrete-birkhoff")


def _suspension_cond_exp(flow, obs, x):
    """Exact: mean over the base cycle of the fiber average."""
    m = flow.base_maps[0]
    s = int(x.base)
    cyc = m.cycles[m.cycle_of[s]]
    nodes, w = roots_legendre(128)
    z = (nodes + 1) / 2
    pts = SuspensionPoint(np.repeat(cyc, z.size), np.tile(z, cyc.size)[:, None])
    vals = obs.evaluate(pts).reshape(cyc.size, z.size)
    val = complex(np.sum(vals * w / 2) / cyc.size)
    return Ingredient("E(.|I)", val, 0.0, True, "cycle-mean")


def _continuous_birkhoff(flow, obs, x, est):
    if flow.D != 1:
        raise ConfigurationError("no conditional-expectation route for this multi-parameter flow")
    M = est.M_inner
    plan = AveragePlan("Single", [flow], [obs], Q=(0.0, 1.0))
    grid = (M / 10, M / math.sqrt(10), M)
    c = continuous_average(plan, x, QuadratureConfig(M_grid=grid))
    err = float(abs(c.values[-1] - c.values[-2]))
    return Ingredient("E(.|I)", c.tail, err, err < 1.0 / est.r, "continuous-birkhoff")


def _inner_double(plan, x, est):
    """lim (1/M) int f1(T^{t^al}) f2(T^{a t^al}) dt estimated at the largest horizon."""
    T = plan.flows[0]
    f1, f2 = plan.observables[:2]
    one = Constant(1.0)
    sub = AveragePlan("ThmB", [T, T], [f1, f2, one], Q=(0.0, 1.0), a=plan.a, alpha=plan.alpha)
    M = est.M_inner
    c = continuous_average(sub, x, QuadratureConfig(M_grid=(M / math.sqrt(10), M)))
    err = float(abs(c.values[-1] - c.values[-2]))
    return Ingredient("inner double average", c.tail, err, err < 1.0 / est.r, "engine")


def predict_limit(plan, x, est=None):
    """Right-hand side of the limit formula for `plan` at `x`."""
    est = est or EstimatorConfig()
    f = plan.form
    obs, fl = plan.observables, plan.flows
    if f == "Single":
        raise ConfigurationError("no limit formula registered for Single plans")
    if f in ("ThmA", "ThmB") and all(isinstance(v, Sl2Flow) for v in fl):
        f1, f2, g = obs
        if plan.a == (1, 1) and not isinstance(f2, Constant):
            return _thm_b(plan, x, est)
        ints = []
        for o in (g, f1, f2):
            v = o.exact_integral
            if v is None:
                raise ConfigurationError("corollary prediction needs observables with known integrals")
            ints.append(Ingredient("integral", complex(v), 0.0, True, "exact-integral"))
        return PredictedLimit(complex(np.prod([i.value for i in ints])), "Corollary-product-of-integrals", ints)
    if f in ("ThmA", "ThmB"):
        return _thm_b(plan, x, est)
    if f == "ThmC":
        ef = cond_exp(fl[0], obs[0], x, est)
        eg = cond_exp(fl[1], obs[1], x, est)
        return PredictedLimit(ef.value * eg.value, TAGS[f], [ef, eg])
    if f == "ThmD1":
        ings = [cond_exp(T, o, x, est) for T, o in zip(fl[:-1], obs[:-1])]
        ings.append(cond_exp(fl[-1], obs[-1], x, est))
        return PredictedLimit(complex(np.prod([i.value for i in ings])), TAGS[f], ings)
    if f == "ThmD2":
        return _thm_d2(plan, x, est)
    raise ConfigurationError(f"no limit formula for {f}")


def _thm_b(plan, x, est):
    eg = cond_exp(plan.flows[1], plan.observables[2], x, est)
    inner = _inner_double(plan, x, est)
    return PredictedLimit(eg.value * inner.value, TAGS[plan.form], [eg, inner])


def _thm_d2(plan, x, est):
    """lim (1/M) int f(S^{(0, c t)}x) E(g | I(S^{t e1}))(S^{(0,t)} x) dt.

    Available for Kronecker S: the projection keeps the characters of g that
    are invariant under the first parameter."""
    S = plan.flows[0]
    f, g = plan.observables
    if not isinstance(S, KroneckerFlow):
        raise ConfigurationError("ThmD2 prediction is implemented for Kronecker flows only")
    ts = g.terms()
    if ts is None:
        raise ConfigurationError("ThmD2 prediction needs a character expansion of g")
    keep = []
    for t in ts:
        k = np.zeros(S.dim) if t.tor is None else np.asarray(t.tor, dtype=float)
        if abs(k @ S.velocity[:, 0]) < 1e-10:
            keep.append((t.coef, TorusCharacter(k.astype(int))))
    proj = Sum([c for _, c in keep], [w for w, _ in keep]) if keep else Constant(0.0)
    factors = [
        (f, S, [_tm(()), _tm((0.0, plan.c), plan.beta)]),
        (proj, S, [_tm(()), _tm((0.0, 1.0), plan.beta)]),
    ]
    M = est.M_inner
    q = QuadratureConfig(M_grid=(M / math.sqrt(10), M))
    vals, idx, pts, _, _ = _integrate_1d(factors, x, q.M_grid, q, 1.0)
    A = [complex(np.sum(vals[:i])) / m for i, m in zip(idx, pts)]
    err = float(abs(A[1] - A[0]))
    ing = Ingredient("projected average", A[1], err, err < 1.0 / est.r, "engine")
    return PredictedLimit(A[1], "ThmD2-integral", [ing])


# ---------------------------------------------------------------------------
# curves and reports


def oscillation_profile(curve, K_grid=None):
    """[(K, sup_{M1, M2 >= K} |A(M1) - A(M2)|)] over the curve's grid."""
    hz = [h if not isinstance(h, tuple) else min(h) for h in curve.horizons]
    vals = np.asarray(curve.values)
    K_grid = hz if K_grid is None else list(K_grid)
    out = []
    for K in K_grid:
        sel = vals[[i for i, h in enumerate(hz) if h >= K]]
        osc = float(np.max(np.abs(sel[:, None] - sel[None, :]))) if sel.size else 0.0
        out.append((K, osc))
    return out


@dataclass
class ConvergenceReport:
    curve: object
    oscillation: list
    predicted: PredictedLimit
    residual: float
    tolerance: float
    verdict: str
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "horizons": [list(h) if isinstance(h, tuple) else h for h in self.curve.horizons],
            "values": [[complex(v).real, complex(v).imag] for v in self.curve.values],
            "err_estimate": [float(e) for e in self.curve.errors],
            "oscillation": [[k if not isinstance(k, tuple) else list(k), o] for k, o in self.oscillation],
            "predicted": self.predicted.to_dict(),
            "residual": self.residual,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "notes": self.notes,
            "metadata": self.curve.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, default=str)


def verdict_for(final_osc, residual, tol, prediction_ok=True):
    if final_osc > tol or not prediction_ok:
        return "unconverged"
    return "converged-to-prediction" if residual <= tol else "converged-elsewhere"


def summary_csv(rows):
    """Flat CSV, one line per (label, report)."""
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "form", "M_max", "value_re", "value_im", "predicted_re", "predicted_im",
                "tag", "residual", "tolerance", "final_osc", "verdict"])
    for label, r in rows:
        v, p = complex(r.curve.tail), r.predicted.value
        hz = r.curve.horizons[-1]
        M = min(hz) if isinstance(hz, tuple) else hz
        osc = r.oscillation[-2][1] if len(r.oscillation) > 1 else 0.0
        w.writerow([label, r.curve.metadata.get("form"), "%.17g" % M, "%.17g" % v.real, "%.17g" % v.imag,
                    "%.17g" % p.real, "%.17g" % p.imag, r.predicted.tag, "%.17g" % r.residual,
                    "%.17g" % r.tolerance, "%.17g" % osc, r.verdict])
    return buf.getvalue()


def convergence_report(plan, x, quad=None, est=None, curve=None, predicted=None):
    """Curve, oscillation profile, prediction, residual and verdict."""
    quad = quad or QuadratureConfig()
    curve = curve if curve is not None else continuous_average(plan, x, quad)
    predicted = predicted if predicted is not None else predict_limit(plan, x, est)
    prof = oscillation_profile(curve)
    hz = curve.horizons[-1]
    M_max = min(hz) if isinstance(hz, tuple) else hz
    tol = residual_tolerance(M_max, plan.sup_bound)
    residual = float(abs(curve.tail - predicted.value))
    final_osc = prof[-2][1] if len(prof) > 1 else 0.0
    notes = ["tolerances are engineering settings; no convergence rates are asserted"]
    if not predicted.converged:
        notes.append("prediction has unconverged ingredients")
    return ConvergenceReport(curve, prof, predicted, residual, tol,
                             verdict_for(final_osc, residual, tol, predicted.converged), notes)


# ---------------------------------------------------------------------------
# maximal-function ensemble statistic


@dataclass
class MaximalStat:
    ratio: float
    sup_norm_l2: float
    f_norm_l2: float
    n: int


def maximal_ensemble_norm(family, f_values, points, horizons):
    """|| max_{M in horizons} |A_M f| ||_{L^2(sample)} / ||f||_{L^2(sample)}.

    `family(x, horizons)` returns the averages at one point; `f_values` are
    f evaluated on the same sample (defines the empirical L^2 norm)."""
    fv = np.asarray(f_values)
    fn = math.sqrt(math.fsum(np.abs(fv) ** 2) / fv.size)
    if fn == 0:
        raise DomainError("f has zero empirical L^2 norm")
    sups = np.array([np.max(np.abs(np.asarray(family(x, horizons)))) for x in points])
    sn = math.sqrt(math.fsum(sups ** 2) / sups.size)
    return MaximalStat(sn / fn, sn, fn, len(sups))


def floor_polynomial_family(sys, f, P):
    """A_N(x) = (1/N) sum_{n<N} f(T^{floor P(n)} x) as a family for the statistic.

    The exponents floor(P(n)) do not depend on x and are computed once."""
    from .discrete import as_function
    from .poly import Polynomial, floor_poly_orbit

    P = Polynomial.parse(P)
    F = as_function(sys, f)
    cache = {}

    def fam(x, horizons):
        Nmax = int(max(horizons))
        if cache.get("N", 0) < Nmax:
            cache["N"], cache["exps"] = Nmax, floor_poly_orbit(P, np.arange(Nmax, dtype=np.int64))
        v = F(sys.power(x, cache["exps"][:Nmax]))
        curve = np.cumsum(v) / np.arange(1, Nmax + 1)
        return curve[np.asarray(horizons, dtype=int) - 1]

    return fam


def continuous_family(plan_for, quad):
    """A_M(x) from the averaging engine; plan_for(x) returns the plan."""

    def fam(x, horizons):
        return continuous_average(plan_for(x), x, quad.with_grid(horizons)).values

    return fam
