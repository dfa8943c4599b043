"""Exact limits of character averages on Kronecker flows.

For torus characters the integrand is sum_r w_r e(Phi_r(t)) with
Phi_r(t) = sum_p c_{r,p} t^p.  The Cesaro limit of e(Phi_r) is e(c_{r,0}) when
every non-constant coefficient vanishes and 0 otherwise.  Coefficients are
kept as exact rational combinations of the distinct velocity entries, so
"vanishes" is decided symbolically.  A combination that is symbolically
nonzero but numerically negligible signals a rational relation among the
velocities, and the oracle refuses rather than guess.
"""

from fractions import Fraction

import mpmath
import numpy as np

from .errors import ConfigurationError
from .flows import KroneckerFlow
from .points import TorusPoint

_PSLQ_MAXCOEFF = 10 ** 4
_PSLQ_TOL = 1e-11


class UndecidableError(ConfigurationError):
    """Velocity entries admit a small integer relation; zero tests are unsafe."""


def _basis(flows):
    vals = sorted({float(v) for f in flows for v in np.ravel(f.velocity) if v != 0.0}, key=abs)
    return vals


def _relation(values):
    return mpmath.pslq([mpmath.mpf(v) for v in values], tol=_PSLQ_TOL, maxcoeff=_PSLQ_MAXCOEFF, maxsteps=10 ** 5)


def _is_zero(comb, basis):
    """Symbolic zero test of a rational combination of basis velocities.

    A combination that is symbolically nonzero yet numerically tiny means the
    velocities are (nearly) rationally dependent, and the oracle refuses."""
    if not comb:
        return True
    if abs(comb.value(basis)) < 1e-9 * max(1.0, max(abs(basis[i]) for i in comb)):
        rel = _relation([basis[i] for i in comb])
        raise UndecidableError(f"velocity entries nearly dependent (relation {rel})")
    return False


class LinComb(dict):
    """Exact Q-linear combination of basis velocities: {basis index: Fraction}."""

    def add(self, other, scale=Fraction(1)):
        out = LinComb(self)
        for k, v in other.items():
            out[k] = out.get(k, Fraction(0)) + scale * v
            if out[k] == 0:
                del out[k]
        return out

    def value(self, basis):
        return float(sum(float(c) * basis[i] for i, c in self.items()))


def _velocity_comb(flow, basis, k, col):
    idx = {v: i for i, v in enumerate(basis)}
    out = LinComb()
    for kk, v in zip(k, flow.velocity[:, col]):
        if kk != 0 and v != 0.0:
            out = out.add(LinComb({idx[float(v)]: Fraction(int(kk))}))
    return out


def _terms(obs):
    ts = obs.terms()
    if ts is None or any(t.fib is not None or t.table is not None for t in ts):
        raise ConfigurationError("character oracle needs torus-character observables")
    return ts


def _factor_expansion(plan):
    """(observable, flow, [(Fraction-coefficient polynomial dict, gamma)]) per factor."""
    fr = lambda v: Fraction(v)  # noqa: E731  exact binary value of a double
    f, obs, fl = plan.form, plan.observables, plan.flows
    a = Fraction(plan.a[0], plan.a[1])
    Q = {m: fr(q) for m, q in enumerate(plan.Q.coeffs)} if plan.Q is not None else {}
    lin = {1: Fraction(1)}
    if f in ("ThmA", "ThmB"):
        al = plan.alpha[0]
        return [(obs[0], fl[0], [(lin, al)]), (obs[1], fl[0], [({1: a}, al)]), (obs[2], fl[1], [(Q, plan.beta)])]
    if f == "ThmD1":
        out = [(o, T, [(lin, al)]) for o, T, al in zip(obs[:-1], fl[:-1], plan.alpha)]
        out.append((obs[-1], fl[-1], [(Q, plan.beta), (lin, plan.beta)]))
        return out
    if f == "ThmD2":
        return [(obs[0], fl[0], [({}, 1.0), ({1: fr(plan.c)}, plan.beta)]),
                (obs[1], fl[0], [(Q, plan.beta), (lin, plan.beta)])]
    if f == "Single":
        return [(obs[0], fl[0], [(Q, plan.alpha[0])])]
    raise ConfigurationError(f"no character oracle for form {f}")


def character_limit(plan, x):
    """Exact Cesaro limit of the plan's average at x (Kronecker flows only).

    Returns (limit, n_terms_surviving)."""
    if not all(isinstance(fl, KroneckerFlow) for fl in plan.flows) or not isinstance(x, TorusPoint):
        raise ConfigurationError("character oracle needs Kronecker flows and a torus point")
    basis = _basis(plan.flows)
    if plan.form == "ThmC":
        return _box_limit(plan, x, basis)
    combos = [(mpmath.mpc(1), {})]  # weight, {exponent: LinComb}
    for obs, flow, maps in _factor_expansion(plan):
        local = []
        for t in _terms(obs):
            k = [0] * flow.dim if t.tor is None else list(t.tor)
            w = mpmath.mpc(complex(t.coef)) * mpmath.expjpi(2 * mpmath.fsum(
                mpmath.mpf(kk) * mpmath.mpf(float(c)) for kk, c in zip(k, x.coords)))
            ph = {}
            for col, (poly, gamma) in enumerate(maps):
                kv = _velocity_comb(flow, basis, k, col)
                for m, q in poly.items():
                    if q == 0:
                        continue
                    key = Fraction(gamma).limit_denominator(10 ** 9) * m
                    ph[key] = ph.get(key, LinComb()).add(kv, q)
            local.append((w, ph))
        new = []
        for w1, p1 in combos:
            for w2, p2 in local:
                m = dict(p1)
                for key, v in p2.items():
                    m[key] = m.get(key, LinComb()).add(v)
                new.append((w1 * w2, m))
        combos = new
    total, alive = mpmath.mpc(0), 0
    for w, ph in combos:
        if any(key != 0 and not _is_zero(v, basis) for key, v in ph.items()):
            continue
        c0 = ph.get(Fraction(0), LinComb())
        total += w * mpmath.expjpi(2 * mpmath.mpf(c0.value(basis)))
        alive += 1
    return complex(total), alive


def _box_limit(plan, x, basis):
    T, S = plan.flows
    f, g = plan.observables
    total, alive = mpmath.mpc(0), 0
    for tf in _terms(f):
        kf = [0] * T.dim if tf.tor is None else list(tf.tor)
        A = _velocity_comb(T, basis, kf, 0)
        for tg in _terms(g):
            kg = [0] * S.dim if tg.tor is None else list(tg.tor)
            B = _velocity_comb(S, basis, kg, 0)
            if not (_is_zero(A, basis) and _is_zero(B, basis)):
                continue
            w = complex(tf.coef) * complex(tg.coef)
            ph = sum(kk * float(c) for kk, c in zip(kf, x.coords)) + sum(kk * float(c) for kk, c in zip(kg, x.coords))
            total += mpmath.mpc(w) * mpmath.expjpi(2 * mpmath.mpf(ph))
            alive += 1
    return complex(total), alive


def closed_form_linear(k_dot_alpha, phase0, M):
    """(1/M) int_0^M e(phase0 + w t) dt."""
    w = k_dot_alpha
    if w == 0:
        return complex(np.exp(2j * np.pi * phase0))
    return complex(np.exp(2j * np.pi * phase0) * (np.exp(2j * np.pi * w * M) - 1) / (2j * np.pi * w * M))
