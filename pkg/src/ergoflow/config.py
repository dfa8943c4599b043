"""Experiment configs: strict TOML parsing and canonical serialization.

Schema (all keys outside this list are rejected)::

    name = "thmA_kronecker"          # output file stem
    kind = "average"                 # average | transfer | decomposition
    seed = 0                         # master seed (ERGOFLOW_SEED overrides)

    [plan]                           # kind = "average"
    form = "ThmA"                    # ThmA ThmB ThmC ThmD1 ThmD2 Single
    Q = [0.0, -1.0, 0.0, 1.0]        # or a string such as "t^3 - t"
    a = [1, 2]                       # rational a = p/q
    alpha = [1.0]
    beta = 1.0
    c = 0.0
    l = []
    [[plan.flows]]                   # flow dicts, e.g. family = "kronecker"
    [[plan.observables]]             # observable dicts, e.g. kind = "torus_character"

    [quadrature]                     # QuadratureConfig fields
    [points]                         # explicit = [...]  or  count = N (sampled)
    [transfer]                       # kind = "transfer": flow, f_re, f_im, polys, states, N
    [decomposition]                  # kind = "decomposition": cases, max_degree
    [oracle]                         # tolerance = ...
    [output]                         # dir = "..."

Canonical form is whatever `dumps` emits; `dumps(load(text)) == text` for
canonical `text`.
"""

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
import tomli
import tomli_w

from .averaging import AveragePlan, QuadratureConfig
from .errors import ConfigurationError, ErgoflowError
from .flows import flow_from_dict
from .points import ProductPoint, Sl2Point, SuspensionPoint, TorusPoint

KINDS = ("average", "transfer", "decomposition")
SEED_ENV = "ERGOFLOW_SEED"

_TOP = {"name", "kind", "seed", "plan", "quadrature", "points", "transfer", "decomposition", "oracle", "output"}
_PLAN = {"form", "flows", "observables", "Q", "a", "alpha", "beta", "c", "l"}
_QUAD = {"step", "rule", "M_grid", "box_grid", "max_step", "phase_tol", "workers"}
_POINTS = {"explicit", "count"}
_TRANSFER = {"flow", "f_re", "f_im", "polys", "states", "N"}
_DECOMP = {"cases", "max_degree"}
_ORACLE = {"tolerance"}
_OUTPUT = {"dir"}

_FLOW_KEYS = {
    "kronecker": {"family", "velocity"},
    "suspension": {"family", "base"},
    "multi_suspension": {"family", "base_maps"},
    "sl2": {"family", "kind", "speed"},
    "product": {"family", "components", "routing"},
}
_MAP_KEYS = {"permutation": {"kind", "table"}, "rotation": {"kind", "angle"}}
_OBS_KEYS = {
    "constant": {"kind", "re", "im"},
    "torus_character": {"kind", "k"},
    "fiber_character": {"kind", "k"},
    "base_function": {"kind", "re", "im"},
    "smooth_bump": {"kind", "center", "width"},
    "component": {"kind", "index", "child"},
    "product": {"kind", "children"},
    "sum": {"kind", "children", "weights_re", "weights_im"},
    "real_part": {"kind", "child"},
}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where}: expected a table")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigurationError(f"{where}: unknown keys {extra}")


def _check_map(d, where):
    _check_keys(d, _MAP_KEYS.get(d.get("kind"), {"kind"}), where)


def _check_flow(d, where):
    fam = d.get("family") if isinstance(d, dict) else None
    if fam not in _FLOW_KEYS:
        raise ConfigurationError(f"{where}: unknown flow family {fam!r}")
    _check_keys(d, _FLOW_KEYS[fam], where)
    if fam == "suspension":
        _check_map(d.get("base", {}), where + ".base")
    for i, m in enumerate(d.get("base_maps", [])):
        _check_map(m, f"{where}.base_maps[{i}]")
    for i, c in enumerate(d.get("components", [])):
        _check_flow(c, f"{where}.components[{i}]")


def _check_obs(d, where):
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind not in _OBS_KEYS:
        raise ConfigurationError(f"{where}: unknown observable kind {kind!r}")
    _check_keys(d, _OBS_KEYS[kind], where)
    if "child" in d:
        _check_obs(d["child"], where + ".child")
    for i, c in enumerate(d.get("children", [])):
        _check_obs(c, f"{where}.children[{i}]")


# ---------------------------------------------------------------------------
# points


def point_from_dict(d, flow):
    """Explicit point: a coordinate list (torus), {base, fiber} (suspension),
    {matrix} (SL2) or {components} (product)."""
    fam = flow.family
    if fam == "kronecker":
        return TorusPoint(np.asarray(d, dtype=float))
    if not isinstance(d, dict):
        raise ConfigurationError(f"point for a {fam} flow must be a table")
    if fam in ("suspension", "multi_suspension"):
        _check_keys(d, {"base", "fiber"}, "point")
        base = d["base"] if flow.finite else TorusPoint(np.asarray(d["base"], dtype=float))
        return SuspensionPoint(np.asarray(base) if flow.finite else base, np.asarray(d["fiber"], dtype=float))
    if fam == "sl2":
        _check_keys(d, {"matrix"}, "point")
        return Sl2Point.from_matrix(np.asarray(d["matrix"], dtype=float))
    if fam == "product":
        _check_keys(d, {"components"}, "point")
        return ProductPoint(tuple(point_from_dict(c, f) for c, f in zip(d["components"], flow.components)))
    raise ConfigurationError(f"no explicit-point format for {fam!r}")


def point_to_dict(x):
    if isinstance(x, TorusPoint):
        return [float(v) for v in x.coords]
    if isinstance(x, SuspensionPoint):
        base = int(x.base) if x.finite_base else point_to_dict(x.base)
        return {"base": base, "fiber": [float(v) for v in x.fiber]}
    if isinstance(x, Sl2Point):
        return {"matrix": np.asarray(x.matrix, dtype=float).tolist()}
    if isinstance(x, ProductPoint):
        return {"components": [point_to_dict(c) for c in x.components]}
    raise ConfigurationError("unknown point type")


# ---------------------------------------------------------------------------
# config object


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    seed: int
    raw: dict = field(repr=False)
    plan: AveragePlan = None
    quad: QuadratureConfig = None
    tolerance: float = None
    out_dir: str = None

    @property
    def effective_seed(self):
        env = os.environ.get(SEED_ENV)
        if env is None or env == "":
            return self.seed
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from None

    def dumps(self):
        return dumps(self.raw)

    def hash(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def points(self):
        """Explicit points, or `count` points sampled from the first flow."""
        from .sampling import MeasureSampler, sample_invariant

        spec = self.raw.get("points", {})
        flow = self.plan.flows[0]
        if "explicit" in spec:
            return [point_from_dict(p, flow) for p in spec["explicit"]]
        pts = sample_invariant(MeasureSampler(flow, self.effective_seed), spec["count"])
        return [pts[i] for i in range(spec["count"])]


def _section(raw, key, allowed):
    sec = raw.get(key, {})
    _check_keys(sec, allowed, f"[{key}]")
    return sec


def validate(raw):
    """Check keys and build the runtime objects; raises ConfigurationError."""
    _check_keys(raw, _TOP, "config")
    for req in ("name", "kind"):
        if req not in raw:
            raise ConfigurationError(f"config: missing key {req!r}")
    if raw["kind"] not in KINDS:
        raise ConfigurationError(f"config: unknown kind {raw['kind']!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigurationError("config: seed must be an integer")
    out = _section(raw, "output", _OUTPUT)
    orc = _section(raw, "oracle", _ORACLE)
    cfg = ExperimentConfig(raw["name"], raw["kind"], seed, raw,
                           tolerance=orc.get("tolerance"), out_dir=out.get("dir"))
    try:
        if cfg.kind == "average":
            plan = _section(raw, "plan", _PLAN)
            for i, f in enumerate(plan.get("flows", [])):
                _check_flow(f, f"plan.flows[{i}]")
            for i, o in enumerate(plan.get("observables", [])):
                _check_obs(o, f"plan.observables[{i}]")
            cfg.plan = AveragePlan.from_dict(plan)
            cfg.plan.check_scale()
            cfg.quad = QuadratureConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                                           for k, v in _section(raw, "quadrature", _QUAD).items()})
            pts = _section(raw, "points", _POINTS)
            if ("explicit" in pts) == ("count" in pts):
                raise ConfigurationError("[points]: give exactly one of 'explicit' or 'count'")
            if "count" in pts and not (isinstance(pts["count"], int) and pts["count"] >= 1):
                raise ConfigurationError("[points]: count must be a positive integer")
            if "explicit" in pts:
                cfg.points()
        elif cfg.kind == "transfer":
            tr = _section(raw, "transfer", _TRANSFER)
            for req in ("flow", "f_re", "polys", "states"):
                if req not in tr:
                    raise ConfigurationError(f"[transfer]: missing key {req!r}")
            _check_flow(tr["flow"], "transfer.flow")
            flow_from_dict(tr["flow"])
        else:
            _section(raw, "decomposition", _DECOMP)
    except ConfigurationError:
        raise
    except ErgoflowError as exc:
        raise ConfigurationError(str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid config: {exc!r}") from exc
    return cfg


def loads(text):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML: {exc}") from None
    return validate(raw)


def load(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def _canonical(v):
    if isinstance(v, dict):
        return {k: _canonical(v[k]) for k in sorted(v)}
    if isinstance(v, (list, tuple)):
        return [_canonical(u) for u in v]
    return v


def dumps(raw):
    """Canonical text: sorted keys, tomli_w layout."""
    return tomli_w.dumps(_canonical(raw))
