"""Experiment runner: executes a config, writes curves, reports and a manifest.

Exit codes: 0 success, 2 a plan errored (or an oracle delta exceeded its
tolerance), 3 the config is invalid or has no registered oracle.
"""

import csv
import io
import json
import logging
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import __version__
from .averaging import continuous_average
from .config import load, point_to_dict
from .diagnostics import convergence_report, residual_tolerance, summary_csv
from .discrete import suspension_transfer_check
from .errors import ConfigurationError, ErgoflowError
from .flows import Sl2Flow, flow_from_dict
from .oracles import character_limit
from .poly import Polynomial, shift_scale_decompose
from .sampling import CUSP_TRUNCATION_MASS, _rng

log = logging.getLogger("ergoflow")

EXIT_OK, EXIT_PLAN, EXIT_CONFIG = 0, 2, 3
MANIFEST = "manifest.json"


def atomic_write(path, text):
    """Write via a temp file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g(v):
    return "%.17g" % v


def _table(header, rows, cfg_hash):
    buf = io.StringIO()
    buf.write(f"# manifest={MANIFEST} config_hash={cfg_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# per-kind jobs


def _average_job(cfg, i, x):
    plan, quad = cfg.plan, cfg.quad
    curve = continuous_average(plan, x, quad)
    try:
        rep = convergence_report(plan, x, quad, curve=curve)
        report = rep.to_dict()
        residual = rep.residual
        flags = [] if rep.predicted.converged else [f"point {i}: unconverged ingredients"]
    except ConfigurationError as exc:
        rep = None
        report = {"verdict": None, "prediction_error": str(exc), "metadata": curve.metadata}
        residual, flags = float("nan"), [f"point {i}: no prediction ({exc})"]
    report["point"] = point_to_dict(x)
    report["manifest"] = MANIFEST
    rows = []
    for h, v, e in zip(curve.horizons, curve.values, curve.errors):
        hs = list(h) if isinstance(h, tuple) else [h]
        v = complex(v)
        rows.append([_g(m) for m in hs] + [_g(v.real), _g(v.imag), _g(e), _g(residual)])
    k = len(curve.horizons[0]) if isinstance(curve.horizons[0], tuple) else 1
    header = (["M"] if k == 1 else [f"M{j + 1}" for j in range(k)]) + ["re", "im", "err_estimate", "residual"]
    return header, rows, report, flags, rep


def _run_average(cfg, out, threads, stages):
    t0 = time.perf_counter()
    pts = cfg.points()
    stages["points"] = time.perf_counter() - t0
    t0 = time.perf_counter()

    def job(i):
        return _average_job(cfg, i, pts[i])

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(job, range(len(pts))))
    stages["averages"] = time.perf_counter() - t0
    files, flags = [], []
    h = cfg.hash()
    summary = []
    for i, (header, rows, report, fl, rep) in enumerate(results):
        stem = f"{cfg.name}_p{i:04d}"
        atomic_write(os.path.join(out, stem + ".csv"), _table(header, rows, h))
        atomic_write(os.path.join(out, stem + ".json"), json.dumps(report, sort_keys=True, indent=1, default=str) + "\n")
        files += [stem + ".csv", stem + ".json"]
        flags += fl
        if rep is not None:
            summary.append((stem, rep))
    if summary:
        text = summary_csv(summary)
        atomic_write(os.path.join(out, cfg.name + "_summary.csv"),
                     f"# manifest={MANIFEST} config_hash={h}\n" + text)
        files.append(cfg.name + "_summary.csv")
    return files, flags


def transfer_cases(cfg):
    """(residual, lhs, rhs, z, state) for each configured base state."""
    tr = cfg.raw["transfer"]
    flow = flow_from_dict(tr["flow"])
    im = tr.get("f_im", [0.0] * len(tr["f_re"]))
    f = np.array([complex(a, b) for a, b in zip(tr["f_re"], im)])
    out = []
    for j, s in enumerate(tr["states"]):
        r = suspension_transfer_check(flow, f, tr["polys"], s, N=tr.get("N", 50), seed=cfg.effective_seed + j)
        out.append((abs(r.residual), r.lhs, r.rhs, r.z, s))
    return out


def decomposition_cases(cfg):
    """Random (Q, delta, n, t) and the relative residual of the shift-scale identity.

    The left side Q(n delta + t) is evaluated exactly in rationals."""
    dec = cfg.raw.get("decomposition", {})
    n_cases, maxdeg = dec.get("cases", 1000), dec.get("max_degree", 5)
    r = _rng(cfg.effective_seed, 0, tag=11)
    out = []
    for _ in range(n_cases):
        deg = int(r.integers(2, maxdeg + 1))
        coeffs = [0.0] + list(r.uniform(-1, 1, deg))
        Q = Polynomial(coeffs)
        delta = float(r.uniform(0.05, 2.0))
        n = int(r.integers(0, 50))
        t = float(r.uniform(0.0, delta))
        dec_ = shift_scale_decompose(Q, delta)
        u = Fraction(n) * Fraction(delta) + Fraction(t)
        exact = sum(Fraction(c) * u ** m for m, c in enumerate(Q.coeffs))
        rhs = float(dec_.evaluate(n, t))
        scale = float(sum(abs(Fraction(c)) * abs(u) ** m for m, c in enumerate(Q.coeffs)))
        out.append((abs(float(Fraction(rhs) - exact)) / scale, coeffs, delta, n, t))
    return out


def _run_transfer(cfg, out):
    cases = transfer_cases(cfg)
    rows = [[s, _g(res), _g(lhs.real), _g(lhs.imag), _g(rhs.real), _g(rhs.imag), " ".join(_g(v) for v in z)]
            for res, lhs, rhs, z, s in cases]
    name = cfg.name + ".csv"
    atomic_write(os.path.join(out, name), _table(["state", "residual", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "z"],
                                                 rows, cfg.hash()))
    return [name], []


def _run_decomposition(cfg, out):
    cases = decomposition_cases(cfg)
    rows = [[_g(res), " ".join(_g(c) for c in coeffs), _g(d), n, _g(t)] for res, coeffs, d, n, t in cases]
    name = cfg.name + ".csv"
    atomic_write(os.path.join(out, name), _table(["rel_residual", "Q", "delta", "n", "t"], rows, cfg.hash()))
    return [name], []


# ---------------------------------------------------------------------------
# entry points


def _notes(cfg):
    notes = []
    if cfg.plan is not None and any(isinstance(f, Sl2Flow) for f in cfg.plan.flows):
        notes.append(f"SL2 Haar sampling truncated at the cusp; excluded mass {CUSP_TRUNCATION_MASS:.3g}")
    return notes


def run(path, threads=1, out_dir=None):
    """Execute a config; returns (exit code, list of written files)."""
    started = time.perf_counter()
    try:
        cfg = load(path)
    except ConfigurationError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG, []
    out = out_dir or cfg.out_dir or os.path.join(os.getcwd(), "ergoflow-out", cfg.name)
    stages = {"load": time.perf_counter() - started}
    code, files, flags, err = EXIT_OK, [], [], None
    try:
        if cfg.kind == "average":
            files, flags = _run_average(cfg, out, threads, stages)
        elif cfg.kind == "transfer":
            files, flags = _run_transfer(cfg, out)
        else:
            files, flags = _run_decomposition(cfg, out)
    except ConfigurationError as exc:
        log.error("config error: %s", exc)
        code, err = EXIT_CONFIG, str(exc)
    except (ErgoflowError, ArithmeticError, ValueError) as exc:
        log.error("plan error: %s: %s", type(exc).__name__, exc)
        code, err = EXIT_PLAN, f"{type(exc).__name__}: {exc}"
    stages["total"] = time.perf_counter() - started
    manifest = {
        "config_hash": cfg.hash(),
        "config": cfg.name,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seeds": {"config": cfg.seed, "effective": cfg.effective_seed},
        "wall_time_s": stages,
        "notes": _notes(cfg),
        "flags": flags,
        "files": files,
        "exit_code": code,
        "error": err,
    }
    atomic_write(os.path.join(out, MANIFEST), json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return code, files + [MANIFEST]


def oracle_compare(path):
    """Compare the config's computation against its registered oracle.

    Returns (exit code, list of deltas)."""
    try:
        cfg = load(path)
    except ConfigurationError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG, []
    try:
        if cfg.kind == "transfer":
            deltas = [c[0] for c in transfer_cases(cfg)]
            tol = 0.0 if cfg.tolerance is None else cfg.tolerance
        elif cfg.kind == "decomposition":
            deltas = [c[0] for c in decomposition_cases(cfg)]
            tol = 1e-10 if cfg.tolerance is None else cfg.tolerance
        else:
            deltas, tol = _average_deltas(cfg)
    except ConfigurationError as exc:
        log.error("no oracle: %s", exc)
        return EXIT_CONFIG, []
    except (ErgoflowError, ArithmeticError, ValueError) as exc:
        log.error("plan error: %s: %s", type(exc).__name__, exc)
        return EXIT_PLAN, []
    worst = max(deltas) if deltas else 0.0
    for i, d in enumerate(deltas):
        log.info("case %d delta %.3e", i, d)
    log.info("max delta %.3e tolerance %.3e", worst, tol)
    return (EXIT_OK if worst <= tol and not math.isnan(worst) else EXIT_PLAN), deltas


def _average_deltas(cfg):
    """Symbolic character limit against the computed tail."""
    plan, quad = cfg.plan, cfg.quad
    deltas = []
    M = quad.M_grid[-1]
    tol = cfg.tolerance if cfg.tolerance is not None else residual_tolerance(M, plan.sup_bound)
    for x in cfg.points():
        limit, _ = character_limit(plan, x)
        tail = continuous_average(plan, x, quad).tail
        deltas.append(abs(tail - limit))
    return deltas, tol
