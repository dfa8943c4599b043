"""Deterministic samplers for the invariant measures of the flow zoo.

Point i of a stream is drawn from the Philox generator keyed by
(seed, i // CHUNK) (plus a component tag for product spaces), so any split of
the index range across workers reproduces the serial stream bit for bit.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import sl2
from .errors import ConfigurationError, ContractViolation
from .flows import KroneckerFlow, MultiSuspensionFlow, ProductFlow, Sl2Flow
from .observables import Y_MAX
from .points import ProductPoint, Sl2Point, SuspensionPoint, TorusPoint

CHUNK = 1024
_Y0 = math.sqrt(3.0) / 2.0
# Haar mass of the cusp region y > Y_MAX, relative to the full domain
CUSP_TRUNCATION_MASS = (1.0 / Y_MAX) / (math.pi / 3.0)


def _rng(seed, chunk, tag=0):
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, (int(tag) << 40) | int(chunk)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _chunked(n, draw):
    """Concatenate draw(chunk_index, size) over the chunks covering range(n)."""
    parts = []
    for c in range(-(-n // CHUNK)):
        parts.append(draw(c, min(CHUNK, n - c * CHUNK)))
    return parts


def _haar_chunk(rng, size):
    xs, ys = [], []
    got = 0
    inv_span = 1.0 / _Y0 - 1.0 / Y_MAX
    while got < size:
        x = rng.random(2 * CHUNK) - 0.5
        u = rng.random(2 * CHUNK)
        y = 1.0 / (1.0 / _Y0 - u * inv_span)
        ok = x * x + y * y >= 1.0
        xs.append(x[ok])
        ys.append(y[ok])
        got += int(ok.sum())
    x = np.concatenate(xs)[:size]
    y = np.concatenate(ys)[:size]
    theta = rng.random(2 * CHUNK)[:size] * math.pi
    sy = np.sqrt(y)
    c, s = np.cos(theta), np.sin(theta)
    # h = n(x) a(y) k(theta); g = h^{-1}
    h = np.empty((size, 2, 2))
    h[:, 0, 0] = sy * c + x * s / sy
    h[:, 0, 1] = -sy * s + x * c / sy
    h[:, 1, 0] = s / sy
    h[:, 1, 1] = c / sy
    g = np.empty_like(h)
    g[:, 0, 0] = h[:, 1, 1]
    g[:, 0, 1] = -h[:, 0, 1]
    g[:, 1, 0] = -h[:, 1, 0]
    g[:, 1, 1] = h[:, 0, 0]
    return g


def haar_sample_sl2(seed, n):
    """n points of SL2(R)/SL2(Z) from normalised Haar measure, cusp truncated
    at Im z <= Y_MAX (discarded mass CUSP_TRUNCATION_MASS < 1e-3)."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    g = np.concatenate(_chunked(n, lambda c, size: _haar_chunk(_rng(seed, c), size)))
    return Sl2Point(sl2.reduce_matrices(g))


@dataclass(frozen=True)
class MeasureSampler:
    flow: object
    seed: int
    scheme: str = "invariant"


def _sample(flow, seed, n, tag):
    if isinstance(flow, KroneckerFlow):
        parts = _chunked(n, lambda c, size: _rng(seed, c, tag).random((size, flow.dim)))
        return TorusPoint(np.concatenate(parts))
    if isinstance(flow, MultiSuspensionFlow):
        d = flow.D
        if flow.finite:
            def draw(c, size):
                r = _rng(seed, c, tag)
                return r.integers(0, flow.n_states, size), r.random((size, d))
            parts = _chunked(n, draw)
            return SuspensionPoint(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
        dim = flow.base_maps[0].dim

        def draw(c, size):
            r = _rng(seed, c, tag)
            return r.random((size, dim)), r.random((size, d))
        parts = _chunked(n, draw)
        return SuspensionPoint(TorusPoint(np.concatenate([p[0] for p in parts])), np.concatenate([p[1] for p in parts]))
    if isinstance(flow, Sl2Flow):
        g = np.concatenate(_chunked(n, lambda c, size: _haar_chunk(_rng(seed, c, tag), size)))
        return Sl2Point(sl2.reduce_matrices(g))
    if isinstance(flow, ProductFlow):
        return ProductPoint(tuple(_sample(comp, seed, n, tag * 16 + j + 1) for j, comp in enumerate(flow.components)))
    raise ConfigurationError(f"no sampler for flow family {getattr(flow, 'family', None)!r}")


def sample_invariant(sampler, n):
    """Batch of n points (batch shape (n,)) drawn from the flow's invariant measure."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    if sampler.scheme != "invariant":
        raise ConfigurationError(f"unsupported sampling scheme {sampler.scheme!r}")
    return _sample(sampler.flow, sampler.seed, int(n), 0)
