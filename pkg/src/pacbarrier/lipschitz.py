"""Sampled max-slope estimates of Lipschitz constants and norm bounds.

Estimates are lower bounds on the true constants that converge only as the
number of samples grows; a multiplicative safety factor is applied and
recorded. Samples are drawn in fixed-size blocks, each from its own seeded
stream, so a run with more pairs extends (never reshuffles) a run with fewer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import BoxRegion

BLOCK = 4096
SHORT_RANGE_FRACTION = 0.5  # of each block; offsets up to diameter/100
DEFAULT_SAFETY = 1.2


class Method(str, enum.Enum):
    MAX_SLOPE = "max_slope"
    SUPPLIED_ANALYTIC = "supplied_analytic"


@dataclass(frozen=True)
class ConstantEstimate:
    value: float
    samples_used: int
    safety_factor: float = 1.0
    method: Method = Method.MAX_SLOPE
    raw: float = float("nan")

    def __post_init__(self):
        if self.safety_factor < 1.0:
            raise ValueError("safety factor must be >= 1")
        if self.value < 0:
            raise ValueError("constants are nonnegative")

    @classmethod
    def supplied(cls, value: float) -> "ConstantEstimate":
        return cls(float(value), 0, 1.0, Method.SUPPLIED_ANALYTIC, float(value))

    @property
    def asymptotic(self) -> bool:
        return self.method == Method.MAX_SLOPE

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "raw": self.raw,
            "samples_used": self.samples_used,
            "safety_factor": self.safety_factor,
            "method": self.method.value,
            "asymptotic": self.asymptotic,
        }


def _block_pairs(domain: BoxRegion, seed: int, block: int):
    rng = np.random.default_rng([seed, block])
    span = domain.upper - domain.lower
    x = domain.lower + rng.random((BLOCK, domain.dim)) * span
    y = domain.lower + rng.random((BLOCK, domain.dim)) * span
    n_short = int(BLOCK * SHORT_RANGE_FRACTION)
    direction = rng.normal(size=(n_short, domain.dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.random((n_short, 1)) * domain.diameter / 100.0
    y[:n_short] = np.clip(x[:n_short] + radius * direction, domain.lower, domain.upper)
    return x, y


def _block_points(domain: BoxRegion, seed: int, block: int):
    rng = np.random.default_rng([seed, block, 1])
    pts = domain.lower + rng.random((BLOCK, domain.dim)) * (domain.upper - domain.lower)
    if block == 0:
        # corners first: norms of many simple maps peak there
        corners = np.array(np.meshgrid(*zip(domain.lower, domain.upper), indexing="ij"))
        corners = corners.reshape(domain.dim, -1).T[: BLOCK // 2]
        pts[: len(corners)] = corners
    return pts


def _as_vector_fn(fn):
    def wrapped(x):
        y = np.asarray(fn(x), dtype=float)
        return y.reshape(x.shape[0], -1)
    return wrapped


def max_slope_trace(fn, domain: BoxRegion, pairs: int, seed: int = 0) -> np.ndarray:
    """Running maximum of ``|fn(x)-fn(y)| / |x-y|`` over the first ``pairs``
    sampled pairs (so it is non-decreasing by construction)."""
    if pairs < 1:
        raise ValueError("need at least one pair")
    fn = _as_vector_fn(fn)
    out = np.empty(pairs)
    best = 0.0
    done = 0
    block = 0
    while done < pairs:
        x, y = _block_pairs(domain, seed, block)
        take = min(BLOCK, pairs - done)
        x, y = x[:take], y[:take]
        dist = np.linalg.norm(x - y, axis=1)
        diff = np.linalg.norm(fn(x) - fn(y), axis=1)
        ok = dist > 0  # coincident pairs are skipped
        slope = np.zeros(take)
        slope[ok] = diff[ok] / dist[ok]
        running = np.maximum.accumulate(np.maximum(slope, best))
        out[done:done + take] = running
        best = running[-1]
        done += take
        block += 1
    return out


def estimate_lipschitz(fn, domain: BoxRegion, pairs: int = 100_000, seed: int = 0,
                       safety_factor: float = DEFAULT_SAFETY) -> ConstantEstimate:
    """Safety factor times the largest sampled slope of ``fn`` on ``domain``.

    ``fn`` maps a batch ``(P, n)`` to ``(P,)`` or ``(P, m)``. Half of every
    sampling block are short-range pairs, where the local slope of a smooth
    map is approached.
    """
    raw = float(max_slope_trace(fn, domain, pairs, seed)[-1])
    return ConstantEstimate(safety_factor * raw, pairs, safety_factor, Method.MAX_SLOPE, raw)


def estimate_bound(fn, domain: BoxRegion, points: int = 100_000, seed: int = 0,
                   safety_factor: float = DEFAULT_SAFETY) -> ConstantEstimate:
    """Safety factor times the largest sampled ``|fn(x)|`` on ``domain``."""
    if points < 1:
        raise ValueError("need at least one point")
    fn = _as_vector_fn(fn)
    best, done, block = 0.0, 0, 0
    while done < points:
        take = min(BLOCK, points - done)
        x = _block_points(domain, seed, block)[:take]
        best = max(best, float(np.linalg.norm(fn(x), axis=1).max()))
        done += take
        block += 1
    return ConstantEstimate(safety_factor * best, points, safety_factor, Method.MAX_SLOPE, best)


def certificate_constants(cert, domain: BoxRegion, points: int = 20_000, seed: int = 0,
                          safety_factor: float = DEFAULT_SAFETY):
    """(Lipschitz constant, norm bound) of the map x -> dB/dx on ``domain``."""
    lb = estimate_lipschitz(cert.grad_input, domain, points, seed, safety_factor)
    mb = estimate_bound(cert.grad_input, domain, points, seed, safety_factor)
    return lb, mb


def system_constants(system, domain: BoxRegion, points: int = 100_000, seed: int = 0,
                     safety_factor: float = DEFAULT_SAFETY):
    """(Lipschitz constant, norm bound) of the vector field; analytic values
    on the system model take precedence."""
    if system.lipschitz_f is not None:
        lf = ConstantEstimate.supplied(system.lipschitz_f)
    else:
        lf = estimate_lipschitz(system.eval, domain, points, seed, safety_factor)
    if system.bound_f is not None:
        mf = ConstantEstimate.supplied(system.bound_f)
    else:
        mf = estimate_bound(system.eval, domain, points, seed, safety_factor)
    return lf, mf
