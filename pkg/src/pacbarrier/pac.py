"""Risk level from the compression-set size and the continuous-time
guarantee statement.

The risk level ``eps(k, beta, N)`` is the root in ``[k/N, 1]`` of

    beta/(2N) * sum_{m=k}^{N-1}  C(m,k)/C(N,k) * (1-eps)^(m-N)
  + beta/(6N) * sum_{m=N+1}^{4N} C(m,k)/C(N,k) * (1-eps)^(m-N)  = 1,

with ``eps(N, beta, N) = 1``. Everything is evaluated in log space; binomial
ratios come from log-gamma differences so ``N`` up to 1e6 is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import gammaln, logsumexp


class BracketError(ArithmeticError):
    """The defining equation did not change sign exactly once on the bracket."""

    def __init__(self, msg, brackets=None):
        super().__init__(msg)
        self.brackets = brackets or []


def _log_terms(k: int, beta: float, n: int):
    """Log coefficients and exponents ``(m - N)`` of every term."""
    m = np.concatenate([np.arange(k, n), np.arange(n + 1, 4 * n + 1)]).astype(float)
    log_ratio = gammaln(m + 1) - gammaln(m - k + 1) - gammaln(n + 1) + gammaln(n - k + 1)
    log_w = np.where(m < n, math.log(beta / (2 * n)), math.log(beta / (6 * n)))
    return log_ratio + log_w, m - n


def log_lhs(eps: float, k: int, beta: float, n: int, _terms=None) -> float:
    """log of the left-hand side at ``eps``."""
    logc, expo = _terms if _terms is not None else _log_terms(k, beta, n)
    return float(logsumexp(logc + expo * math.log1p(-eps)))


def residual(eps: float, k: int, beta: float, n: int) -> float:
    """Relative residual ``LHS(eps) - 1`` (0 when k = N and eps = 1)."""
    if k == n:
        return 0.0 if eps == 1.0 else math.inf
    return math.expm1(log_lhs(eps, k, beta, n))


def _check_args(k, beta, n):
    if n < 1:
        raise ValueError("N must be at least 1")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= N")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")


def epsilon(k: int, beta: float, n: int, scan_points: int = 64) -> float:
    """Risk level for compression size ``k`` out of ``n`` samples at
    confidence ``1 - beta``. Bisection on the log of the left-hand side."""
    k, n = int(k), int(n)
    _check_args(k, beta, n)
    if k == n:
        return 1.0
    terms = _log_terms(k, beta, n)
    lo = k / n
    hi = 1.0 - np.finfo(float).epsneg  # largest double below 1
    g = lambda e: log_lhs(e, k, beta, n, terms)

    # coarse scan: the root is claimed unique, but report rather than guess
    # if the sign pattern says otherwise
    grid = np.concatenate([[lo], lo + (hi - lo) * (1 - np.geomspace(1, 1e-16, scan_points))[1:-1], [hi]])
    vals = np.array([g(e) for e in grid])
    signs = np.sign(vals)
    changes = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    if vals[0] > 0 or vals[-1] < 0 or changes.size != 1:
        brackets = [(float(grid[i]), float(grid[i + 1])) for i in changes]
        raise BracketError(
            f"eps({k}, {beta}, {n}): log-residuals {vals[0]:.3g} at {lo:.6g} and "
            f"{vals[-1]:.3g} at {hi:.17g}; sign changes at {brackets}",
            brackets,
        )
    a, b = grid[changes[0]], grid[changes[0] + 1]
    ga = vals[changes[0]]
    if ga == 0.0:
        return float(a)
    while True:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        gm = g(mid)
        if gm == 0.0:
            return float(mid)
        if (gm < 0) == (ga < 0):
            a, ga = mid, gm
        else:
            b = mid
    # of the two adjacent doubles, return the one with the smaller residual
    return float(a if abs(ga) <= abs(g(b)) else b)


@dataclass
class PacBound:
    compression_size: int
    confidence_param: float
    sample_count: int
    epsilon: float

    def __post_init__(self):
        _check_args(self.compression_size, self.confidence_param, self.sample_count)
        lo = self.compression_size / self.sample_count
        if not lo - 1e-15 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon {self.epsilon} outside [{lo}, 1]")

    @classmethod
    def compute(cls, k: int, beta: float, n: int) -> "PacBound":
        return cls(int(k), float(beta), int(n), epsilon(k, beta, n))

    @property
    def vacuous(self) -> bool:
        return self.epsilon >= 1.0

    def to_dict(self) -> dict:
        return {
            "k": self.compression_size,
            "beta": self.confidence_param,
            "N": self.sample_count,
            "epsilon": self.epsilon,
        }


@dataclass
class GuaranteeStatement:
    bound: PacBound
    d_used: float
    constants: dict
    caveats: List[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        b = self.bound
        s = (
            f"With confidence at least 1 - {b.confidence_param:g} over the draw of "
            f"N = {b.sample_count} trajectories, the probability that a new "
            f"continuous-time trajectory violates the barrier conditions is at "
            f"most epsilon = {b.epsilon:.5f} (compression size {b.compression_size}, "
            f"tightening d = {self.d_used:.6g})."
        )
        if self.caveats:
            s += " Caveats: " + "; ".join(self.caveats) + "."
        return s

    def to_dict(self) -> dict:
        return {
            "bound": self.bound.to_dict(),
            "d_used": self.d_used,
            "constants": self.constants,
            "caveats": list(self.caveats),
            "statement": self.text,
        }


class GuaranteeMismatch(ValueError):
    pass


def assemble_guarantee(result, bound: PacBound, constants: Optional[dict] = None) -> GuaranteeStatement:
    """Turn a successful synthesis result into the guarantee statement."""
    if not getattr(result, "success", False):
        raise GuaranteeMismatch("synthesis did not succeed; no guarantee holds")
    k = len(result.compression.indices)
    if bound.compression_size != k:
        raise GuaranteeMismatch(f"bound uses k={bound.compression_size} but compression set has {k}")
    constants = dict(constants if constants is not None else result.constants or {})
    caveats = []
    if bound.vacuous:
        caveats.append("compression set equals the whole multi-sample, the bound is vacuous")
    if constants.get("asymptotic", False):
        caveats.append(
            "Lipschitz constants and norm bounds are sampled max-slope estimates, "
            "which converge only asymptotically"
        )
    return GuaranteeStatement(bound, float(result.d_used), constants, caveats)
