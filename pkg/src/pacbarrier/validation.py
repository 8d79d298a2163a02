"""Monte Carlo validation of a certificate on fresh continuous trajectories.

Fresh initial states are integrated densely (RK4, a tenth of the sampling
gap by default). For each trajectory we record whether it enters the unsafe
set, whether the continuous-time rate condition ``dB/dt < (inf_U B -
sup_I B) / T`` holds at every integrator point, and the discretisation gap
between its continuous and discretised losses. The gap is
``sup_t dB/dt - max_k slope_k``; the state loss and the permitted rate cancel.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certificate import NeuralCertificate, linear_certificate
from .dynamics import (
    BoxRegion,
    RegionSpec,
    iter_dense_batches,
    linear_system,
    sample_indices,
    sample_initial_states,
    uniform_sample_times,
)
from .loss import GridSets, eval_grids, make_grids, max_slope

_POINTS_PER_CHUNK = 1 << 20


class Prop1Status(str, enum.Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    INAPPLICABLE = "inapplicable"  # preconditions not met; says nothing either way


@dataclass
class Prop1Result:
    status: Prop1Status
    max_b: float = float("nan")
    inf_unsafe: float = float("nan")
    reason: str = ""

    def __bool__(self):
        raise TypeError("use .status: an inapplicable check is neither true nor false")


def check_proposition1(cert, system, times, states, grids: GridSets, horizon: float) -> Prop1Result:
    """Along one dense trajectory: if the state conditions hold on the grids
    and ``dB/dt`` stays below the permitted rate at every point, then ``B``
    must stay strictly below its infimum over the unsafe grid.

    Returns ``INAPPLICABLE`` when a precondition fails.
    """
    states = np.asarray(states, dtype=float)
    ge = eval_grids(cert, grids)
    if not (np.all(ge.b_init <= 0.0) and np.all(ge.b_unsafe >= grids.margin)):
        return Prop1Result(Prop1Status.INAPPLICABLE, reason="state conditions fail on the grids")
    if not np.all(np.isfinite(states)):
        return Prop1Result(Prop1Status.INAPPLICABLE, reason="trajectory diverged")
    b, g = cert.value_and_grad_input(states)
    rate = np.sum(g * system.eval(states), axis=-1)
    if not np.all(rate < ge.rhs(horizon)):
        return Prop1Result(Prop1Status.INAPPLICABLE, reason="rate condition fails along the trajectory")
    top = float(b.max())
    status = Prop1Status.HOLDS if top < ge.inf_unsafe else Prop1Status.VIOLATED
    return Prop1Result(status, top, ge.inf_unsafe)


@dataclass
class ValidationReport:
    n_fresh: int
    unsafe_entry_rate: float
    psi_violation_rate: float
    gap_max: float
    epsilon: float
    d: float
    passed: bool
    diverged: int = 0
    state_conditions_hold: bool = True
    prop1_applicable: int = 0
    prop1_counterexamples: int = 0
    seed: int = 0
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_fresh": self.n_fresh,
            "unsafe_entry_rate": self.unsafe_entry_rate,
            "psi_violation_rate": self.psi_violation_rate,
            "gap_max": self.gap_max,
            "epsilon": self.epsilon,
            "d": self.d,
            "pass": self.passed,
            "diverged": self.diverged,
            "state_conditions_hold": self.state_conditions_hold,
            "prop1_applicable": self.prop1_applicable,
            "prop1_counterexamples": self.prop1_counterexamples,
            "seed": self.seed,
            "wall_time": self.wall_time,
            **self.details,
        }

    def save(self, path) -> None:
        doc = {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
               for k, v in self.to_dict().items()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)


@dataclass
class TrajectoryStats:
    """Per-trajectory outcomes of a validation run."""

    entered_unsafe: np.ndarray
    max_rate: np.ndarray
    max_slope: np.ndarray
    max_b: np.ndarray
    diverged: np.ndarray

    @property
    def gaps(self) -> np.ndarray:
        return self.max_rate - self.max_slope


def trajectory_stats(cert, system, regions: RegionSpec, x0s, horizon: float, sample_times,
                     step: Optional[float] = None) -> TrajectoryStats:
    """Integrate every row of ``x0s`` densely and collect what validation needs."""
    sample_times = np.asarray(sample_times, dtype=float)
    if step is None:
        step = float(np.max(np.diff(sample_times))) / 10.0
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    n = x0s.shape[0]
    steps = int(np.ceil(horizon / step)) + 1
    batch = max(1, _POINTS_PER_CHUNK // steps)
    entered = np.zeros(n, bool)
    rate = np.full(n, np.nan)
    slope = np.full(n, np.nan)
    top = np.full(n, np.nan)
    bad = np.zeros(n, bool)
    idx = None
    for sl, times, states, div in iter_dense_batches(system, x0s, horizon, step, batch):
        if idx is None:
            idx = sample_indices(times, sample_times)
        bad[sl] = div
        ok = ~div
        entered[sl] = np.any(regions.unsafe.contains(states), axis=0)
        if not ok.any():
            continue
        good = states[:, ok]
        flat = good.reshape(-1, good.shape[-1])
        b, g = cert.value_and_grad_input(flat)
        r = np.sum(g * system.eval(flat), axis=-1).reshape(good.shape[:2])
        b = b.reshape(good.shape[:2])
        pos = np.arange(sl.start, sl.stop)[ok]
        rate[pos] = r.max(axis=0)
        top[pos] = b.max(axis=0)
        slope[pos] = max_slope(b[idx].T, times[idx])[0]
    return TrajectoryStats(entered, rate, slope, top, bad)


def monte_carlo_validate(cert: NeuralCertificate, system, regions: RegionSpec, grids: GridSets,
                         horizon: float, sample_times, epsilon: float, d: float,
                         n_fresh: int = 10_000, seed: int = 0, step: Optional[float] = None,
                         ) -> ValidationReport:
    """Empirical check of a certificate against ``n_fresh`` new trajectories.

    A trajectory violates the barrier conditions if the state conditions
    fail on the grids, if ``dB/dt`` reaches the permitted rate at any dense
    point, or if integration diverges. The run passes when the violation
    rate is at most ``epsilon`` and every discretisation gap is at most ``d``.
    """
    if n_fresh < 1:
        raise ValueError("n_fresh must be positive")
    t0 = time.perf_counter()
    x0s = sample_initial_states(regions.initial, n_fresh, seed)
    st = trajectory_stats(cert, system, regions, x0s, horizon, sample_times, step)
    ge = eval_grids(cert, grids)
    psi_s = bool(np.all(ge.b_init <= 0.0) and np.all(ge.b_unsafe >= grids.margin))
    rhs = ge.rhs(horizon)
    with np.errstate(invalid="ignore"):
        rate_ok = (st.max_rate < rhs) & ~st.diverged
    violation = ~rate_ok if psi_s else np.ones(n_fresh, bool)
    applicable = rate_ok & psi_s
    counter = applicable & ~(st.max_b < ge.inf_unsafe)
    gaps = st.gaps[~st.diverged]
    gap_max = float(gaps.max()) if gaps.size else float("nan")
    viol_rate = float(violation.mean())
    passed = bool(viol_rate <= epsilon and gaps.size and gap_max <= d)
    return ValidationReport(
        n_fresh=n_fresh,
        unsafe_entry_rate=float(st.entered_unsafe.mean()),
        psi_violation_rate=viol_rate,
        gap_max=gap_max,
        epsilon=float(epsilon),
        d=float(d),
        passed=passed,
        diverged=int(st.diverged.sum()),
        state_conditions_hold=psi_s,
        prop1_applicable=int(applicable.sum()),
        prop1_counterexamples=int(counter.sum()),
        seed=seed,
        wall_time=time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------
# a case with a known violation probability


@dataclass
class CalibrationCase:
    system: object
    regions: RegionSpec
    grids: GridSets
    certificate: NeuralCertificate
    horizon: float
    sample_times: np.ndarray
    probability: float


def weakened_linear_case(horizon: float = 2.0, margin: float = 0.1) -> CalibrationCase:
    """1-D decay ``dx/dt = -x`` with initial set ``[-1, 1]``, unsafe set
    ``[1.5, 2]`` and the certificate ``B(x) = x - 1``.

    The state conditions hold, the permitted rate is ``0.5 / T`` and
    ``dB/dt = -x`` peaks at ``t = 0``, so a trajectory violates the rate
    condition exactly when ``x0 <= -0.5 / T``. For uniform initial states
    that happens with probability ``(1 - 0.5 / T) / 2``.
    """
    if horizon <= 0.5:
        raise ValueError("horizon must exceed 0.5 for a nontrivial violation probability")
    regions = RegionSpec(BoxRegion([-2.0], [2.0]), BoxRegion([-1.0], [1.0]), BoxRegion([1.5], [2.0]))
    grids = make_grids(regions, 11, margin)
    cert = linear_certificate([1.0], -1.0)
    return CalibrationCase(
        system=linear_system(-1.0, 1),
        regions=regions,
        grids=grids,
        certificate=cert,
        horizon=horizon,
        sample_times=uniform_sample_times(horizon, 21),
        probability=(1.0 - 0.5 / horizon) / 2.0,
    )
