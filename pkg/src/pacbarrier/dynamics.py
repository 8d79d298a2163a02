"""Continuous-time systems, box regions and trajectory generation.

Vector fields are vectorised: ``f`` maps an array of shape ``(..., n)`` to an
array of the same shape, so a whole batch of trajectories advances with one
call per Runge-Kutta stage.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np


class IntegrationDiverged(RuntimeError):
    """A non-finite state appeared during integration."""

    def __init__(self, time: float, indices: Optional[np.ndarray] = None):
        self.time = float(time)
        self.indices = indices
        msg = f"integration diverged at t={self.time:.6g}"
        if indices is not None:
            msg += f" for trajectories {np.asarray(indices).tolist()[:10]}"
        super().__init__(msg)


class OutOfHorizon(ValueError):
    pass


@dataclass(frozen=True)
class BoxRegion:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise ValueError(f"empty box: lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x) -> np.ndarray:
        """Membership for one point or a batch ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def is_subset_of(self, other: "BoxRegion") -> bool:
        return bool(np.all(self.lower >= other.lower) and np.all(self.upper <= other.upper))

    def intersects(self, other: "BoxRegion") -> bool:
        return bool(np.all(self.lower <= other.upper) and np.all(other.lower <= self.upper))

    def lattice(self, points_per_dim: int) -> np.ndarray:
        """Boundary-inclusive tensor grid, shape ``(points_per_dim**n, n)``."""
        axes = [
            np.linspace(lo, hi, points_per_dim) if hi > lo else np.array([lo])
            for lo, hi in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d) -> "BoxRegion":
        return cls(d["lower"], d["upper"])


@dataclass(frozen=True)
class RegionSpec:
    """State space ``domain`` with initial and unsafe boxes inside it."""

    domain: BoxRegion
    initial: BoxRegion
    unsafe: BoxRegion

    def __post_init__(self):
        dims = {self.domain.dim, self.initial.dim, self.unsafe.dim}
        if len(dims) != 1:
            raise ValueError("region dimensions disagree")
        if not self.initial.is_subset_of(self.domain):
            raise ValueError("initial set is not contained in the domain")
        if not self.unsafe.is_subset_of(self.domain):
            raise ValueError("unsafe set is not contained in the domain")
        if self.initial.intersects(self.unsafe):
            raise ValueError("initial and unsafe sets intersect")

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "initial": self.initial.to_dict(),
            "unsafe": self.unsafe.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "RegionSpec":
        return cls(
            BoxRegion.from_dict(d["domain"]),
            BoxRegion.from_dict(d["initial"]),
            BoxRegion.from_dict(d["unsafe"]),
        )


@dataclass
class SystemModel:
    """Autonomous ODE ``x' = f(x)``.

    ``lipschitz_f`` and ``bound_f`` are optional analytic constants for the
    vector field over the system's working domain; when absent they must be
    estimated (see :mod:`pacbarrier.lipschitz`).
    """

    name: str
    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    lipschitz_f: Optional[float] = None
    bound_f: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"{self.name}: expected state of length {self.dim}, got {x.shape[-1]}")
        return self.f(x)

    __call__ = eval


@dataclass
class ContinuousTrajectory:
    times: np.ndarray
    states: np.ndarray
    step: float

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.times, self.states)


@dataclass
class DiscretizedTrajectory:
    times: np.ndarray
    states: np.ndarray
    max_gap: float

    @property
    def M(self) -> int:
        return len(self.times) - 1

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.times, self.states)


def write_trajectory_csv(path, times, states) -> None:
    states = np.asarray(states)
    n = states.shape[-1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
        for t, x in zip(times, states):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x])


# --------------------------------------------------------------------------
# integration


def time_grid(horizon: float, step: float) -> np.ndarray:
    """Uniform grid on ``[0, horizon]`` whose spacing does not exceed ``step``."""
    if step <= 0:
        raise ValueError("step must be positive")
    if horizon < step * (1 - 1e-12):
        raise ValueError("horizon must be at least one step")
    n = max(1, math.ceil(horizon / step - 1e-9))
    return np.linspace(0.0, horizon, n + 1)


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system: SystemModel, x0, horizon: float, step: float) -> ContinuousTrajectory:
    """Classical fixed-step RK4 from ``x0`` over ``[0, horizon]``."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.dim,):
        raise ValueError(f"x0 must have length {system.dim}")
    times, states, bad = integrate_batch(system, x0[None, :], horizon, step)
    if bad[0]:
        k = int(np.argmax(~np.all(np.isfinite(states[:, 0]), axis=-1)))
        raise IntegrationDiverged(times[k])
    return ContinuousTrajectory(times, states[:, 0], float(times[1] - times[0]))


def integrate_batch(system: SystemModel, x0s, horizon: float, step: float, keep=None):
    """Integrate many initial states at once.

    Returns ``(times, states, diverged)`` with ``states`` of shape
    ``(len(times), N, n)``. If ``keep`` (grid indices) is given only those
    rows are stored and ``times`` is restricted accordingly. Trajectories that
    produce non-finite values are frozen as NaN from that point on and
    flagged in ``diverged``; callers decide whether that is an error.
    """
    x = np.array(x0s, dtype=float, copy=True)
    if x.ndim != 2 or x.shape[1] != system.dim:
        raise ValueError(f"initial states must have shape (N, {system.dim})")
    grid = time_grid(horizon, step)
    h = grid[1] - grid[0]
    if keep is None:
        keep = np.arange(grid.size)
    keep = np.asarray(keep, dtype=int)
    slot = np.full(grid.size, -1)
    slot[keep] = np.arange(keep.size)
    out = np.empty((keep.size, x.shape[0], x.shape[1]))
    diverged = np.zeros(x.shape[0], dtype=bool)
    f = system.f
    with np.errstate(all="ignore"):
        for i in range(grid.size):
            if i > 0:
                x = _rk4_step(f, x, h)
                bad = ~np.all(np.isfinite(x), axis=1)
                if bad.any():
                    diverged |= bad
                    x[bad] = np.nan
            if slot[i] >= 0:
                out[slot[i]] = x
    return grid[keep], out, diverged


def iter_dense_batches(system, x0s, horizon, step, batch_size=64) -> Iterator:
    """Yield ``(index_slice, times, states, diverged)`` over chunks of ``x0s``
    so dense trajectories never all sit in memory together."""
    x0s = np.asarray(x0s, dtype=float)
    for start in range(0, len(x0s), batch_size):
        sl = slice(start, min(start + batch_size, len(x0s)))
        times, states, bad = integrate_batch(system, x0s[sl], horizon, step)
        yield sl, times, states, bad


# --------------------------------------------------------------------------
# sampling and discretisation


def sample_initial_states(region: BoxRegion, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. uniform draws from ``region``, shape ``(count, n)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if count > 1 and np.all(region.lower == region.upper):
        warnings.warn(
            "degenerate initial region: every sample is the same point, "
            "so the sampling distribution concentrates mass",
            RuntimeWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    u = rng.random((count, region.dim))
    return region.lower + u * (region.upper - region.lower)


def uniform_sample_times(horizon: float, count: int) -> np.ndarray:
    """``count`` equally spaced sample times on ``[0, horizon]`` (so M = count - 1)."""
    if count < 2:
        raise ValueError("need at least two sample times")
    return np.linspace(0.0, horizon, count)


def sample_indices(grid: np.ndarray, sample_times) -> np.ndarray:
    """Nearest integrator-grid index for each sample time."""
    ts = np.asarray(sample_times, dtype=float)
    h = grid[1] - grid[0]
    horizon = grid[-1]
    if ts.ndim != 1 or ts.size < 2:
        raise ValueError("need at least two sample times")
    if ts[0] != 0.0:
        raise ValueError("first sample time must be 0")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if ts[-1] > horizon + 1e-9 * max(1.0, horizon):
        raise OutOfHorizon(f"sample time {ts[-1]} beyond horizon {horizon}")
    idx = np.rint(ts / h).astype(int)
    if np.any(np.abs(idx * h - ts) > 0.5 * h * (1 + 1e-9)):
        raise ValueError("sample time not within half a step of the integrator grid")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("two sample times map to the same grid point; refine the step")
    return idx


def discretize(traj: ContinuousTrajectory, sample_times) -> DiscretizedTrajectory:
    """Pick the integrator states nearest to ``sample_times``."""
    idx = sample_indices(traj.times, sample_times)
    times = traj.times[idx]
    return DiscretizedTrajectory(times, traj.states[idx], float(np.max(np.diff(times))))


@dataclass
class SampleBatch:
    """A multi-sample of discretised trajectories sharing one time grid.

    ``states`` has shape ``(N, M + 1, n)``. This is the working layout for
    synthesis; :meth:`trajectory` recovers an individual
    :class:`DiscretizedTrajectory`.
    """

    times: np.ndarray
    states: np.ndarray
    x0: Optional[np.ndarray] = None

    @property
    def max_gap(self) -> float:
        return float(np.max(np.diff(self.times)))

    def __len__(self) -> int:
        return self.states.shape[0]

    def trajectory(self, i: int) -> DiscretizedTrajectory:
        return DiscretizedTrajectory(self.times, self.states[i], self.max_gap)

    def subset(self, indices) -> "SampleBatch":
        indices = np.asarray(indices, dtype=int)
        x0 = None if self.x0 is None else self.x0[indices]
        return SampleBatch(self.times, self.states[indices], x0)

    @classmethod
    def from_trajectories(cls, trajs: Sequence[DiscretizedTrajectory]) -> "SampleBatch":
        times = trajs[0].times
        for tr in trajs[1:]:
            if tr.times.shape != times.shape or np.any(tr.times != times):
                raise ValueError("trajectories must share sample times")
        return cls(times, np.stack([tr.states for tr in trajs]))


def generate_samples(system, x0s, horizon, sample_times, step=None) -> SampleBatch:
    """Integrate from every row of ``x0s`` and keep only the sampled states.

    The integrator step defaults to a tenth of the largest sampling gap.
    Diverging trajectories raise :class:`IntegrationDiverged`.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    if step is None:
        step = float(np.max(np.diff(sample_times))) / 10.0
    grid = time_grid(horizon, step)
    idx = sample_indices(grid, sample_times)
    times, states, bad = integrate_batch(system, x0s, horizon, step, keep=idx)
    if bad.any():
        row = np.argmax(~np.all(np.isfinite(states[:, bad]), axis=-1).any(axis=1))
        raise IntegrationDiverged(times[row], np.flatnonzero(bad))
    return SampleBatch(times, np.ascontiguousarray(states.transpose(1, 0, 2)), np.asarray(x0s, float))


# --------------------------------------------------------------------------
# benchmark systems


def _jet_engine_f(x):
    x1 = x[..., 0]
    x2 = x[..., 1]
    return np.stack([-x2 - 1.5 * x1**2 - 0.5 * x1**3, x1], axis=-1)


def jet_engine() -> SystemModel:
    """Moore-Greitzer jet engine compressor model (two states)."""
    return SystemModel("jet_engine", 2, _jet_engine_f, metadata={"horizon": 5.0})


def _four_dim_f(x):
    x1, x2, x3, x4 = (x[..., i] for i in range(4))
    return np.stack(
        [
            x1 + x1 * x2 / 5.0 - x3 * x4 / 2.0,
            np.cos(x4),
            0.01 * np.sqrt(np.abs(x1)),
            -x1 - x2**2 + np.sin(x4),
        ],
        axis=-1,
    )


def four_dim_benchmark() -> SystemModel:
    """Four-state nonlinear benchmark; note the ``sqrt|x1|`` term is not
    Lipschitz at ``x1 = 0``, so sampled slope estimates saturate there."""
    return SystemModel("four_dim", 4, _four_dim_f, metadata={"horizon": 4.0})


def linear_system(a: float = -1.0, dim: int = 1) -> SystemModel:
    """``x' = a x``; used as a closed-form reference."""
    return SystemModel(
        f"linear({a})", dim, lambda x: a * x, lipschitz_f=abs(a), metadata={"rate": a}
    )


SYSTEMS = {"jet_engine": jet_engine, "four_dim": four_dim_benchmark}


def get_system(name: str) -> SystemModel:
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None
