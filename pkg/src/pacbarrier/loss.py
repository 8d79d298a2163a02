"""Barrier conditions on grids and trajectories, training losses and their
subgradients.

The infimum over the unsafe set and the supremum over the initial set are
taken over finite lattices (:class:`GridSets`). Ties in every max/argmax are
broken by the lowest index, which is what ``np.argmax``/``np.argmin`` do.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certificate import NeuralCertificate
from .dynamics import (
    ContinuousTrajectory,
    DiscretizedTrajectory,
    RegionSpec,
    SampleBatch,
)

_CHUNK = 262_144  # points per forward pass; bounds temporary memory


@dataclass
class GridSets:
    init_points: np.ndarray
    unsafe_points: np.ndarray
    margin: float = 0.1
    points_per_dim: Optional[int] = None

    def __post_init__(self):
        self.init_points = np.atleast_2d(np.asarray(self.init_points, dtype=float))
        self.unsafe_points = np.atleast_2d(np.asarray(self.unsafe_points, dtype=float))
        if self.init_points.size == 0 or self.unsafe_points.size == 0:
            raise ValueError("grid sets must be nonempty")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")


def make_grids(regions: RegionSpec, points_per_dim: int = 50, margin: float = 0.1) -> GridSets:
    return GridSets(
        regions.initial.lattice(points_per_dim),
        regions.unsafe.lattice(points_per_dim),
        margin,
        points_per_dim,
    )


@dataclass
class LossBreakdown:
    state_loss: float
    traj_loss: float
    total: float
    argmax_step: int
    argmax_grid_points: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "state_loss": self.state_loss,
            "traj_loss": self.traj_loss,
            "total": self.total,
            "argmax_step": self.argmax_step,
            "argmax_grid_points": self.argmax_grid_points,
        }


def batched_forward(cert: NeuralCertificate, points: np.ndarray) -> np.ndarray:
    flat = points.reshape(-1, points.shape[-1])
    if flat.shape[0] <= _CHUNK:
        return cert.forward(flat).reshape(points.shape[:-1])
    out = np.empty(flat.shape[0])
    for s in range(0, flat.shape[0], _CHUNK):
        out[s:s + _CHUNK] = cert.forward(flat[s:s + _CHUNK])
    return out.reshape(points.shape[:-1])


# --------------------------------------------------------------------------
# grid terms


@dataclass
class GridEval:
    b_init: np.ndarray
    b_unsafe: np.ndarray
    margin: float

    @property
    def sup_init(self) -> float:
        return float(self.b_init.max())

    @property
    def inf_unsafe(self) -> float:
        return float(self.b_unsafe.min())

    @property
    def i_star(self) -> int:
        return int(np.argmax(self.b_init))

    @property
    def u_star(self) -> int:
        return int(np.argmin(self.b_unsafe))

    @property
    def state_loss(self) -> float:
        return float(
            np.mean(np.maximum(0.0, self.b_init))
            + np.mean(np.maximum(0.0, self.margin - self.b_unsafe))
        )

    def rhs(self, horizon: float) -> float:
        """Permitted growth rate ``(inf_U B - sup_I B) / T``."""
        return (self.inf_unsafe - self.sup_init) / horizon


def eval_grids(cert, grids: GridSets) -> GridEval:
    return GridEval(cert.forward(grids.init_points), cert.forward(grids.unsafe_points), grids.margin)


def state_loss(cert, grids: GridSets) -> float:
    """Mean hinge ``max(0, B)`` over initial points plus mean
    ``max(0, margin - B)`` over unsafe points."""
    return eval_grids(cert, grids).state_loss


def _state_loss_subgrad(cert, grids: GridSets, ge: GridEval) -> np.ndarray:
    act_i = ge.b_init > 0.0
    act_u = (grids.margin - ge.b_unsafe) > 0.0
    pts, coef = [], []
    if act_i.any():
        pts.append(grids.init_points[act_i])
        coef.append(np.full(act_i.sum(), 1.0 / ge.b_init.size))
    if act_u.any():
        pts.append(grids.unsafe_points[act_u])
        coef.append(np.full(act_u.sum(), -1.0 / ge.b_unsafe.size))
    if not pts:
        return np.zeros(cert.n_params)
    return cert.grad_params_weighted(np.concatenate(pts), np.concatenate(coef))


def state_loss_subgrad(cert, grids: GridSets) -> np.ndarray:
    return _state_loss_subgrad(cert, grids, eval_grids(cert, grids))


# --------------------------------------------------------------------------
# trajectory terms


def max_slope(b_values: np.ndarray, times: np.ndarray):
    """Largest forward difference quotient along the last axis and its
    (1-based) step index."""
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise ValueError("zero or negative time gap in trajectory")
    slopes = np.diff(b_values, axis=-1) / dt
    k = np.argmax(slopes, axis=-1)
    return np.take_along_axis(slopes, np.expand_dims(k, -1), -1)[..., 0], k + 1


def traj_loss(cert, traj: DiscretizedTrajectory, grids: GridSets, horizon: float) -> float:
    ge = eval_grids(cert, grids)
    slope, _ = max_slope(cert.forward(traj.states), traj.times)
    return float(slope) - ge.rhs(horizon)


def total_loss(cert, traj: DiscretizedTrajectory, grids: GridSets, horizon: float) -> LossBreakdown:
    ge = eval_grids(cert, grids)
    slope, k = max_slope(cert.forward(traj.states), traj.times)
    ls = ge.state_loss
    ld = float(slope) - ge.rhs(horizon)
    return LossBreakdown(ls, ld, ls + ld, int(k), {"init": ge.i_star, "unsafe": ge.u_star})


def _gap_subgrad(cert, grids, ge: GridEval, horizon) -> np.ndarray:
    # d/dtheta of -(B(x_u*) - B(x_i*)) / T
    pts = np.stack([grids.unsafe_points[ge.u_star], grids.init_points[ge.i_star]])
    return cert.grad_params_weighted(pts, [-1.0 / horizon, 1.0 / horizon])


def subgrad_total(cert, traj: DiscretizedTrajectory, grids: GridSets, horizon: float) -> np.ndarray:
    """Subgradient of ``L = l_s + l_delta`` obtained by differentiating the
    active hinge terms and the maximising step/grid points."""
    ge = eval_grids(cert, grids)
    _, k = max_slope(cert.forward(traj.states), traj.times)
    k = int(k)
    dt = traj.times[k] - traj.times[k - 1]
    g = _state_loss_subgrad(cert, grids, ge) + _gap_subgrad(cert, grids, ge, horizon)
    g += cert.grad_params_weighted(traj.states[[k, k - 1]], [1.0 / dt, -1.0 / dt])
    return g


# --------------------------------------------------------------------------
# condition checks


def check_psi_s(cert, grids: GridSets) -> bool:
    """B <= 0 on every initial point and B >= margin on every unsafe point."""
    ge = eval_grids(cert, grids)
    return bool(np.all(ge.b_init <= 0.0) and np.all(ge.b_unsafe >= grids.margin))


def check_psi_delta_d(cert, traj: DiscretizedTrajectory, grids: GridSets, horizon: float, d: float) -> bool:
    """Tightened difference-quotient condition, strict."""
    if d < 0:
        raise ValueError("tightening must be nonnegative")
    return traj_loss(cert, traj, grids, horizon) < -d


def max_time_derivative(cert, states: np.ndarray, system) -> np.ndarray:
    """Max of dB/dt over the second-to-last axis of ``states``."""
    flat = states.reshape(-1, states.shape[-1])
    out = np.empty(flat.shape[0])
    for s in range(0, flat.shape[0], _CHUNK):
        blk = flat[s:s + _CHUNK]
        _, g = cert.value_and_grad_input(blk)
        out[s:s + _CHUNK] = np.sum(g * system.eval(blk), axis=-1)
    return out.reshape(states.shape[:-1]).max(axis=-1)


def check_psi_delta_continuous(cert, traj: ContinuousTrajectory, system, grids: GridSets, horizon: float) -> bool:
    """dB/dt below the permitted rate at every dense integrator point."""
    ge = eval_grids(cert, grids)
    return bool(max_time_derivative(cert, traj.states, system) < ge.rhs(horizon))


# --------------------------------------------------------------------------
# batched evaluation over a multi-sample


class SampleLosses:
    """Per-sample losses of one certificate on (a subset of) a multi-sample.

    ``traj_losses[j]`` is l_delta of sample ``indices[j]``; ``losses`` adds
    the sample-independent state loss.
    """

    def __init__(self, cert, batch: SampleBatch, grids: GridSets, horizon: float, indices=None):
        self.cert = cert
        self.batch = batch
        self.grids = grids
        self.horizon = horizon
        self.indices = np.arange(len(batch)) if indices is None else np.asarray(indices, dtype=int)
        self.grid = eval_grids(cert, grids)
        self.state_loss = self.grid.state_loss
        states = batch.states[self.indices]
        b = batched_forward(cert, states)
        self.slopes, self.k_star = max_slope(b, batch.times)
        self.traj_losses = self.slopes - self.grid.rhs(horizon)
        self.losses = self.traj_losses + self.state_loss
        self._common = None

    @property
    def common_subgrad(self) -> np.ndarray:
        if self._common is None:
            self._common = _state_loss_subgrad(self.cert, self.grids, self.grid) + _gap_subgrad(
                self.cert, self.grids, self.grid, self.horizon
            )
        return self._common

    def subgrads(self, positions) -> np.ndarray:
        """Subgradients for the samples at ``positions`` (into ``indices``),
        shape ``(len(positions), n_params)``."""
        positions = np.atleast_1d(np.asarray(positions, dtype=int))
        if positions.size == 0:
            return np.zeros((0, self.cert.n_params))
        rows = self.indices[positions]
        k = self.k_star[positions]
        times = self.batch.times
        dt = times[k] - times[k - 1]
        pts = np.concatenate([self.batch.states[rows, k], self.batch.states[rows, k - 1]])
        per_point = self.cert.grad_params_batch(pts)
        m = positions.size
        specific = (per_point[:m] - per_point[m:]) / dt[:, None]
        return specific + self.common_subgrad
