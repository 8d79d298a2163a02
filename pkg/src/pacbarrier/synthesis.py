"""Inexact subgradient synthesis with compression-set construction, and the
sampling-and-discarding outer loop.

The inner loop (:func:`run_inner`) and outer loop (:func:`run_outer`) work on a
flat parameter vector through a small oracle interface, so they run equally
on the neural barrier problem (:class:`BarrierProblem`) and on scripted toy
problems. :func:`algorithm1` and :func:`algorithm2` are the certificate-level
entry points.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import lipschitz
from .certificate import NeuralCertificate
from .dynamics import BoxRegion, SampleBatch
from .loss import GridSets, SampleLosses, eval_grids, state_loss_subgrad

log = logging.getLogger(__name__)


class SynthesisError(RuntimeError):
    pass


class StateLossNotSeparable(SynthesisError):
    """Phase 1 hit its cap with the state loss still positive."""

    def __init__(self, msg, theta=None):
        super().__init__(msg)
        self.theta = theta


class NoConvergence(SynthesisError):
    def __init__(self, msg, theta=None, compression=None):
        super().__init__(msg)
        self.theta = theta
        self.compression = compression


class Infeasible(SynthesisError):
    """Every sample was discarded."""


class MissingConstants(ValueError):
    pass


class DStrategy(str, enum.Enum):
    PER_ITERATION = "per_iteration"
    PARAM_SET_BOUND = "param_set_bound"


@dataclass
class SynthesisConfig:
    step_size: float = 1e-2
    tolerance: float = 1e-6
    # the running loss must improve by more than `tolerance` within this many
    # iterations; 1 is the plain one-step test
    patience: int = 1
    init_loss_pair: Optional[Tuple[float, float]] = None
    max_inner_iters: int = 5000
    max_outer_iters: int = 50
    max_phase1_iters: int = 20000
    d_strategy: DStrategy = DStrategy.PER_ITERATION
    # (L_B upper, M_B upper, parameter-ball radius) for PARAM_SET_BOUND
    param_set_bounds: Optional[Tuple[float, float, Optional[float]]] = None
    constants_points: int = 20_000
    constants_seed: int = 0
    safety_factor: float = lipschitz.DEFAULT_SAFETY

    def __post_init__(self):
        self.d_strategy = DStrategy(self.d_strategy)
        if not self.step_size >= 0 or not self.tolerance > 0:
            raise ValueError("need step_size >= 0 and tolerance > 0")
        if self.init_loss_pair is not None:
            l0, l1 = self.init_loss_pair
            if not (l1 < l0 and abs(l1 - l0) > self.tolerance):
                raise ValueError("init_loss_pair must satisfy L1 < L0 and |L1 - L0| > tolerance")
        if min(self.max_inner_iters, self.max_outer_iters, self.max_phase1_iters, self.patience) < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.d_strategy == DStrategy.PARAM_SET_BOUND and self.param_set_bounds is None:
            raise ValueError("PARAM_SET_BOUND needs param_set_bounds")

    def to_dict(self) -> dict:
        return {
            "step_size": self.step_size,
            "tolerance": self.tolerance,
            "patience": self.patience,
            "init_loss_pair": None if self.init_loss_pair is None else list(self.init_loss_pair),
            "max_inner_iters": self.max_inner_iters,
            "max_outer_iters": self.max_outer_iters,
            "max_phase1_iters": self.max_phase1_iters,
            "d_strategy": self.d_strategy.value,
            "param_set_bounds": None if self.param_set_bounds is None else list(self.param_set_bounds),
            "constants_points": self.constants_points,
            "constants_seed": self.constants_seed,
            "safety_factor": self.safety_factor,
        }


@dataclass
class CompressionSet:
    indices: List[int] = field(default_factory=list)
    jump_count: int = 0
    discarded_count: int = 0

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("compression indices must be unique")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class SynthesisResult:
    certificate: NeuralCertificate
    compression: CompressionSet
    final_traj_losses: np.ndarray
    final_state_loss: float
    d_used: float
    success: bool
    inner_iterations: int
    outer_iterations: int
    wall_time: float
    retained: np.ndarray
    constants: dict = field(default_factory=dict)
    history: List[float] = field(default_factory=list)

    @property
    def max_retained_traj_loss(self) -> float:
        return float(np.max(self.final_traj_losses[self.retained])) if self.retained.size else -np.inf

    def report(self) -> dict:
        return {
            "success": self.success,
            "d_used": self.d_used,
            "compression_indices": [int(i) for i in self.compression.indices],
            "jump_count": self.compression.jump_count,
            "discarded_count": self.compression.discarded_count,
            "iterations": {"inner": self.inner_iterations, "outer": self.outer_iterations},
            "per_sample_final_losses": [float(v) for v in self.final_traj_losses],
            "state_loss": self.final_state_loss,
            "max_retained_traj_loss": self.max_retained_traj_loss,
            "wall_time": self.wall_time,
        }


def compute_tightening(system, cert_constants, max_gap: float) -> float:
    """d = max_gap * M_f * (M_B * L_f + M_f * L_B).

    ``cert_constants`` is ``(L_B, M_B)``; the system must carry ``lipschitz_f``
    and ``bound_f`` (estimate them with :mod:`pacbarrier.lipschitz` first).
    """
    lf, mf = system.lipschitz_f, system.bound_f
    if lf is None or mf is None:
        raise MissingConstants(
            f"system {system.name!r} lacks lipschitz_f/bound_f; estimate them with "
            "pacbarrier.lipschitz.system_constants"
        )
    lb, mb = (float(getattr(c, "value", c)) for c in cert_constants)
    vals = (max_gap, mf, mb, lf, lb)
    if any(v < 0 for v in vals):
        raise ValueError("constants must be nonnegative")
    return max_gap * mf * (mb * lf + mf * lb)


# --------------------------------------------------------------------------
# generic loops on a parameter vector


class Evaluation:
    """What the loops need from one oracle evaluation over active samples.

    ``losses`` are the per-sample L values, ``traj_losses`` the
    sample-dependent parts and ``subgrads(positions)`` returns a
    ``(len(positions), dim)`` array.
    """

    losses: np.ndarray
    traj_losses: np.ndarray
    state_loss: float

    def subgrads(self, positions) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class InnerOutcome:
    theta: np.ndarray
    compression: List[int]
    jumps: int
    iterations: int
    history: List[float]
    stopped_by: str


def phase1(problem, theta: np.ndarray, cfg: SynthesisConfig) -> Tuple[np.ndarray, int]:
    """Plain gradient descent on the state loss until it is exactly zero."""
    theta = np.array(theta, dtype=float)
    steps = 0
    while problem.state_loss(theta) > 0.0:
        if steps >= cfg.max_phase1_iters:
            raise StateLossNotSeparable(
                f"state loss still {problem.state_loss(theta):.3g} after {steps} steps", theta
            )
        theta = problem.project(theta - cfg.step_size * problem.state_subgrad(theta))
        steps += 1
    return theta, steps


def _pick(values: np.ndarray, candidates: np.ndarray, ids: np.ndarray) -> int:
    """Position (into ``values``) of the max among ``candidates``; ties go to
    the lowest sample id."""
    best = values[candidates].max()
    tied = candidates[values[candidates] == best]
    return int(tied[np.argmin(ids[tied])])


def run_inner(problem, theta, active, cfg: SynthesisConfig) -> InnerOutcome:
    """One call of the inner loop on the samples ``active``.

    Runs the state-loss phase, then inexact subgradient steps on the max
    sample loss. A misaligned subgradient of a sample whose loss reaches the
    compression-set maximum triggers a jump and enlarges the compression set.
    Stops when the running loss has moved by at most ``tolerance`` over the
    last ``patience`` iterations or when the termination test
    ``problem.done`` passes.
    """
    active = np.asarray(active, dtype=int)
    theta, _ = phase1(problem, theta, cfg)
    if active.size == 0:  # nothing to descend on beyond the state loss
        return InnerOutcome(theta, [], 0, 0, [], "no_samples")
    eta = cfg.tolerance
    ev = problem.evaluate(theta, active)
    if cfg.init_loss_pair is not None:
        l_prev, l_cur = cfg.init_loss_pair
    else:
        l_cur = float(ev.losses.max())
        l_prev = l_cur + 2 * eta
    compression: List[int] = []
    in_c = np.zeros(active.size, dtype=bool)
    jumps = 0
    history = [l_cur]
    running = [l_prev, l_cur]  # running losses including the seed value
    it = 0
    stopped_by = "tolerance"
    while abs(running[-1] - running[max(0, len(running) - 1 - cfg.patience)]) > eta:
        if problem.done(theta, ev):
            stopped_by = "tightened_condition"
            break
        if it >= cfg.max_inner_iters:
            raise NoConvergence(
                f"inner loop did not meet tolerance within {cfg.max_inner_iters} iterations",
                theta,
                [int(active[p]) for p in compression],
            )
        losses = ev.losses
        if not compression:
            # empty compression set: the worst sample is the first member
            p = _pick(losses, np.arange(active.size), active)
            g = ev.subgrads([p])[0]
            theta = problem.project(theta - cfg.step_size * g)
            compression.append(p)
            in_c[p] = True
            jumps += 1
        else:
            cpos = np.flatnonzero(in_c)
            c_bar = _pick(losses, cpos, active)
            m_pos = np.flatnonzero(losses >= losses[c_bar])
            grads = ev.subgrads(np.concatenate([[c_bar], m_pos]))
            g_c, g_m = grads[0], grads[1:]
            inner = g_m @ g_c
            nonzero = np.any(g_m != 0.0, axis=1)
            mis = m_pos[(inner <= 0.0) & nonzero]
            if mis.size:
                p = _pick(losses, mis, active)
                g = g_m[np.searchsorted(m_pos, p)]
                theta = problem.project(theta - cfg.step_size * g)
                if not in_c[p]:
                    compression.append(p)
                    in_c[p] = True
                    jumps += 1
            else:
                theta = problem.project(theta - cfg.step_size * g_c)
        ev = problem.evaluate(theta, active)
        l_prev, l_cur = l_cur, min(l_cur, float(ev.losses.max()))
        history.append(l_cur)
        running.append(l_cur)
        it += 1
        if it % 100 == 0:
            log.debug("inner %d: running loss %.6g, state loss %.3g, |C|=%d", it, l_cur,
                      ev.state_loss, len(compression))
    return InnerOutcome(theta, [int(active[p]) for p in compression], jumps, it, history, stopped_by)


@dataclass
class OuterOutcome:
    theta: np.ndarray
    compression: CompressionSet
    retained: np.ndarray
    inner_iterations: int
    outer_iterations: int
    history: List[float]


def run_outer(problem, theta, n_samples: int, cfg: SynthesisConfig,
              allow_exhaustion: bool = False) -> OuterOutcome:
    """Repeat the inner loop, discarding its compression samples, until the
    state loss is zero and every retained sample meets the tightened
    condition.

    Discarding every sample raises :class:`Infeasible` unless
    ``allow_exhaustion`` is set; then the loop stops there, since the
    tightened condition over an empty sample set holds vacuously. Replays on
    a compression set use this.
    """
    theta = problem.project(np.array(theta, dtype=float))
    retained = np.arange(n_samples)
    compression: List[int] = []
    last_call: List[int] = []
    inner_total = outer = 0
    history: List[float] = []
    ev = problem.evaluate(theta, retained)
    while not problem.guard_satisfied(theta, ev):
        if outer >= cfg.max_outer_iters:
            raise NoConvergence(f"outer loop exceeded {cfg.max_outer_iters} iterations", theta,
                                list(compression))
        res = run_inner(problem, theta, retained, cfg)
        theta = res.theta
        inner_total += res.iterations
        history.extend(res.history)
        last_call = res.compression
        compression.extend(i for i in res.compression if i not in compression)
        retained = np.setdiff1d(retained, compression)
        outer += 1
        log.info("outer %d: %d inner steps, |C|=%d (%s)", outer, res.iterations,
                 len(compression), res.stopped_by)
        if retained.size == 0:
            if allow_exhaustion and problem.state_loss(theta) == 0.0:
                break
            raise Infeasible("every sample was discarded; the problem is infeasible at this architecture")
        ev = problem.evaluate(theta, retained)
    cs = CompressionSet(list(compression), jump_count=len(last_call),
                        discarded_count=len(compression) - len(last_call))
    return OuterOutcome(theta, cs, retained, inner_total, outer, history)


# --------------------------------------------------------------------------
# the neural barrier problem


class BarrierProblem:
    """Oracle adapter: certificate parameters -> sample losses/subgradients,
    state loss, tightening and projection."""

    def __init__(self, template: NeuralCertificate, samples: SampleBatch, grids: GridSets,
                 horizon: float, cfg: SynthesisConfig, system=None, domain: Optional[BoxRegion] = None):
        self.template = template
        self.samples = samples
        self.grids = grids
        self.horizon = horizon
        self.cfg = cfg
        self.system = system
        self.domain = domain
        self.max_gap = samples.max_gap
        self.radius = None
        if cfg.d_strategy == DStrategy.PARAM_SET_BOUND:
            lb, mb, self.radius = cfg.param_set_bounds
            self._fixed_d = compute_tightening(system, (lb, mb), self.max_gap)
        elif system is None or domain is None:
            raise ValueError("PER_ITERATION needs the system and a domain for constants")
        self.last_constants: dict = {}
        self.d_evaluations = 0

    def cert(self, theta) -> NeuralCertificate:
        return self.template.unflatten(theta)

    def project(self, theta):
        if self.radius is None:
            return theta
        nrm = np.linalg.norm(theta)
        return theta if nrm <= self.radius else theta * (self.radius / nrm)

    def state_loss(self, theta) -> float:
        return eval_grids(self.cert(theta), self.grids).state_loss

    def state_subgrad(self, theta):
        return state_loss_subgrad(self.cert(theta), self.grids)

    def evaluate(self, theta, active) -> SampleLosses:
        return SampleLosses(self.cert(theta), self.samples, self.grids, self.horizon, active)

    def tightening(self, theta) -> float:
        if self.cfg.d_strategy == DStrategy.PARAM_SET_BOUND:
            lb, mb, _ = self.cfg.param_set_bounds
            self.last_constants = {"LB": lb, "MB": mb, "method_B": "param_set_bound"}
            return self._fixed_d
        cert = self.cert(theta)
        lb, mb = lipschitz.certificate_constants(
            cert, self.domain, self.cfg.constants_points, self.cfg.constants_seed, self.cfg.safety_factor
        )
        self.d_evaluations += 1
        self.last_constants = {"LB": lb.to_dict(), "MB": mb.to_dict()}
        return compute_tightening(self.system, (lb, mb), self.max_gap)

    def guard_satisfied(self, theta, ev) -> bool:
        if ev.state_loss > 0.0:
            return False
        worst = float(ev.traj_losses.max()) if ev.traj_losses.size else -np.inf
        if worst >= 0.0:  # d >= 0, skip the constants estimate
            return False
        return worst < -self.tightening(theta)

    def done(self, theta, ev) -> bool:
        return self.guard_satisfied(theta, ev)


def system_with_constants(system, domain: BoxRegion, points=100_000, seed=0,
                          safety_factor=lipschitz.DEFAULT_SAFETY):
    """Copy of ``system`` whose missing f-constants are filled by estimation.
    Returns the system and a dict describing where the constants came from."""
    import dataclasses

    lf, mf = lipschitz.system_constants(system, domain, points, seed, safety_factor)
    sys2 = dataclasses.replace(system, lipschitz_f=lf.value, bound_f=mf.value)
    return sys2, {"Lf": lf.to_dict(), "Mf": mf.to_dict()}


def phase1_state_descent(cert: NeuralCertificate, grids: GridSets, config: SynthesisConfig) -> NeuralCertificate:
    class _P:
        def state_loss(self, th):
            return eval_grids(cert.unflatten(th), grids).state_loss

        def state_subgrad(self, th):
            return state_loss_subgrad(cert.unflatten(th), grids)

        def project(self, th):
            return th

    theta, _ = phase1(_P(), cert.flatten(), config)
    return cert.unflatten(theta)


def algorithm1(cert: NeuralCertificate, samples, grids: GridSets, horizon: float,
               config: SynthesisConfig, system=None, domain=None):
    """Inner loop on all of ``samples``; returns (certificate, CompressionSet)."""
    if not isinstance(samples, SampleBatch):
        samples = SampleBatch.from_trajectories(list(samples))
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    problem = BarrierProblem(cert, samples, grids, horizon, config, system, domain)
    res = run_inner(problem, cert.flatten(), np.arange(len(samples)), config)
    return cert.unflatten(res.theta), CompressionSet(res.compression, jump_count=res.jumps)


def algorithm2(samples, grids: GridSets, horizon: float, config: SynthesisConfig,
               cert0: NeuralCertificate, system=None, domain=None,
               allow_exhaustion: bool = False) -> SynthesisResult:
    """Sampling-and-discarding synthesis. ``system`` must carry (or have had
    estimated) its Lipschitz constant and norm bound for the tightening.
    ``allow_exhaustion`` is passed to :func:`run_outer`."""
    if not isinstance(samples, SampleBatch):
        samples = SampleBatch.from_trajectories(list(samples))
    if len(samples) == 0 and not allow_exhaustion:
        raise ValueError("need at least one sample")
    t0 = time.perf_counter()
    problem = BarrierProblem(cert0, samples, grids, horizon, config, system, domain)
    out = run_outer(problem, cert0.flatten(), len(samples), config, allow_exhaustion)
    cert = cert0.unflatten(out.theta)
    full = SampleLosses(cert, samples, grids, horizon)
    d = problem.tightening(out.theta)
    constants = dict(problem.last_constants)
    if system is not None:
        constants.update({"Lf": system.lipschitz_f, "Mf": system.bound_f})
    constants["max_gap"] = samples.max_gap
    retained_ok = full.traj_losses[out.retained].max() < -d if out.retained.size else True
    return SynthesisResult(
        certificate=cert,
        compression=out.compression,
        final_traj_losses=full.traj_losses,
        final_state_loss=full.state_loss,
        d_used=d,
        success=bool(full.state_loss == 0.0 and retained_ok),
        inner_iterations=out.inner_iterations,
        outer_iterations=out.outer_iterations,
        wall_time=time.perf_counter() - t0,
        retained=out.retained,
        constants=constants,
        history=out.history,
    )


@dataclass
class ReplayCheck:
    result: SynthesisResult
    state_loss: float
    max_traj_loss: float
    d: float
    same_parameters: Optional[bool] = None

    @property
    def holds(self) -> bool:
        """l^s = 0 and every original sample meets the tightened condition."""
        return self.state_loss == 0.0 and self.max_traj_loss < -self.d


def replay_compression(indices, samples: SampleBatch, grids: GridSets, horizon: float,
                       config: SynthesisConfig, cert0: NeuralCertificate, system=None, domain=None,
                       reference: Optional[NeuralCertificate] = None) -> ReplayCheck:
    """Re-run :func:`algorithm2` from ``cert0`` on exactly the samples ``indices`` (a
    compression set) and score the replayed certificate on all of ``samples``.
    With a ``reference`` certificate, also report whether the parameters match
    bit for bit."""
    res = algorithm2(samples.subset(list(indices)), grids, horizon, config, cert0, system, domain,
                     allow_exhaustion=True)
    full = SampleLosses(res.certificate, samples, grids, horizon)
    same = None
    if reference is not None:
        same = bool(np.array_equal(res.certificate.flatten(), reference.flatten()))
    return ReplayCheck(res, float(full.state_loss), float(full.traj_losses.max()), res.d_used, same)
