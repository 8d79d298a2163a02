"""Command-line driver: configuration loading, synthesis runs, validation and
CSV exports.

Configs are single JSON documents with ``"schema": 1``. See the bundled
files in ``pacbarrier/configs`` for the full set of keys.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from . import lipschitz
from .certificate import NeuralCertificate
from .dynamics import (
    BoxRegion,
    RegionSpec,
    SystemModel,
    generate_samples,
    get_system,
    integrate_batch,
    sample_indices,
    sample_initial_states,
    time_grid,
    uniform_sample_times,
    write_trajectory_csv,
)
from .loss import make_grids, total_loss
from .pac import PacBound, assemble_guarantee, epsilon, residual
from .synthesis import SynthesisConfig, SynthesisError, algorithm2, system_with_constants
from .validation import monte_carlo_validate

log = logging.getLogger("pacbarrier")

SCHEMA = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """A config field is missing or out of range; the message names it."""


# --------------------------------------------------------------------------
# configuration


def _inline_system(spec: dict) -> SystemModel:
    """System from ``{"name", "equations": ["expr in x1..xn", ...]}``.

    Expressions may use numpy functions (``sin``, ``cos``, ``exp``, ``sqrt``,
    ``abs``, ...). The config is trusted input, like any local script.
    """
    eqs = spec.get("equations")
    if not isinstance(eqs, list) or not eqs or not all(isinstance(e, str) for e in eqs):
        raise ConfigError("system.equations: expected a nonempty list of expression strings")
    n = len(eqs)
    names = {fn: getattr(np, fn) for fn in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs",
                                             "tanh", "arctan", "sign", "pi")}
    try:
        code = [compile(e, f"<equation {i + 1}>", "eval") for i, e in enumerate(eqs)]
    except SyntaxError as exc:
        raise ConfigError(f"system.equations: {exc}") from None

    def f(x):
        env = dict(names)
        env.update({f"x{i + 1}": x[..., i] for i in range(n)})
        out = [np.broadcast_to(eval(c, {"__builtins__": {}}, env), x.shape[:-1]) for c in code]
        return np.stack(out, axis=-1)

    return SystemModel(str(spec.get("name", "inline")), n, f)


@dataclass
class RunConfig:
    system: Union[str, dict]
    regions: RegionSpec
    horizon: float
    sample_times: Union[int, List[float]]
    n_train: int
    beta: float
    seed: int = 0
    hidden: List[int] = field(default_factory=lambda: [16, 16])
    activation: str = "tanh"
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    grid_points: int = 50
    margin: float = 0.1
    constants: dict = field(default_factory=dict)
    constants_points: int = 100_000
    n_fresh: int = 10_000
    validation_seed: Optional[int] = None
    integrator_step: Optional[float] = None
    threads: int = 0
    raw: dict = field(default_factory=dict)

    # -- derived objects ---------------------------------------------------

    def build_system(self) -> SystemModel:
        if isinstance(self.system, str):
            sysm = get_system(self.system)
        else:
            sysm = _inline_system(self.system)
        if sysm.dim != self.regions.domain.dim:
            raise ConfigError(f"system has dimension {sysm.dim} but regions have {self.regions.domain.dim}")
        if self.constants:
            sysm = dataclasses.replace(sysm, lipschitz_f=self.constants.get("Lf"),
                                       bound_f=self.constants.get("Mf"))
        return sysm

    def times(self) -> np.ndarray:
        if isinstance(self.sample_times, int):
            return uniform_sample_times(self.horizon, self.sample_times + 1)
        return np.asarray(self.sample_times, dtype=float)

    def grids(self):
        return make_grids(self.regions, self.grid_points, self.margin)

    @property
    def layer_sizes(self) -> List[int]:
        return [self.regions.domain.dim] + list(self.hidden) + [1]

    @property
    def fresh_seed(self) -> int:
        return self.seed + 1_000_000 if self.validation_seed is None else self.validation_seed

    def to_dict(self) -> dict:
        out = copy.deepcopy(self.raw)
        out["seed"] = self.seed
        out["threads"] = self.threads
        return out


def _get(d, key, typ, where, default=dataclasses.MISSING):
    if key not in d:
        if default is dataclasses.MISSING:
            raise ConfigError(f"{where}{key}: required field missing")
        return default
    v = d[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or isinstance(v, bool) and typ is not bool:
        raise ConfigError(f"{where}{key}: expected {getattr(typ, '__name__', typ)}, got {v!r}")
    return v


def _box(d, where) -> BoxRegion:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object with lower/upper")
    try:
        return BoxRegion(_get(d, "lower", list, where + "."), _get(d, "upper", list, where + "."))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document and build a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    schema = doc.get("schema")
    if schema != SCHEMA:
        raise ConfigError(f"schema: expected {SCHEMA}, got {schema!r}")
    system = doc.get("system")
    if not isinstance(system, (str, dict)):
        raise ConfigError("system: expected a system name or an inline equations object")
    reg = _get(doc, "regions", dict, "")
    try:
        regions = RegionSpec(_box(reg.get("domain"), "regions.domain"),
                             _box(reg.get("initial"), "regions.initial"),
                             _box(reg.get("unsafe"), "regions.unsafe"))
    except ValueError as exc:
        raise ConfigError(f"regions: {exc}") from None
    horizon = _get(doc, "horizon", float, "")
    if not horizon > 0:
        raise ConfigError("horizon: must be positive")
    st = doc.get("sample_times")
    if isinstance(st, bool) or not isinstance(st, (int, list)):
        raise ConfigError("sample_times: expected a step count M or a list of times")
    if isinstance(st, int) and st < 1:
        raise ConfigError("sample_times: M must be at least 1")
    n_train = _get(doc, "n_train", int, "")
    if n_train < 1:
        raise ConfigError("n_train: must be at least 1")
    beta = _get(doc, "beta", float, "")
    if not 0 < beta < 1:
        raise ConfigError("beta: must lie in (0, 1)")
    arch = _get(doc, "architecture", dict, "", {})
    hidden = _get(arch, "hidden", list, "architecture.", [16, 16])
    if not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError("architecture.hidden: expected positive integers")
    activation = _get(arch, "activation", str, "architecture.", "tanh")
    syn = _get(doc, "synthesis", dict, "", {})
    known = {f.name for f in dataclasses.fields(SynthesisConfig)}
    unknown = set(syn) - known
    if unknown:
        raise ConfigError(f"synthesis: unknown field(s) {sorted(unknown)}")
    try:
        scfg = SynthesisConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in syn.items()})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"synthesis: {exc}") from None
    grids = _get(doc, "grids", dict, "", {})
    gp = _get(grids, "points_per_dim", int, "grids.", 50)
    margin = _get(grids, "margin", float, "grids.", 0.1)
    if gp < 2 or margin < 0:
        raise ConfigError("grids: need points_per_dim >= 2 and margin >= 0")
    consts = _get(doc, "constants", dict, "", {})
    for key in consts:
        if key not in ("Lf", "Mf", "points"):
            raise ConfigError(f"constants.{key}: unknown field")
    cpoints = _get(consts, "points", int, "constants.", 100_000)
    analytic = {k: float(consts[k]) for k in ("Lf", "Mf") if k in consts}
    val = _get(doc, "validation", dict, "", {})
    n_fresh = _get(val, "n_fresh", int, "validation.", 10_000)
    vseed = val.get("seed")
    if vseed is not None and not isinstance(vseed, int):
        raise ConfigError("validation.seed: expected an integer")
    step = doc.get("integrator_step")
    if step is not None and not (isinstance(step, (int, float)) and step > 0):
        raise ConfigError("integrator_step: must be positive")
    return RunConfig(
        system=system, regions=regions, horizon=horizon, sample_times=st, n_train=n_train,
        beta=beta, seed=_get(doc, "seed", int, "", 0), hidden=list(hidden), activation=activation,
        synthesis=scfg, grid_points=gp, margin=margin, constants=analytic, constants_points=cpoints,
        n_fresh=n_fresh, validation_seed=vseed, integrator_step=step,
        threads=_get(doc, "threads", int, "", 0), raw=copy.deepcopy(doc),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_config(doc)


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped with the package (``jet_engine``, ``four_dim``)."""
    return Path(str(resources.files("pacbarrier") / "configs" / f"{name}.json"))


# --------------------------------------------------------------------------
# runs


@dataclass
class SynthesisRun:
    config: RunConfig
    result: object
    bound: Optional[PacBound]
    guarantee: Optional[object]
    report: dict
    system: SystemModel
    samples: object


def _constants_block(sys_info: dict, result) -> dict:
    c = result.constants
    lb, mb = c.get("LB"), c.get("MB")
    method = {sys_info["Lf"]["method"], sys_info["Mf"]["method"]}
    if isinstance(lb, dict):
        method.add(lb["method"])
    return {
        "Lf": sys_info["Lf"]["value"],
        "Mf": sys_info["Mf"]["value"],
        "LB": lb["value"] if isinstance(lb, dict) else lb,
        "MB": mb["value"] if isinstance(mb, dict) else mb,
        "method": sorted(method),
        "safety_factor": result.constants.get("safety_factor", lipschitz.DEFAULT_SAFETY),
        "detail": {"Lf": sys_info["Lf"], "Mf": sys_info["Mf"], "LB": lb, "MB": mb},
        "max_gap": c.get("max_gap"),
    }


@dataclass
class Problem:
    """Everything a synthesis run starts from; rebuilt identically from a config."""
    samples: object
    system: SystemModel  # with L_f and M_f attached
    system_info: dict
    grids: object
    cert0: NeuralCertificate


def prepare(cfg: RunConfig) -> Problem:
    system = cfg.build_system()
    x0 = sample_initial_states(cfg.regions.initial, cfg.n_train, cfg.seed)
    samples = generate_samples(system, x0, cfg.horizon, cfg.times(), cfg.integrator_step)
    sys_c, sys_info = system_with_constants(system, cfg.regions.domain, cfg.constants_points,
                                            cfg.synthesis.constants_seed, cfg.synthesis.safety_factor)
    cert0 = NeuralCertificate.init(cfg.layer_sizes, cfg.seed, cfg.activation).normalized_to(cfg.regions.domain)
    return Problem(samples, sys_c, sys_info, cfg.grids(), cert0)


def run_synthesis(cfg: RunConfig) -> SynthesisRun:
    """Sample, synthesise and bound; everything is driven by ``cfg.seed``."""
    prob = prepare(cfg)
    samples, sys_c, sys_info, grids = prob.samples, prob.system, prob.system_info, prob.grids
    result = algorithm2(samples, grids, cfg.horizon, cfg.synthesis, prob.cert0, sys_c, cfg.regions.domain)
    result.constants["safety_factor"] = cfg.synthesis.safety_factor
    bound = guarantee = None
    if result.success:
        bound = PacBound.compute(len(result.compression), cfg.beta, cfg.n_train)
    worst = int(np.argmax(result.final_traj_losses))
    breakdown = total_loss(result.certificate, samples.trajectory(worst), grids, cfg.horizon)
    report = {
        "config": cfg.to_dict(),
        **result.report(),
        "loss": {**breakdown.to_dict(), "sample": worst},
        "constants": _constants_block(sys_info, result),
        "distribution": "uniform",
        "asymptotic": any(v.get("asymptotic", False) for v in
                          (sys_info["Lf"], sys_info["Mf"], result.constants.get("LB") or {})
                          if isinstance(v, dict)),
        "seed": cfg.seed,
        "epsilon": None if bound is None else bound.epsilon,
    }
    if bound is not None:
        constants = dict(report["constants"], asymptotic=report["asymptotic"])
        guarantee = assemble_guarantee(result, bound, constants)
        report["guarantee"] = guarantee.to_dict()
    return SynthesisRun(cfg, result, bound, guarantee, report, sys_c, samples)


def finite_json(obj):
    """Copy of ``obj`` with non-finite floats replaced by ``None`` (JSON has no
    infinities) and numpy scalars turned into Python numbers."""
    if isinstance(obj, dict):
        return {str(k): finite_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [finite_json(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(finite_json(obj), fh, indent=2, allow_nan=False)


@contextlib.contextmanager
def _thread_limit(threads: int):
    if threads and threads > 0:
        try:
            from threadpoolctl import threadpool_limits
        except ImportError:  # pragma: no cover - optional
            yield
            return
        with threadpool_limits(limits=threads):
            yield
    else:
        yield


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    return cfg


# --------------------------------------------------------------------------
# subcommands


def cmd_synthesize(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with _thread_limit(cfg.threads):
        try:
            run = run_synthesis(cfg)
        except SynthesisError as exc:
            print(f"synthesis failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_FAIL
    _dump(run.report, out / "report.json")
    run.result.certificate.save(out / "certificate.json")
    _dump({"compression_indices": run.report["compression_indices"],
           "jump_count": run.report["jump_count"],
           "discarded_count": run.report["discarded_count"]}, out / "compression.json")
    if not run.result.success:
        print("synthesis finished without meeting the tightened conditions; no guarantee", file=sys.stderr)
        return EXIT_FAIL
    print(run.guarantee.text)
    print(f"epsilon = {run.bound.epsilon:.6f}")
    return EXIT_OK


def validate_certificate(cert: NeuralCertificate, cfg: RunConfig, report: Optional[dict] = None,
                         n_fresh: Optional[int] = None):
    """Validation for ``cert`` under ``cfg``; epsilon and d come from the
    synthesis ``report`` when given, otherwise d is recomputed and epsilon is
    the zero-compression level (the strictest possible)."""
    system = cfg.build_system()
    sys_c, _ = system_with_constants(system, cfg.regions.domain, cfg.constants_points,
                                     cfg.synthesis.constants_seed, cfg.synthesis.safety_factor)
    times = cfg.times()
    if report is not None and report.get("epsilon") is not None:
        eps, d, source = float(report["epsilon"]), float(report["d_used"]), "report"
    else:
        from .synthesis import compute_tightening

        lb, mb = lipschitz.certificate_constants(cert, cfg.regions.domain, cfg.synthesis.constants_points,
                                                 cfg.synthesis.constants_seed, cfg.synthesis.safety_factor)
        d = compute_tightening(sys_c, (lb, mb), float(np.max(np.diff(times))))
        eps, source = epsilon(0, cfg.beta, cfg.n_train), "k=0"
    rep = monte_carlo_validate(cert, system, cfg.regions, cfg.grids(), cfg.horizon, times, eps, d,
                               n_fresh or cfg.n_fresh, cfg.fresh_seed, cfg.integrator_step)
    rep.details["epsilon_source"] = source
    rep.details["caveat"] = "continuous-time conditions are checked on the dense integrator grid"
    return rep


def cmd_validate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    cert = NeuralCertificate.load(args.cert)
    report = None
    rpath = Path(args.report) if args.report else Path(args.cert).with_name("report.json")
    if rpath.exists():
        with open(rpath, encoding="utf-8") as fh:
            report = json.load(fh)
    elif args.report:
        raise FileNotFoundError(args.report)
    with _thread_limit(cfg.threads):
        rep = validate_certificate(cert, cfg, report, args.n_fresh)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep.save(out / "validation.json")
    print(json.dumps({k: rep.to_dict()[k] for k in
                      ("n_fresh", "unsafe_entry_rate", "psi_violation_rate", "gap_max", "epsilon", "d", "pass")}))
    return EXIT_OK if rep.passed else EXIT_FAIL


def parse_int_range(text: str) -> List[int]:
    """``"5"``, ``"0:10"`` (inclusive) or ``"0:100:10"``; comma-separated
    pieces are concatenated."""
    out: List[int] = []
    for piece in text.split(","):
        parts = piece.strip().split(":")
        if not 1 <= len(parts) <= 3:
            raise ValueError(f"bad range {piece!r}")
        nums = [int(p) for p in parts]
        if len(nums) == 1:
            out.append(nums[0])
            continue
        step = nums[2] if len(nums) == 3 else 1
        if step <= 0:
            raise ValueError(f"range step must be positive in {piece!r}")
        out.extend(range(nums[0], nums[1] + 1, step))
    return out


def parse_float_list(text: str) -> List[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def epsilon_rows(ks, betas, ns):
    """``(k, beta, N, eps, residual)`` for every combination with k <= N."""
    for n in ns:
        if n < 1:
            raise ValueError(f"N must be positive, got {n}")
        for beta in betas:
            if not 0 < beta < 1:
                raise ValueError(f"beta must lie in (0, 1), got {beta}")
            for k in ks:
                if k < 0:
                    raise ValueError(f"k must be nonnegative, got {k}")
                if k > n:
                    continue
                e = epsilon(k, beta, n)
                yield k, beta, n, e, residual(e, k, beta, n)


def cmd_epsilon(args) -> int:
    ks, betas, ns = parse_int_range(args.k), parse_float_list(args.beta), parse_int_range(args.N)
    rows = list(epsilon_rows(ks, betas, ns))  # validate before printing anything
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["k", "beta", "N", "epsilon", "residual"])
    for k, beta, n, e, r in rows:
        w.writerow([k, repr(beta), n, repr(e), repr(r)])
    return EXIT_OK


def levelset_grid(cert: NeuralCertificate, bounds, resolution: int, axes=(0, 1), base=None):
    """``(P, 3)`` array of ``x_a, x_b, B`` on a ``resolution``-square grid of the
    2-D slice through ``base`` spanned by coordinates ``axes``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    n = cert.dim
    if n < 2:
        raise ValueError("level sets need at least two state dimensions")
    a, b = axes
    if a == b or not (0 <= a < n and 0 <= b < n):
        raise ValueError(f"slice axes {axes} invalid for dimension {n}")
    if base is None:
        if n > 2:
            raise ValueError("a base point is required to slice a certificate with more than two inputs")
        base = np.zeros(n)
    base = np.asarray(base, dtype=float)
    if base.shape != (n,):
        raise ValueError(f"base point must have length {n}")
    x1lo, x1hi, x2lo, x2hi = (float(v) for v in bounds)
    u = np.linspace(x1lo, x1hi, resolution)
    v = np.linspace(x2lo, x2hi, resolution)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.tile(base, (uu.size, 1))
    pts[:, a] = uu.ravel()
    pts[:, b] = vv.ravel()
    return np.column_stack([uu.ravel(), vv.ravel(), cert.forward(pts)])


def _write_csv(rows, header, out):
    if out is None:
        fh, close = sys.stdout, False
    else:
        fh, close = open(out, "w", encoding="utf-8", newline=""), True
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" for v in r])
    finally:
        if close:
            fh.close()


def cmd_levelset(args) -> int:
    cert = NeuralCertificate.load(args.cert)
    base = parse_float_list(args.base) if args.base else None
    axes = tuple(int(a) for a in args.axes.split(","))
    grid = levelset_grid(cert, args.bounds, args.resolution, axes, base)
    _write_csv(grid, ["x1", "x2", "B"], args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    system = cfg.build_system()
    times = cfg.times()
    step = cfg.integrator_step or float(np.max(np.diff(times))) / 10.0
    x0 = sample_initial_states(cfg.regions.initial, args.count, cfg.seed)
    grid = time_grid(cfg.horizon, step)
    keep = None if args.dense else sample_indices(grid, times)
    t, states, bad = integrate_batch(system, x0, cfg.horizon, step, keep=keep)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(args.count - 1)))
    for i in range(args.count):
        write_trajectory_csv(out / f"trajectory_{i:0{width}d}.csv", t, states[:, i])
    if bad.any():
        print(f"{int(bad.sum())} trajectories diverged (rows are NaN from that point)", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pacbarrier", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="run config JSON")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out-dir", default=".", help="directory for output files")
        sp.add_argument("--threads", type=int, default=None, help="BLAS threads (0 = all cores)")

    sp = sub.add_parser("synthesize", help="learn a certificate and print its guarantee")
    common(sp)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("validate", help="Monte Carlo validation on fresh trajectories")
    common(sp)
    sp.add_argument("--cert", required=True, help="certificate JSON")
    sp.add_argument("--report", default=None, help="synthesis report (default: report.json beside --cert)")
    sp.add_argument("--n-fresh", type=int, default=None, help="override validation.n_fresh")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("epsilon", help="risk-level table as CSV")
    sp.add_argument("--k", required=True, help="compression sizes, e.g. 0:10 or 0,5,10")
    sp.add_argument("--beta", required=True, help="comma-separated confidence parameters")
    sp.add_argument("--N", required=True, help="sample counts, same syntax as --k")
    sp.set_defaults(func=cmd_epsilon)

    sp = sub.add_parser("levelset", help="certificate values on a 2-D grid as CSV")
    sp.add_argument("--cert", required=True)
    sp.add_argument("--bounds", type=float, nargs=4, required=True, metavar=("X1LO", "X1HI", "X2LO", "X2HI"))
    sp.add_argument("--resolution", type=int, default=101)
    sp.add_argument("--axes", default="0,1", help="state coordinates spanning the slice")
    sp.add_argument("--base", default=None, help="comma-separated point the slice passes through")
    sp.add_argument("--out", default=None, help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_levelset)

    sp = sub.add_parser("simulate", help="export sampled (or dense) trajectories as CSV")
    common(sp)
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--dense", action="store_true", help="write every integrator step")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename or exc}", file=sys.stderr)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
