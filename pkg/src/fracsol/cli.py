"""Command-line entry point: ``fracsol <command> [flags]``.

Every run writes exactly one ``manifest.json`` in its output directory, also
when the run fails.  Flags may be supplied through ``--config FILE`` holding
``key = value`` lines; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, newton
from .errors import (
    DomainError,
    FracsolError,
    GridMismatchError,
    NumericalError,
    PreconditionError,
    UnsupportedError,
)
from .io import emit_csv, emit_json, load_field, save_field

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
USAGE_ERRORS = (DomainError, PreconditionError, GridMismatchError, UnsupportedError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting, so that main() owns the exit code."""

    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration and manifest


@dataclass
class RunConfig:
    command: str
    params: dict
    seed: int
    out: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(str(data["command"]), dict(data["params"]), int(data["seed"]), str(data["out"]))


@dataclass
class RunManifest:
    config: RunConfig
    version: str
    guards: list = field(default_factory=list)
    wall_clock: float = 0.0
    checks: list = field(default_factory=list)
    status: str = "running"
    error: str = ""
    outputs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "version": self.version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "guards": list(self.guards),
            "wall_clock": self.wall_clock,
            "checks": list(self.checks),
            "status": self.status,
            "error": self.error,
            "outputs": [str(p) for p in self.outputs],
        }


def emit_manifest(manifest: RunManifest, path) -> Path:
    return emit_json(manifest.to_dict(), path)


def load_manifest(path) -> dict:
    data = json.loads(Path(path).read_text())
    data["config"] = RunConfig.from_dict(data["config"])
    return data


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys use flag names."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{num}: expected key = value, got {line!r}")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


# ---------------------------------------------------------------------------
# argument types


def order_arg(text: str) -> float:
    try:
        s = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < s <= 1.0:
        raise argparse.ArgumentTypeError(f"order s must lie in (0, 1], got {text}")
    return s


def positive(kind=float):
    def parse(text: str):
        try:
            val = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}")
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val

    parse.__name__ = f"positive {kind.__name__}"
    return parse


def vector_arg(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def thread_count() -> int:
    raw = os.environ.get("FRACSOL_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FRACSOL_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"FRACSOL_THREADS must be a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="fracsol", description="Fractional NLS soliton dynamics toolkit.")
    parser.add_argument("--version", action="version", version=f"fracsol {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, out_default):
        p.add_argument("--config", help="key = value file; command-line flags win")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=out_default)
        return p

    g = common(sub.add_parser("ground", help="ground state Q and its identity report"), "runs/ground/Q")
    g.add_argument("--dim", type=int, choices=(1, 2), default=1)
    g.add_argument("--s", type=order_arg, default=1.0)
    g.add_argument("--p", type=positive(), default=1.0)
    g.add_argument("--n", type=positive(int), default=4096)
    g.add_argument("--box", type=positive(), default=None, help="half length L (default: from decay)")
    g.add_argument("--tol", type=positive(), default=1e-11)
    g.add_argument("--max-iter", type=positive(int), default=2000)
    g.add_argument("--solver", choices=("petviashvili", "flow"), default="petviashvili")

    lo = common(sub.add_parser("linops", help="probes of the linearized operators"), "runs/linops")
    lo.add_argument("--dim", type=int, choices=(1, 2), default=1)
    lo.add_argument("--s", type=order_arg, default=1.0)
    lo.add_argument("--p", type=positive(), default=1.0)
    lo.add_argument("--n", type=positive(int), default=1024)
    lo.add_argument("--box", type=positive(), default=None)
    lo.add_argument("--probe", choices=("kernel", "coercivity", "identities", "spectrum"), default="kernel")
    lo.add_argument("--samples", type=positive(int), default=32)

    o = common(sub.add_parser("ode", help="Newtonian trajectory"), "runs/ode/trajectory.csv")
    o.add_argument("--s", type=order_arg, default=1.0)
    o.add_argument("--potential", default="harmonic2d")
    o.add_argument("--x0", type=vector_arg, default=[1.0, 1.0])
    o.add_argument("--v0", type=vector_arg, default=[1.0, 0.5])
    o.add_argument("--T", type=positive(), default=10.0)
    o.add_argument("--method", choices=("rk4", "rk45"), default="rk45")
    o.add_argument("--dt", type=positive(), default=1e-3, help="rk4 step")
    o.add_argument("--tol", type=positive(), default=1e-10, help="rk45 tolerance")
    o.add_argument("--reg-floor", type=float, default=0.0)
    o.add_argument("--sample-dt", type=positive(), default=None)

    e = common(sub.add_parser("evolve", help="semiclassical NLS run"), "runs/evolve")
    e.add_argument("--eps", type=positive(), default=0.1)
    e.add_argument("--s", type=order_arg, default=1.0)
    e.add_argument("--p", type=positive(), default=1.0)
    e.add_argument("--potential", default="quadratic")
    e.add_argument("--x0", type=vector_arg, default=[1.0])
    e.add_argument("--v0", type=vector_arg, default=[1.0])
    e.add_argument("--T", type=positive(), default=1.0)
    e.add_argument("--dt", type=positive(), default=None)
    e.add_argument("--n", type=positive(int), default=None)
    e.add_argument("--box", type=positive(), default=None)
    e.add_argument("--snap-every", type=positive(int), default=None)
    e.add_argument("--sample-every", type=positive(int), default=None)
    e.add_argument("--q-n", type=positive(int), default=None, help="grid size of the reference Q")
    e.add_argument("--q-box", type=positive(), default=None, help="half length of the reference Q grid")

    f = common(sub.add_parser("fit", help="orbit fit of one field dump"), "runs/fit")
    f.add_argument("--field", required=True, help="field dump prefix")
    f.add_argument("--s", type=order_arg, default=1.0)
    f.add_argument("--p", type=positive(), default=1.0)

    v = common(sub.add_parser("verify", help="run an acceptance bundle"), "runs/verify")
    v.add_argument("--suite", choices=("endpoint-s1", "full", "quick"), default="endpoint-s1")
    v.add_argument("--only", type=vector_arg, default=None, help="comma-separated criterion numbers")

    w = common(sub.add_parser("sweep", help="eps and s sweeps of the tracking diagnostics"), "runs/sweep")
    w.add_argument("--eps", type=vector_arg, default=[0.2, 0.1, 0.05])
    w.add_argument("--s", type=vector_arg, default=[1.0])
    w.add_argument("--T", type=positive(), default=1.0)
    w.add_argument("--dt", type=positive(), default=1e-4)
    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    if not argv:
        raise UsageError("no command given")
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("no command given")
    if getattr(args, "config", None):
        conf = read_config_file(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in subparser._actions}
        for key in conf:
            if key not in known or key in ("help", "config"):
                raise UsageError(f"unknown key in {args.config}: {key!r}")
        # rebuild with config values as defaults, so explicit flags still win
        subparser.set_defaults(**{k: _convert(known[k], v) for k, v in conf.items()})
        args = parser.parse_args(argv)
    if args.command == "sweep":
        for s in args.s:
            if not 0.0 < s <= 1.0:
                raise UsageError(f"argument --s: order s must lie in (0, 1], got {s}")
    return args


def _convert(action: argparse.Action, text: str):
    try:
        val = text if action.type is None else action.type(text)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"config key {action.dest}: {exc}")
    if action.choices is not None and val not in action.choices:
        raise UsageError(f"config key {action.dest}: invalid choice {val!r}")
    return val


def config_from_args(args: argparse.Namespace) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "seed", "out", "config")}
    return RunConfig(args.command, params, int(args.seed), str(args.out))


# ---------------------------------------------------------------------------
# commands; each returns (exit code, checks) and appends to manifest.outputs/guards


def _out_dir(cfg: RunConfig, is_prefix: bool) -> Path:
    out = Path(cfg.out)
    return out.parent if is_prefix else out


def cmd_ground(cfg: RunConfig, manifest: RunManifest) -> int:
    from .ground_state import ground_state, ground_state_flow

    p = cfg.params
    if p["solver"] == "flow":
        gs = ground_state_flow(p["dim"], p["s"], p["p"], p["n"], p["box"], max_iter=max(p["max_iter"], 20000))
    else:
        gs = ground_state(p["dim"], p["s"], p["p"], p["n"], p["box"], p["tol"], p["max_iter"])
    prefix = Path(cfg.out)
    manifest.outputs.extend(save_field(gs.Q, prefix))
    report = {
        "residual": gs.residual, "mass": gs.mass, "action": gs.action, "energy": gs.energy,
        "iterations": gs.iterations, "box": gs.grid.half_length, "identities": gs.identity_report,
    }
    manifest.outputs.append(emit_json(report, prefix.with_name(prefix.name + "_identities.json")))
    manifest.checks.append({"name": "residual", "value": gs.residual})
    return EXIT_OK


def cmd_linops(cfg: RunConfig, manifest: RunManifest) -> int:
    from . import linearized as lin
    from .ground_state import ground_state

    p = cfg.params
    gs = ground_state(p["dim"], p["s"], p["p"], p["n"], p["box"])
    pair = lin.LinearizedPair.from_ground_state(gs)
    probe = p["probe"]
    if probe == "kernel":
        report = lin.kernel_report(pair)
        report["dimension"] = lin.kernel_dimension(pair, seed=cfg.seed)
    elif probe == "identities":
        report = lin.dilation_identities(pair)
    elif probe == "coercivity":
        plus = lin.coercivity_probe(pair, lin.constraint_v0(pair), p["samples"], cfg.seed, "plus")
        minus = lin.coercivity_probe(pair, lin.constraint_hs_q(pair), p["samples"], cfg.seed, "minus")
        report = {"plus_min_ratio": plus.min_ratio, "minus_min_ratio": minus.min_ratio,
                  "plus_ratios": plus.ratios, "minus_ratios": minus.ratios}
    else:
        plus = lin.smallest_eigenpairs(pair, "plus", lin.constraint_v0(pair), count=3, seed=cfg.seed)
        minus = lin.smallest_eigenpairs(pair, "minus", lin.constraint_hs_q(pair), count=3, seed=cfg.seed)
        report = {"plus": [[e.value, e.residual] for e in plus],
                  "minus": [[e.value, e.residual] for e in minus]}
    report["ground_state_residual"] = gs.residual
    manifest.outputs.append(emit_json(report, Path(cfg.out) / f"linops_{probe}.json"))
    return EXIT_OK


def cmd_ode(cfg: RunConfig, manifest: RunManifest) -> int:
    p = cfg.params
    x0, v0 = p["x0"], p["v0"]
    if len(x0) != len(v0):
        raise DomainError("--x0 and --v0 need the same number of components")
    V = newton.parse_potential(p["potential"], len(x0))
    step = p["dt"] if p["method"] == "rk4" else p["tol"]
    traj = newton.integrate(newton.NewtonState(0.0, x0, v0), p["s"], V, p["method"], p["T"], step,
                            p["reg_floor"], p["sample_dt"])
    manifest.outputs.append(emit_csv(traj.header(), traj.rows(), cfg.out))
    manifest.checks.append({"name": "invariant drift", "value": traj.energy_drift()})
    manifest.guards.extend(f"{k}: {v}" for k, v in traj.stats.items() if "floor" in k or "guard" in k)
    return EXIT_OK


def reference_profile(dim: int, s: float, p: float, n: int | None, box: float | None):
    from .ground_state import default_box, ground_state

    if n is None:
        n = (4096 if s == 1.0 else 8192) if dim == 1 else 256
    if box is None:
        box = 20.0 if (s == 1.0 and dim == 1) else default_box(dim, s)
    return ground_state(dim, s, p, n, box)


def evolve_setup(p: dict):
    """Reference Q, lab grid and parameters for an evolve run; defaults follow the trajectory."""
    from .propagator import SimParams, default_dt, lab_box
    from .spectral import SpectralGrid

    x0, v0 = p["x0"], p["v0"]
    dim = len(x0)
    if len(v0) != dim:
        raise DomainError("--x0 and --v0 need the same number of components")
    V = newton.parse_potential(p["potential"], dim)
    gs = reference_profile(dim, p["s"], p["p"], p.get("q_n"), p.get("q_box"))
    traj = newton.integrate(newton.NewtonState(0.0, x0, v0), p["s"], V, "rk45", p["T"], 1e-10)
    eps = p["eps"]
    L = p["box"] or math.ceil(lab_box(traj.x, eps, gs.grid.half_length) + 1.0)
    n = p["n"]
    if n is None:
        vmax = float(np.max(np.linalg.norm(traj.xi, axis=1)))
        need = max(16.0 * L / eps, 6.0 * L * vmax / (math.pi * eps))
        n = 1 << max(2, math.ceil(math.log2(need)))
    grid = SpectralGrid(dim, n, L)
    dt = p["dt"] or max(default_dt(eps, p["s"], grid.spacing), 1e-4)
    steps = max(1, round(p["T"] / dt))
    params = SimParams(eps, p["s"], p["p"], grid, V, p["T"] / steps, p["T"], tuple(x0), tuple(v0))
    return gs, traj, params


def cmd_evolve(cfg: RunConfig, manifest: RunManifest) -> int:
    from .errors import BoundaryError
    from .propagator import energy_drift, evolve, mass_drift

    p = cfg.params
    gs, traj, params = evolve_setup(p)
    out = Path(cfg.out)
    steps = params.steps
    sample_every = p["sample_every"] or max(1, steps // 100)
    snap_every = p["snap_every"] or max(1, steps // 10)
    manifest.checks.append({"name": "resolved", **params.describe(), "dt": params.dt})
    try:
        rec = evolve(params, gs, sample_every=sample_every, snap_every=snap_every,
                     snapshot_dir=out / "snapshots")
    except BoundaryError as exc:
        rec = exc.diagnostics.get("record")
        if rec is not None:
            manifest.outputs.append(emit_csv(rec.header(), rec.rows(), out / "diagnostics.csv"))
            manifest.guards.extend(rec.guards)
        raise
    manifest.guards.extend(rec.guards)
    manifest.outputs.append(emit_csv(rec.header(), rec.rows(), out / "diagnostics.csv"))
    manifest.outputs.append(out / "snapshots")
    manifest.checks.append({"name": "mass drift", "value": mass_drift(rec)})
    manifest.checks.append({"name": "E_eps drift", "value": energy_drift(rec)})
    return EXIT_OK


def cmd_fit(cfg: RunConfig, manifest: RunManifest) -> int:
    from .ground_state import ground_state
    from .modulation import fit_orbit

    p = cfg.params
    phi = load_field(p["field"])
    g = phi.grid
    gs = ground_state(g.dim, p["s"], p["p"], g.n, g.half_length)
    fit = fit_orbit(phi, gs)
    manifest.outputs.append(emit_json(fit.as_dict(), Path(cfg.out) / "fit.json"))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, manifest: RunManifest) -> int:
    from .acceptance import run_suite

    p = cfg.params
    only = [int(k) for k in p["only"]] if p["only"] else None
    out = Path(cfg.out)
    results = run_suite(p["suite"], only=only, log=print, out_dir=out / "figures")
    for r in results:
        manifest.checks.append(r.as_dict())
    manifest.outputs.append(emit_json({"suite": p["suite"], "results": [r.as_dict() for r in results]},
                                      out / "acceptance.json"))
    ok = bool(results) and all(r.passed for r in results)
    print(f"suite {p['suite']}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def sweep_task(s: float, eps: float, T: float, dt: float) -> dict:
    """One (s, eps) tracking run; top level so that worker processes can import it."""
    from .acceptance import harmonic_params, lab_grid, reference_state
    from .modulation import ledger_entry, tracking_constant, tracking_report
    from .ground_state import ground_state
    from .propagator import energy_drift, evolve, gradient_bound_check, initial_datum

    gs = reference_state(s)
    traj = newton.integrate(newton.NewtonState(0.0, [1.0], [1.0]), s, newton.quadratic(1), "rk45", T, 1e-12,
                            sample_dt=0.01)
    params = harmonic_params(eps, s, lab_grid(eps, s, gs.grid.half_length), dt, T)
    steps = params.steps
    rec = evolve(params, gs, sample_every=max(1, steps // 20), snap_every=max(1, steps // 10))
    coarse = ground_state(1, s, 1.0, 1024, 20.0 if s == 1.0 else 60.0)
    C = tracking_constant(coarse, traj.xi)["C"]
    rep = tracking_report(rec, traj, gs, params, C=C)
    ok = [r for r in rep.samples if r.ok]
    ratio = max((r.dist_sq / r.bound_rhs for r in ok if r.bound_rhs > 0), default=math.nan)
    ledger0 = ledger_entry(initial_datum(gs, params), 0.0, traj, gs, params).E_total
    return {
        "s": s, "eps": eps, "n": params.grid.n, "box": params.grid.half_length, "dt": params.dt,
        "gradient_bound": gradient_bound_check(rec), "sup_dist": rep.sup_dist(),
        "bound_ratio": ratio, "C": C, "C2": rep.C2, "E_drift": energy_drift(rec), "ledger_t0": ledger0,
        "failed_fits": len(rep.samples) - len(ok),
    }


def cmd_sweep(cfg: RunConfig, manifest: RunManifest) -> int:
    from .acceptance import order_fit

    p = cfg.params
    tasks = [(s, eps, p["T"], p["dt"]) for s in p["s"] for eps in p["eps"]]
    workers = min(thread_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_task, *zip(*tasks)))
    else:
        rows = [sweep_task(*t) for t in tasks]
    keys = list(rows[0])
    out = Path(cfg.out)
    manifest.outputs.append(emit_csv(keys, ([r[k] for k in keys] for r in rows), out / "sweep_runs.csv"))
    fits = []
    for s in p["s"]:
        sel = [r for r in rows if r["s"] == s]
        if len(sel) < 2:
            continue
        eps = [r["eps"] for r in sel]
        spread = max(r["gradient_bound"] for r in sel) / min(r["gradient_bound"] for r in sel)
        fits.append([s, "sup_dist", order_fit(eps, [r["sup_dist"] for r in sel])])
        fits.append([s, "ledger_t0", order_fit(eps, [r["ledger_t0"] for r in sel])])
        fits.append([s, "gradient_bound_spread", spread])
        fits.append([s, "max_bound_ratio", max(r["bound_ratio"] for r in sel)])
    manifest.outputs.append(emit_csv(["s", "quantity", "value"], fits, out / "sweep_orders.csv"))
    manifest.checks.extend({"name": f"s={f[0]} {f[1]}", "value": f[2]} for f in fits)
    manifest.guards.append(f"workers: {workers}")
    return EXIT_OK


COMMANDS = {
    "ground": (cmd_ground, True), "linops": (cmd_linops, False), "ode": (cmd_ode, True),
    "evolve": (cmd_evolve, False), "fit": (cmd_fit, False), "verify": (cmd_verify, False),
    "sweep": (cmd_sweep, False),
}


def run(cfg: RunConfig) -> int:
    func, is_prefix = COMMANDS[cfg.command]
    manifest = RunManifest(cfg, __version__)
    start = time.perf_counter()
    code = EXIT_NUMERICAL
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                code = func(cfg, manifest)
            finally:
                manifest.guards.extend(f"{w.category.__name__}: {w.message}" for w in caught)
        manifest.status = "complete" if code == EXIT_OK else "failed"
    except USAGE_ERRORS + (UsageError,) as exc:
        manifest.status, manifest.error = "failed", f"{type(exc).__name__}: {exc}"
        print(f"fracsol {cfg.command}: error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (FracsolError, NumericalError) as exc:
        manifest.status, manifest.error = "failed", f"{type(exc).__name__}: {exc}"
        print(f"fracsol {cfg.command}: numerical error: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except Exception as exc:
        manifest.status, manifest.error = "failed", f"{type(exc).__name__}: {exc}"
        manifest.wall_clock = time.perf_counter() - start
        emit_manifest(manifest, _out_dir(cfg, is_prefix) / "manifest.json")
        raise
    manifest.wall_clock = time.perf_counter() - start
    emit_manifest(manifest, _out_dir(cfg, is_prefix) / "manifest.json")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(build_parser().format_usage().rstrip(), file=sys.stderr)
        print(f"fracsol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
