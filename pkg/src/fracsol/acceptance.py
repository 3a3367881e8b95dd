"""Desk-scale acceptance checks, shared by the test-suite and the ``verify`` command.

Each ``criterion_k`` returns a :class:`CriterionResult` holding named checks
with the measured value, the bound and the verdict.  ``endpoint=True``
restricts a criterion to its s = 1 parts.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import newton
from .ground_state import default_box, ground_state
from .io import emit_csv
from .linearized import (
    LinearizedPair,
    commutator_residual,
    constraint_hs_q,
    constraint_v0,
    dilation_identities,
    kernel_report,
    smallest_eigenpairs,
)
from .modulation import (
    fit_orbit,
    j_s_quadrature,
    j_s_spectral,
    ledger_entry,
    thm_dyn_terms,
    tracking_constant,
    tracking_report,
    weinstein_gap_check,
)
from .propagator import (
    SimParams,
    energy_drift,
    evolve,
    gradient_bound_check,
    initial_datum,
    mass_drift,
    semiclassical_energy,
)
from .spectral import Field, SpectralGrid, hs_norm_sq, l2_norm_sq, normalization_constant, translate


@dataclass
class Check:
    name: str
    value: float
    bound: str
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound, "passed": self.passed}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name: str, value, bound: str, passed) -> None:
        self.checks.append(Check(name, float(value), bound, bool(passed)))

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        failed = [c.name for c in self.checks if not c.passed]
        tail = f"; failed: {', '.join(failed)}" if failed else ""
        return (f"criterion {self.number:2d} {verdict}  {self.title} "
                f"({len(self.checks)} checks, {self.elapsed:.1f} s){tail}")

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "elapsed": self.elapsed, "checks": [c.as_dict() for c in self.checks]}


def order_fit(eps, values) -> float:
    """Slope of log|values| against log eps."""
    return float(np.polyfit(np.log(np.asarray(eps, float)), np.log(np.abs(np.asarray(values, float))), 1)[0])


def _timed(number: int, title: str):
    def wrap(func):
        def run(*args, **kwargs) -> CriterionResult:
            res = CriterionResult(number, title)
            start = time.perf_counter()
            func(res, *args, **kwargs)
            res.elapsed = time.perf_counter() - start
            return res

        run.__name__ = func.__name__
        run.__doc__ = func.__doc__
        return run

    return wrap


# ---------------------------------------------------------------------------
# 1-4: ground states and linearization


@_timed(1, "closed-form ground states")
def criterion_1(res: CriterionResult, endpoint: bool = False) -> None:
    t = time.perf_counter()
    gs = ground_state(1, 1.0, 1.0, 4096, 20.0)
    x = gs.grid.x
    exact = math.sqrt(2.0) / np.cosh(math.sqrt(2.0) * x)
    err = np.max(np.abs(gs.Q.values - exact)) / np.max(exact)
    res.add("sech profile, Linf relative", err, "<= 1e-6", err <= 1e-6)
    res.add("sech profile, seconds", time.perf_counter() - t, "< 5", time.perf_counter() - t < 5)
    if endpoint:
        return
    t = time.perf_counter()
    gs = ground_state(1, 0.5, 0.5, 32768, 200.0)
    x = gs.grid.x
    exact = 2.0 / (1.0 + 4.0 * x**2)
    err = math.sqrt(np.sum((gs.Q.values - exact) ** 2) / np.sum(exact**2))
    res.add("algebraic profile, L2 relative", err, "<= 1e-2", err <= 1e-2)
    res.add("algebraic profile, seconds", time.perf_counter() - t, "< 60", time.perf_counter() - t < 60)


IDENTITY_CASES = {(1.0, 1.0): (4096, 20.0), (0.75, 1.0): (4096, 100.0), (0.5, 0.45): (8192, 200.0)}


@_timed(2, "ground-state identity suite")
def criterion_2(res: CriterionResult, endpoint: bool = False) -> None:
    t = time.perf_counter()
    for (s, p), (n, L) in IDENTITY_CASES.items():
        if endpoint and s != 1.0:
            continue
        rep = ground_state(1, s, p, n, L).identity_report
        values = {
            "pohozaev": rep["pohozaev"],
            "nehari": rep["nehari"],
            "kinetic": rep["scaling_map"]["kinetic"],
            "mass": rep["scaling_map"]["mass"],
            "potential": rep["scaling_map"]["potential"],
            "gamma0": rep["scaling_map"]["gamma0"],
        }
        for key, val in values.items():
            res.add(f"(s={s}, p={p}) {key}", val, "<= 1e-4", val <= 1e-4)
    res.add("seconds", time.perf_counter() - t, "< 120", time.perf_counter() - t < 120)


@_timed(3, "normalization constant")
def criterion_3(res: CriterionResult, endpoint: bool = False) -> None:
    c = normalization_constant(1, 0.5)
    res.add("C(1,1/2) - 1/pi", abs(c - 1.0 / math.pi), "<= 1e-6", abs(c - 1.0 / math.pi) <= 1e-6)
    for dim in (1, 2):
        ratios = [normalization_constant(dim, s) / (s * (1.0 - s)) for s in (0.05, 0.5, 0.95)]
        ok = all(0.0 < r < math.inf for r in ratios)
        res.add(f"C({dim},s)/(s(1-s)) min over sweep", min(ratios), "> 0, finite", ok)
        res.add(f"C({dim},s)/(s(1-s)) max over sweep", max(ratios), "finite", math.isfinite(max(ratios)))


@_timed(4, "kernel, coercivity and dilation identities")
def criterion_4(res: CriterionResult, endpoint: bool = False) -> None:
    orders = (1.0,) if endpoint else (1.0, 0.75)
    for s in orders:
        L = 20.0 if s == 1.0 else 100.0
        gs = ground_state(1, s, 1.0, 4096, L)
        pair = LinearizedPair.from_ground_state(gs)
        kr = kernel_report(pair)
        bound = 10.0 * gs.residual
        res.add(f"s={s} ||L- Q||", kr["l_minus_q"], f"<= 10 x residual ({bound:.2e})",
                kr["l_minus_q"] <= max(bound, 1e-300))
        res.add(f"s={s} ||L+ dQ|| relative", kr["l_plus_dq"][0], "<= 1e-4", kr["l_plus_dq"][0] <= 1e-4)
        ids = dilation_identities(pair)
        tol = 1e-6 if s == 1.0 else 1e-3
        for key, val in ids.items():
            res.add(f"s={s} {key} identity", val, f"<= {tol:g}", val <= tol)
        coarse = ground_state(1, s, 1.0, 1024, 20.0 if s == 1.0 else 60.0)
        cp = LinearizedPair.from_ground_state(coarse)
        lp = smallest_eigenpairs(cp, "plus", constraint_v0(cp))[0].value
        lm = smallest_eigenpairs(cp, "minus", constraint_hs_q(cp))[0].value
        res.add(f"s={s} min L+ on V0", lp, "> 0", lp > 0)
        res.add(f"s={s} min L- on <v,Q>_Hs = 0", lm, "> 0", lm > 0)
    g = SpectralGrid(1, 1024, 20.0)
    gauss = g.from_function(lambda x: np.exp(-x**2))
    for s in ((1.0,) if endpoint else (1.0, 0.5)):
        r = commutator_residual(gauss, s)
        res.add(f"commutator on a Gaussian, s={s}", r, "<= 1e-6", r <= 1e-6)


# ---------------------------------------------------------------------------
# 5: Newtonian flow


FIGURE_ORDERS = (1.0, 0.5, 0.25)
FIGURE_DATA = ((1.0, 0.5), (0.5, 1.0))


def figure_run(s: float, a: float, b: float, T: float = 50.0, tol: float = 1e-10):
    state = newton.NewtonState(0.0, [1.0, a], [1.0, b])
    return newton.integrate(state, s, newton.harmonic2d(), "rk45", T, tol, sample_dt=0.05)


@_timed(5, "Newtonian flow")
def criterion_5(res: CriterionResult, endpoint: bool = False, out_dir: Path | None = None) -> None:
    V = newton.harmonic2d()
    traj = newton.integrate(newton.NewtonState(0.0, [1.0, 1.0], [1.0, 0.5]), 1.0, V, "rk4", 10.0, 1e-3,
                            sample_dt=0.01)
    t = traj.t
    exact = np.stack([np.cos(t) + np.sin(t), np.cos(2 * t) + 0.25 * np.sin(2 * t)], axis=1)
    err = float(np.max(np.abs(traj.x - exact)))
    res.add("s=1 closed form (rk4, dt=1e-3, T=10)", err, "<= 1e-8", err <= 1e-8)
    orders = (1.0,) if endpoint else (0.25, 0.5, 0.75, 1.0)
    for s in orders:
        tr = newton.integrate(newton.NewtonState(0.0, [1.0, 1.0], [1.0, 0.5]), s, V, "rk45", 50.0, 1e-12)
        drift = tr.energy_drift()
        res.add(f"invariant drift s={s} (T=50)", drift, "<= 1e-7", drift <= 1e-7)
    if not endpoint:
        for s in (0.25, 0.5, 0.75):
            state = newton.NewtonState(0.0, [0.3, -1.2], [0.0, 0.0])
            _, dxi = newton.rhs(state, s, V)
            tr = newton.integrate(state, s, V, "rk4", 1.0, 1e-2)
            fixed = np.all(dxi == 0.0) and np.all(tr.x == tr.x[0]) and np.all(tr.xi == 0.0)
            res.add(f"xi = 0 fixed point s={s}", 0.0 if fixed else 1.0, "exact", fixed)
    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory()
        out_dir = Path(tmp.name)
    try:
        for s in ((1.0,) if endpoint else FIGURE_ORDERS):
            for a, b in FIGURE_DATA:
                tr = figure_run(s, a, b)
                path = emit_csv(tr.header(), tr.rows(), Path(out_dir) / f"figure_s{s:g}_a{a:g}_b{b:g}.csv")
                ok = path.exists() and abs(tr.t[-1] - 50.0) < 1e-9
                res.add(f"figure run s={s} (a,b)=({a:g},{b:g})", tr.t[-1], "reaches T=50, CSV written", ok)
    finally:
        if tmp is not None:
            tmp.cleanup()


# ---------------------------------------------------------------------------
# 6-8: propagation and energy expansion


def harmonic_params(eps: float, s: float, grid: SpectralGrid, dt: float, T: float = 1.0) -> SimParams:
    return SimParams(eps, s, 1.0, grid, newton.quadratic(1), dt, T, (1.0,), (1.0,))


@_timed(6, "propagator conservation and splitting order")
def criterion_6(res: CriterionResult, endpoint: bool = False) -> None:
    gs = ground_state(1, 1.0, 1.0, 4096, 20.0)
    params = harmonic_params(0.1, 1.0, SpectralGrid(1, 2048, 8.0), 1e-4)
    rec = evolve(params, gs, sample_every=100)
    res.add("mass drift over 1e4 steps", mass_drift(rec), "<= 1e-10", mass_drift(rec) <= 1e-10)
    res.add("E_eps drift, T=1, dt=1e-4", energy_drift(rec), "<= 1e-6", energy_drift(rec) <= 1e-6)
    steps = (2e-3, 1e-3, 5e-4, 2.5e-4)
    drifts = []
    for dt in steps:
        p = harmonic_params(0.1, 1.0, SpectralGrid(1, 2048, 10.0), dt)
        r = evolve(p, gs, sample_every=p.steps)
        drifts.append(abs(r.energy[-1] - r.energy[0]) / abs(r.energy[0]))
    slope = order_fit(steps, drifts)
    res.add("splitting order (E_eps error vs dt)", slope, "2.0 +- 0.2", abs(slope - 2.0) <= 0.2)


EPS_SWEEP = (0.2, 0.1, 0.05)


def reference_state(s: float):
    """Ground state (p = 1) on the reference grid used by the semiclassical checks."""
    if s == 1.0:
        return ground_state(1, 1.0, 1.0, 4096, 20.0)
    return ground_state(1, s, 1.0, 8192, default_box(1, s))


def lab_grid(eps: float, s: float, ref_half_length: float) -> SpectralGrid:
    """Lab box holding the trajectory (|x| <= 1.5) and the rescaled reference box, resolved to eps."""
    L = 8.0 if s == 1.0 else 2.0 + eps * ref_half_length
    n = 1 << int(math.ceil(math.log2(24.0 * L / eps)))
    return SpectralGrid(1, n, L)


@_timed(7, "energy expansion at t = 0")
def criterion_7(res: CriterionResult, endpoint: bool = False) -> None:
    for s in ((1.0,) if endpoint else (0.9, 1.0)):
        gs = reference_state(s)
        V = newton.quadratic(1)
        traj = newton.integrate(newton.NewtonState(0.0, [1.0], [1.0]), s, V, "rk45", 0.1, 1e-12)
        m = gs.mass
        J = j_s_spectral(gs, [1.0])
        H0 = 0.5 * m + m * V([1.0])
        defects, ledger = [], []
        for eps in EPS_SWEEP:
            params = harmonic_params(eps, s, lab_grid(eps, s, gs.grid.half_length), 1e-3)
            u0 = initial_datum(gs, params)
            defects.append(semiclassical_energy(u0, params) - gs.energy - H0 - 0.5 * J)
            ledger.append(ledger_entry(u0, 0.0, traj, gs, params, J).E_total)
        q1 = order_fit(EPS_SWEEP, defects)
        q2 = order_fit(EPS_SWEEP, ledger)
        res.add(f"s={s} order of E_eps(0) - E(Q) - H(0) - J/2", q1, ">= 1.8", q1 >= 1.8)
        res.add(f"s={s} order of the ledger energy at t=0", q2, ">= 1.8", q2 >= 1.8)


@_timed(8, "boost defect J_s")
def criterion_8(res: CriterionResult, endpoint: bool = False) -> None:
    if not endpoint:
        gs = ground_state(1, 0.5, 0.5, 512, 100.0)
        a = j_s_spectral(gs, 1.0)
        b = j_s_quadrature(gs, 1.0)
        rel = abs(a - b) / abs(a)
        res.add("spectral vs quadrature (s=1/2, n=512)", rel, "<= 1e-2", rel <= 1e-2)
    g1 = ground_state(1, 1.0, 1.0, 4096, 20.0)
    j1 = abs(j_s_spectral(g1, 1.0))
    res.add("|J_1|", j1, "<= 1e-10", j1 <= 1e-10)
    if not endpoint:
        q = ground_state(1, 0.9, 1.0, 8192, default_box(1, 0.9)).Q
        orders = (0.9, 0.95, 0.99)
        vals = [abs(j_s_spectral(q, 1.0, s)) for s in orders]
        decreasing = all(vals[i + 1] < vals[i] for i in range(len(vals) - 1))
        res.add("|J_s| decreasing as s -> 1", vals[-1], "strictly decreasing", decreasing)
        slope, intercept = np.polyfit([1.0 - s for s in orders], vals, 1)
        res.add("linear-fit slope in (1-s)", slope, "finite", math.isfinite(slope))


# ---------------------------------------------------------------------------
# 9-11: modulation


@_timed(9, "modulational gap and orbit fit")
def criterion_9(res: CriterionResult, endpoint: bool = False) -> None:
    gs = ground_state(1, 1.0, 1.0, 1024, 20.0)
    gap = weinstein_gap_check(gs, amplitude=0.05, samples=100, seed=0)
    res.add("min energy gap", gap.min_gap, ">= -1e-10", gap.min_gap >= -1e-10)
    res.add("min gap/dist^2", gap.min_ratio, "> 0", gap.min_ratio > 0)
    phi = translate(gs.Q, 3.2) * np.exp(0.7j)
    fit = fit_orbit(phi, gs)
    res.add("planted shift error", abs(fit.shift[0] - 3.2), "<= 1e-6", abs(fit.shift[0] - 3.2) <= 1e-6)
    res.add("planted phase error", abs(fit.phase - 0.7), "<= 1e-6", abs(fit.phase - 0.7) <= 1e-6)
    rng = np.random.default_rng(7)
    from .linearized import random_smooth_field

    w = random_smooth_field(gs.grid, rng)
    w = Field(gs.grid, w.values + 1j * random_smooth_field(gs.grid, rng).values)
    w = w * (0.01 / math.sqrt(hs_norm_sq(w, 1.0)))
    phi = (gs.Q + w) * math.sqrt(gs.mass / l2_norm_sq(gs.Q + w))
    fit = fit_orbit(phi, gs)
    res.add("orthogonality <U, H(Q) dQ>", abs(fit.ortho_U[0]), "<= 1e-6", abs(fit.ortho_U[0]) <= 1e-6)
    res.add("orthogonality <V, Q>_Hs", abs(fit.ortho_V), "<= 1e-6", abs(fit.ortho_V) <= 1e-6)


def tracking_runs(s: float, dt: float = 1e-4, T: float = 1.0):
    gs = reference_state(s)
    V = newton.quadratic(1)
    traj = newton.integrate(newton.NewtonState(0.0, [1.0], [1.0]), s, V, "rk45", T, 1e-12, sample_dt=0.01)
    runs = []
    for eps in EPS_SWEEP:
        params = harmonic_params(eps, s, lab_grid(eps, s, gs.grid.half_length), dt, T)
        steps = params.steps
        rec = evolve(params, gs, sample_every=steps // 20, snap_every=steps // 10)
        runs.append((eps, params, rec))
    return gs, traj, runs


@_timed(10, "soliton tracking")
def criterion_10(res: CriterionResult, endpoint: bool = False) -> None:
    start = time.perf_counter()
    for s in ((1.0,) if endpoint else (1.0, 0.9)):
        gs, traj, runs = tracking_runs(s)
        bounds = [gradient_bound_check(rec) for _, _, rec in runs]
        spread = max(bounds) / min(bounds)
        res.add(f"s={s} gradient bound spread over eps", spread, "<= 3", spread <= 3.0)
        if s == 1.0:
            sups = [tracking_report(rec, traj, gs, params).sup_dist() for _, params, rec in runs]
            q = order_fit(EPS_SWEEP, sups)
            res.add("s=1 order of sup_t orbit distance^2", q, ">= 1.8", q >= 1.8)
        else:
            coarse = ground_state(1, s, 1.0, 1024, 60.0)
            const = tracking_constant(coarse, traj.xi)
            worst = 0.0
            for eps, params, rec in runs:
                rep = tracking_report(rec, traj, gs, params, C=const["C"])
                ok = [r for r in rep.samples if r.ok]
                worst = max(worst, max(r.dist_sq / r.bound_rhs for r in ok if r.bound_rhs > 0))
                res.add(f"s={s} eps={eps} samples fitted", len(ok), f"== {len(rep.samples)}",
                        len(ok) == len(rep.samples))
            res.add(f"s={s} max dist^2 / (C E(t) + C2 eps^2)", worst, "<= 1", worst <= 1.0)
    res.add("seconds", time.perf_counter() - start, "< 1800", time.perf_counter() - start < 1800)


@_timed(11, "fractional vs local comparison terms")
def criterion_11(res: CriterionResult, endpoint: bool = False) -> None:
    if endpoint:
        q1 = ground_state(1, 1.0, 1.0, 4096, 20.0)
        tr = newton.integrate(newton.NewtonState(0.0, [1.0], [1.0]), 1.0, newton.quadratic(1), "rk45", 1.0, 1e-12)
        d = thm_dyn_terms(None, None, tr, tr, q1, q1, eps=0.1, s=1.0, times=np.linspace(0, 1, 11))
        worst = float(max(np.max(d.A3), np.max(d.A4)))
        res.add("s=1 against itself: A3, A4", worst, "<= 1e-20", worst <= 1e-20)
        return
    V = newton.quadratic(1)
    L, n = 128.0, 8192
    times = np.linspace(0.1, 1.0, 10)
    q1 = ground_state(1, 1.0, 1.0, n, L)
    tr1 = newton.integrate(newton.NewtonState(0.0, [1.0], [1.0]), 1.0, V, "rk45", 1.0, 1e-12, sample_dt=0.01)
    a3, a4 = [], []
    for s in (0.9, 0.95, 0.99):
        qs = ground_state(1, s, 1.0, n, L)
        trs = newton.integrate(newton.NewtonState(0.0, [1.0], [1.0]), s, V, "rk45", 1.0, 1e-12, sample_dt=0.01)
        per_eps = [thm_dyn_terms(None, None, trs, tr1, qs, q1, eps=eps, s=s, times=times)
                   for eps in (0.1, 0.2)]
        a4_all = np.concatenate([d.A4 for d in per_eps])
        spread = float(np.max(a4_all) - np.min(a4_all)) / float(np.max(a4_all))
        res.add(f"s={s} A4 spread over t and eps", spread, "<= 1e-10", spread <= 1e-10)
        a3.append(per_eps[0].A3)
        a4.append(a4_all[0])
    mono4 = a4[0] > a4[1] > a4[2]
    res.add("A4 decreasing along s = 0.9, 0.95, 0.99", a4[-1], "strictly decreasing", mono4)
    a3 = np.array(a3)
    mono3 = bool(np.all(a3[1:] < a3[:-1]))
    res.add("A3(t) decreasing along the sweep at every t (eps=0.1)", float(np.max(a3[-1])),
            "strictly decreasing", mono3)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}

SUITES = {
    "full": (tuple(CRITERIA), False),
    "endpoint-s1": ((1, 2, 4, 5, 6, 7, 8, 9, 10, 11), True),
    "quick": ((3, 8, 9), True),
}


def run_suite(name: str, only=None, log=print, **kwargs) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    numbers, endpoint = SUITES[name]
    if only:
        numbers = tuple(k for k in numbers if k in set(only))
    results = []
    for k in numbers:
        extra = kwargs if k == 5 else {}
        r = CRITERIA[k](endpoint=endpoint, **extra)
        if log is not None:
            log(r.line())
        results.append(r)
    return results
