"""Orbit-distance fits and the energy bookkeeping of modulated solitons.

The orbit of a ground state Q is {e^{i theta} Q(. - x)}.  ``fit_orbit``
finds the closest orbit point in H^s, ``weinstein_gap_check`` measures the
ratio between the energy gap and the squared orbit distance on the mass
sphere, and the remaining functions evaluate the terms in the expansion of
the semiclassical energy along a Newtonian trajectory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import fft, integrate, linalg, optimize

from .errors import (
    DomainError,
    GridMismatchError,
    NoSolitonError,
    NumericalError,
    PreconditionError,
    UnsupportedError,
)
from .ground_state import GroundStateResult, energy
from .linearized import random_smooth_field
from .newton import NewtonTrajectory
from .propagator import EvolutionRecord, SimParams, galilean_frame, semiclassical_energy
from .spectral import (
    Field,
    SpectralGrid,
    _check_order,
    boosted_multiplier,
    boosted_seminorm_sq,
    check_same_grid,
    gradient,
    hs_eps_norm_sq,
    hs_norm_sq,
    inner_hs,
    inner_l2,
    l2_norm_sq,
    normalization_constant,
    resample,
    seminorm_sq,
    translate,
    weighted_inner,
)

MASS_WINDOW = 0.1
FLATNESS_FACTOR = 10.0
DIST_FLOOR = 1e-12
GAP_TOLERANCE = 1e-10


def _unpack(Q, s=None, p=None):
    if isinstance(Q, GroundStateResult):
        return Q.Q, (Q.s if s is None else s), (Q.p if p is None else p)
    if s is None:
        raise DomainError("the order s is required when Q is a plain field")
    return Q, s, p


# ---------------------------------------------------------------------------
# orbit fit


@dataclass(frozen=True)
class ModulationFit:
    shift: np.ndarray
    phase: float
    dist_sq: float
    ortho_U: np.ndarray
    ortho_V: float
    peak_ratio: float
    evaluations: int

    def as_dict(self) -> dict:
        return {
            "shift": self.shift.tolist(),
            "phase": self.phase,
            "dist_sq": self.dist_sq,
            "ortho_U": self.ortho_U.tolist(),
            "ortho_V": self.ortho_V,
            "peak_ratio": self.peak_ratio,
            "evaluations": self.evaluations,
        }


class _Correlation:
    """c(x) = <phi, Q(. - x)>_{H^s} and its shift derivatives, from one pair of spectra."""

    def __init__(self, phi: Field, q: Field, s: float):
        g = phi.grid
        self.grid = g
        weight = 1.0 + 0.5 * g.k_abs ** (2.0 * s)
        norm = (g.spacing / g.n) ** g.dim
        self.G = fft.fftn(phi.values) * np.conj(fft.fftn(q.values)) * weight * norm
        self.axes = [g.k] * g.dim
        self.nyq = [np.abs(g.k) == g.k_max] * g.dim
        self.calls = 0

    def grid_values(self) -> np.ndarray:
        """c at every grid shift x = j h (indices wrap around the box)."""
        return fft.ifftn(self.G) * self.G.size

    def _factors(self, x, order):
        # per-axis conj of the translation phase (cos at Nyquist) and derivatives
        out = []
        for kj, nyq, xj in zip(self.axes, self.nyq, x):
            e = np.where(nyq, np.cos(kj * xj), np.exp(1j * kj * xj))
            fac = [e]
            if order >= 1:
                fac.append(np.where(nyq, -kj * np.sin(kj * xj), 1j * kj * e))
            if order >= 2:
                fac.append(-kj * kj * e)
            out.append(fac)
        return out

    def __call__(self, x, order: int = 0):
        self.calls += 1
        x = np.atleast_1d(np.asarray(x, dtype=float))
        fac = self._factors(x, order)
        dim = self.grid.dim

        def contract(orders):
            arr = self.G
            for axis in range(dim):
                shape = [1] * dim
                shape[axis] = self.grid.n
                arr = arr * fac[axis][orders[axis]].reshape(shape)
            return complex(arr.sum())

        c = contract([0] * dim)
        if order == 0:
            return c
        grad = np.array([contract([1 if a == j else 0 for a in range(dim)]) for j in range(dim)])
        hess = np.empty((dim, dim), dtype=complex)
        for i in range(dim):
            for j in range(dim):
                orders = [0] * dim
                orders[i] += 1
                orders[j] += 1
                hess[i, j] = contract(orders)
        return c, grad, hess


def _wrap(x: np.ndarray, L: float) -> np.ndarray:
    return (x + L) % (2.0 * L) - L


def fit_orbit(phi: Field, Q, s: float | None = None, p: float | None = None,
              newton_steps: int = 8) -> ModulationFit:
    """Closest point of the orbit of Q to phi in H^s.

    For a fixed shift the optimal phase is arg <phi, Q(. - x)>_{H^s}, which
    leaves |<phi, Q(. - x)>_{H^s}| to maximize over x.  All grid shifts are
    scanned at once by a Fourier cross-correlation, the best one is refined
    over sub-grid offsets by a Nelder-Mead search and polished with a few
    Newton steps on |c(x)|^2.
    """
    q, s, p = _unpack(Q, s, p)
    check_same_grid(phi, q)
    g = q.grid
    mq = l2_norm_sq(q)
    mphi = l2_norm_sq(phi)
    if abs(math.sqrt(mphi / mq) - 1.0) > MASS_WINDOW:
        raise PreconditionError(
            f"||phi||_2 = {math.sqrt(mphi):.6g} is not within {MASS_WINDOW:.0%} of "
            f"||Q||_2 = {math.sqrt(mq):.6g}; the orbit fit is only meaningful near the mass sphere"
        )
    corr = _Correlation(phi, q, s)
    landscape = np.abs(corr.grid_values())
    peak = float(landscape.max())
    mean = float(landscape.mean())
    ratio = peak / mean if mean > 0 else math.inf
    if not ratio >= FLATNESS_FACTOR:
        raise NoSolitonError(
            f"no soliton detected: correlation peak/mean = {ratio:.3g} < {FLATNESS_FACTOR:g}",
            {"peak": peak, "mean": mean},
        )
    idx = np.array(np.unravel_index(int(np.argmax(landscape)), landscape.shape))
    x0 = _wrap(idx * g.spacing, g.half_length)

    h = g.spacing
    simplex = np.vstack([x0] + [x0 + 0.5 * h * np.eye(g.dim)[j] for j in range(g.dim)])
    res = optimize.minimize(
        lambda x: -abs(corr(x)), x0, method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": 1e-10 * h, "fatol": 1e-15 * peak,
                 "maxiter": 400 * g.dim},
    )
    x = np.asarray(res.x, dtype=float)
    best = abs(corr(x))
    for _ in range(newton_steps):
        c, dc, ddc = corr(x, order=2)
        grad = 2.0 * np.real(np.conj(c) * dc)
        hess = 2.0 * np.real(np.outer(np.conj(dc), dc) + np.conj(c) * ddc)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > h:
            break
        trial = x + step
        val = abs(corr(trial))
        if val < best * (1.0 - 1e-15):
            break
        x, best = trial, val
        if np.max(np.abs(step)) < 1e-14 * max(1.0, g.half_length):
            break
    x = _wrap(x, g.half_length)
    c = corr(x)
    theta = float(np.angle(c)) % (2.0 * math.pi)

    rot = np.exp(1j * theta)
    diff = phi - translate(q, x) * rot
    dist_sq = hs_norm_sq(diff, s)
    back = translate(phi, -x) * np.exp(-1j * theta)
    U = back.real - q
    V = back.imag
    if p is not None:
        hq = (2.0 * p + 1.0) * np.abs(q.values) ** (2.0 * p)
        ortho_U = np.array([inner_l2(U, d * hq) for d in gradient(q)])
    else:
        ortho_U = np.array([inner_hs(U, d, s) for d in gradient(q)])
    ortho_V = inner_hs(V, q, s)
    return ModulationFit(x, theta, dist_sq, ortho_U, ortho_V, ratio, corr.calls)


# ---------------------------------------------------------------------------
# modulational inequality


@dataclass(frozen=True)
class WeinsteinGap:
    min_ratio: float
    max_ratio: float
    min_gap: float
    ratios: np.ndarray
    gaps: np.ndarray
    dists: np.ndarray
    violations: int
    excluded: int

    def __iter__(self):
        yield self.min_ratio
        yield self.max_ratio


def on_mass_sphere(phi: Field, mass: float) -> Field:
    return phi * math.sqrt(mass / l2_norm_sq(phi))


def weinstein_gap_check(Q, s: float | None = None, p: float | None = None,
                        amplitude: float = 0.05, samples: int = 100, seed: int = 0,
                        directions=None) -> WeinsteinGap:
    """Ratio (E(phi) - E(Q)) / dist^2 over random phi near Q on the mass sphere.

    Each perturbation is a complex sum of random bumps scaled to H^s norm
    ``amplitude``; ``directions`` may supply the perturbations instead.
    Samples with dist^2 below 1e-12 are excluded from the ratio.
    """
    q, s, p = _unpack(Q, s, p)
    if p is None:
        raise DomainError("the nonlinearity exponent p is required")
    if not 0.0 < amplitude <= 0.2:
        raise PreconditionError(f"amplitude must lie in (0, 0.2], got {amplitude}")
    g = q.grid
    mass = l2_norm_sq(q)
    e_q = energy(q, s, p)
    rng = np.random.default_rng(seed)
    if directions is None:
        draws = []
        for _ in range(samples):
            a = random_smooth_field(g, rng)
            b = random_smooth_field(g, rng)
            draws.append(Field(g, a.values + 1j * b.values))
    else:
        draws = list(directions)
    ratios, gaps, dists = [], [], []
    excluded = violations = 0
    for w in draws:
        norm = math.sqrt(hs_norm_sq(w, s))
        w = w * (amplitude / norm) if norm > amplitude else w
        phi = on_mass_sphere(q + w, mass)
        gap = energy(phi, s, p) - e_q
        d2 = fit_orbit(phi, q, s, p).dist_sq
        gaps.append(gap)
        dists.append(d2)
        if gap < -GAP_TOLERANCE:
            violations += 1
        if d2 < DIST_FLOOR:
            excluded += 1
            continue
        ratios.append(gap / d2)
    ratios = np.asarray(ratios)
    if violations:
        warnings.warn(f"{violations} samples fall below the ground-state energy", RuntimeWarning)
    lo = float(ratios.min()) if ratios.size else math.nan
    hi = float(ratios.max()) if ratios.size else math.nan
    return WeinsteinGap(lo, hi, float(np.min(gaps)), ratios, np.asarray(gaps),
                        np.asarray(dists), violations, excluded)


# ---------------------------------------------------------------------------
# the boost defect J_s


def j_s_spectral(Q, v0, s: float | None = None) -> float:
    """||(-Delta)^(s/2)(Q e^{i<., v0>})||^2 - ||(-Delta)^(s/2)Q||^2 - |v0|^(2s) ||Q||^2."""
    q, s, _ = _unpack(Q, s)
    v = np.broadcast_to(np.asarray(v0, dtype=float), (q.grid.dim,))
    if not np.any(v):
        return 0.0
    speed = float(np.linalg.norm(v))
    return boosted_seminorm_sq(q, s, v) - seminorm_sq(q, s) - speed ** (2.0 * s) * l2_norm_sq(q)


def _boost_kernel(z, v, s):
    return (1.0 - np.cos(z * v)) / np.abs(z) ** (1.0 + 2.0 * s)


def _cell_weights(count: int, h: float, v: float, s: float, nodes: int = 16) -> np.ndarray:
    """W_d = integral of (1 - cos(zv))/|z|^(1+2s) over the cell [(d-1/2)h, (d+1/2)h], d >= 0."""
    w = np.empty(count)
    # centre cell: (1 - cos(zv))/z^2 is smooth, leaving the weight z^(1-2s)
    def smooth(z):
        return 2.0 * math.sin(0.5 * z * v) ** 2 / z**2 if z > 0 else 0.5 * v * v

    half, _ = integrate.quad(smooth, 0.0, 0.5 * h, weight="alg", wvar=(1.0 - 2.0 * s, 0.0),
                             epsabs=0.0, epsrel=1e-13)
    w[0] = 2.0 * half
    t, wt = np.polynomial.legendre.leggauss(nodes)
    d = np.arange(1, count)[:, None]
    z = (d + 0.5 * t[None, :]) * h
    w[1:] = 0.5 * h * (_boost_kernel(z, v, s) @ wt)
    return w


def j_s_quadrature(Q, v0, s: float | None = None, refine: int = 1, allow_large: bool = False) -> float:
    """-C(1,s) int int Q(x)(Q(x) - Q(x-z))(1 - cos(z v0))/|z|^(1+2s) dx dz by direct summation.

    Q is extended by zero outside the box.  The z-integral is a product rule:
    the kernel is integrated exactly over each cell, Q is sampled at cell
    centres (its trigonometric interpolant on a grid ``refine`` times finer).
    The part of the z-line where x - z leaves the box only sees Q(x)^2, and is
    the full-line kernel integral minus the in-box cells.  Cost is O(n^2).
    """
    q, s, _ = _unpack(Q, s)
    g = q.grid
    if g.dim != 1:
        raise UnsupportedError("direct quadrature of J_s is implemented for dim = 1 only")
    if g.n > 512 and not allow_large:
        raise PreconditionError(f"n = {g.n} > 512; pass allow_large=True to override")
    _check_order(s, allow_one=False)
    v = float(np.atleast_1d(v0)[0])
    if v == 0.0:
        return 0.0
    if refine < 1:
        raise DomainError("refine must be a positive integer")
    if refine > 1:
        fine = SpectralGrid(1, g.n * refine, g.half_length)
        q = resample(q, fine)
        g = fine
    vals = np.real(q.values)
    n, h = g.n, g.spacing
    C = normalization_constant(1, s)
    W = _cell_weights(n, h, v, s)
    full_line = abs(v) ** (2.0 * s) / C
    conv = linalg.toeplitz(W) @ vals
    inner = vals * full_line - conv
    return float(-C * h * np.sum(vals * inner))


# ---------------------------------------------------------------------------
# energy bookkeeping along a trajectory


def m_term(u: Field, psi: Field, eps: float, s: float, v_t, mass: float) -> float:
    """||(-Delta)^(s/2) Psi||^2 - eps^(2s-N) ||(-Delta)^(s/2) u||^2 - m |v_t|^(2s)."""
    n = u.grid.dim
    speed = float(np.linalg.norm(np.atleast_1d(v_t)))
    return seminorm_sq(psi, s) - eps ** (2.0 * s - n) * seminorm_sq(u, s) - mass * speed ** (2.0 * s)


@dataclass(frozen=True)
class EnergyLedger:
    t: float
    E_eps: float
    mass: float
    H_t: float
    J_s: float
    M_t: float
    E1: float
    E2: float
    E_total: float
    psi_gap: float

    @staticmethod
    def header() -> list[str]:
        return ["t", "E_eps", "mass", "H_t", "J_s", "M_t", "E1", "E2", "E_total", "psi_gap"]

    def row(self) -> list[float]:
        return [getattr(self, k) for k in self.header()]


def _snapshots(record: EvolutionRecord, times=None):
    if not record.snapshots:
        raise DomainError("the evolution record holds no snapshots")
    pairs = list(zip(record.snapshot_times, record.snapshots))
    if times is None:
        return pairs
    return [(t, record.snapshot_at(t)) for t in times]


def ledger_entry(u: Field, t: float, traj: NewtonTrajectory, Q: GroundStateResult,
                 params: SimParams, J: float | None = None) -> EnergyLedger:
    q, s, p = Q.Q, params.s, params.p
    eps, n = params.eps, params.dim
    m = l2_norm_sq(q)
    x, v = traj.interpolate(t)
    psi = galilean_frame(u, eps, x, v, q.grid)
    speed2s = float(np.dot(v, v)) ** s
    Vx = params.potential(x)
    V = params.potential.on_grid(u.grid)
    pot = float(np.sum(V * np.abs(u.values) ** 2)) * u.grid.cell_volume
    if J is None:
        J = j_s_spectral(q, params.v0, s)
    M = m_term(u, psi, eps, s, v, m)
    E1 = m * speed2s + 0.5 * (M + J)
    E2 = m * Vx - eps ** (-n) * pot
    return EnergyLedger(
        t=t,
        E_eps=semiclassical_energy(u, params, V),
        mass=eps ** (-n) * l2_norm_sq(u),
        H_t=0.5 * m * speed2s + m * Vx,
        J_s=J,
        M_t=M,
        E1=E1,
        E2=E2,
        E_total=E1 + E2,
        psi_gap=energy(psi, s, p) - energy(q, s, p),
    )


def energy_ledger(record: EvolutionRecord, traj: NewtonTrajectory, Q: GroundStateResult,
                  params: SimParams | None = None, times=None) -> list[EnergyLedger]:
    """One ledger entry per stored snapshot; the trajectory is interpolated to the snapshot times."""
    params = params or record.params
    J = j_s_spectral(Q.Q, params.v0, params.s)
    return [ledger_entry(u, t, traj, Q, params, J) for t, u in _snapshots(record, times)]


# ---------------------------------------------------------------------------
# soliton tracking


def transported_distance(psi: Field, q: Field, fit: ModulationFit, s: float, v_t) -> float:
    """Lab-frame H^s_eps distance of u to its fitted orbit point, evaluated in the moving frame.

    With u(x) = e^{i<x,v>/eps} Psi((x - x_t)/eps) the eps-scaled norm of the
    lab-frame difference equals ||(-Delta)^(s/2)(e^{i<y,v>} f)||^2 + ||f||^2
    for f = Psi - e^{i theta} Q(. - x*).
    """
    f = psi - translate(q, fit.shift) * np.exp(1j * fit.phase)
    return boosted_seminorm_sq(f, s, v_t) + l2_norm_sq(f)


@dataclass(frozen=True)
class TrackingSample:
    t: float
    dist_sq: float
    bound_rhs: float
    energy_term: float
    shift: np.ndarray
    phase: float
    ok: bool
    note: str = ""


@dataclass(frozen=True)
class TrackingReport:
    samples: list
    C: float
    C2: float
    threshold: float | None
    threshold_time: float | None

    def sup_dist(self) -> float:
        vals = [r.dist_sq for r in self.samples if r.ok]
        return max(vals) if vals else math.nan

    def below_bound(self) -> bool:
        return all(r.dist_sq <= r.bound_rhs for r in self.samples if r.ok)

    def rows(self):
        for r in self.samples:
            yield [r.t, r.dist_sq, r.bound_rhs, r.energy_term, *r.shift, r.phase, int(r.ok)]


def norm_equivalence(grid: SpectralGrid, s: float, velocities) -> float:
    """sup over k and the given v of (|k + v|^(2s) + 1) / (1 + |k|^(2s)/2).

    Bounds the moving-frame H^s_eps norm by the H^s norm used in the fit.
    """
    worst = 1.0
    base = 1.0 + 0.5 * grid.k_abs ** (2.0 * s)
    for v in velocities:
        worst = max(worst, float(np.max((boosted_multiplier(grid, s, v) + 1.0) / base)))
    return worst


def tracking_constant(Q: GroundStateResult, velocities) -> dict:
    """C = norm_equivalence / c, with c the quadratic coercivity constant of the energy
    on the mass sphere transverse to the orbit.

    Near the orbit E(phi) - E(Q) ~ <L+ U, U> + <L- V, V>, with U, V constrained as
    in the fit; c is the smaller of the two generalized eigenvalues against the
    H^s norm.  Dense, so Q should live on a grid of at most 4096 points.
    """
    from .linearized import LinearizedPair, constraint_hs_q, constraint_v0, hs_coercivity

    pair = LinearizedPair.from_ground_state(Q)
    lam_plus = hs_coercivity(pair, "plus", constraint_v0(pair)).value
    lam_minus = hs_coercivity(pair, "minus", constraint_hs_q(pair)).value
    kappa = norm_equivalence(Q.grid, Q.s, velocities)
    c = min(lam_plus, lam_minus)
    if not c > 0:
        raise NumericalError("energy Hessian is not coercive transverse to the orbit",
                             {"plus": lam_plus, "minus": lam_minus})
    return {"C": kappa / c, "kappa": kappa, "coercivity": c, "plus": lam_plus, "minus": lam_minus}


def tracking_report(record: EvolutionRecord, traj: NewtonTrajectory, Q: GroundStateResult,
                    params: SimParams | None = None, C: float = 1.0, C2: float | None = None,
                    threshold: float | None = None, times=None) -> TrackingReport:
    """Fitted orbit distance of u(t) against C * E(t) + C2 * eps^2.

    The difference between E(Psi) - E(Q) and the ledger energy E(t) is
    constant in time (both E_eps and the Newtonian invariant are conserved),
    so when C2 is None it is calibrated from that remainder at the first
    sample: C2 eps^2 = C |r(0)|.  ``threshold`` marks the first time the
    energy term exceeds it.
    """
    params = params or record.params
    q, s = Q.Q, params.s
    eps = params.eps
    J = j_s_spectral(q, params.v0, s)
    samples = []
    remainder = None
    for t, u in _snapshots(record, times):
        entry = ledger_entry(u, t, traj, Q, params, J)
        if remainder is None:
            remainder = entry.psi_gap - entry.E_total
        x, v = traj.interpolate(t)
        try:
            psi = galilean_frame(u, eps, x, v, q.grid)
            fit = fit_orbit(psi, Q)
            d2 = transported_distance(psi, q, fit, s, v)
            samples.append((t, d2, entry.E_total, fit.shift, fit.phase, True, ""))
        except (NumericalError, PreconditionError) as exc:
            samples.append((t, math.nan, entry.E_total, np.full(q.grid.dim, math.nan),
                            math.nan, False, str(exc)))
    if C2 is None:
        C2 = C * abs(remainder) / eps**2
    out = [TrackingSample(t, d2, C * e + C2 * eps**2, e, x, th, ok, note)
           for t, d2, e, x, th, ok, note in samples]
    crossing = None
    if threshold is not None:
        for r in out:
            if r.energy_term > threshold:
                crossing = r.t
                break
    return TrackingReport(out, C, C2, threshold, crossing)


# ---------------------------------------------------------------------------
# comparison of the fractional and local dynamics


@dataclass(frozen=True)
class DynTerms:
    t: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    A4: np.ndarray

    def rows(self):
        for i in range(self.t.size):
            yield [self.t[i], self.A1[i], self.A2[i], self.A3[i], self.A4[i]]

    @staticmethod
    def header() -> list[str]:
        return ["t", "A1", "A2p", "A3", "A4"]


def _ref_norm_sq(f: Field, s: float, velocity) -> float:
    """Lab H^s_eps norm of e^{i<x,v>/eps} f((x - c)/eps), evaluated in y = (x - c)/eps."""
    return boosted_seminorm_sq(f, s, velocity) + l2_norm_sq(f)


def _plane_wave(grid: SpectralGrid, k) -> np.ndarray:
    return np.exp(1j * sum(c * kj for c, kj in zip(grid.coords, np.atleast_1d(k))))


def soliton_mismatch(Q1: Field, s: float, eps: float, x_s, v_s, x_1, v_1) -> float:
    """|| Q1((x-x_s)/eps) e^{i<v_s,x>/eps} - Q1((x-x_1)/eps) e^{i<v_1,x>/eps} ||^2 in H^s_eps.

    In y = (x - x_s)/eps the difference is e^{i<v_s, y>} e^{i<v_s,x_s>/eps} g(y) with
    g = Q1 - e^{i<v_1-v_s, x_s>/eps} e^{i<v_1-v_s, y>} Q1(y + (x_s - x_1)/eps).
    """
    x_s, v_s, x_1, v_1 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (x_s, v_s, x_1, v_1))
    dv = v_1 - v_s
    shifted = translate(Q1, -(x_s - x_1) / eps)
    phase = np.exp(1j * float(np.dot(dv, x_s)) / eps) * _plane_wave(Q1.grid, dv)
    g = Q1 - Field(Q1.grid, shifted.values * phase)
    return _ref_norm_sq(g, s, v_s)


def profile_mismatch(Qs: Field, Q1: Field, s: float) -> float:
    """||Q_s - Q_1||^2 in the unscaled H^s_eps norm (eps = 1), i.e. seminorm^2 + L^2 norm^2."""
    check_same_grid(Qs, Q1)
    d = Qs - Q1
    return seminorm_sq(d, s) + l2_norm_sq(d)


def _optimal_phase_distance(psi: Field, q: Field, s: float, v) -> float:
    mult = 1.0 + boosted_multiplier(q.grid, s, v)
    c = weighted_inner(psi, q, mult)
    theta = np.angle(c) if abs(c) > 0 else 0.0
    return _ref_norm_sq(psi - q * np.exp(1j * theta), s, v)


def thm_dyn_terms(record_s: EvolutionRecord | None, record_1: EvolutionRecord | None,
                  traj_s: NewtonTrajectory, traj_1: NewtonTrajectory,
                  Q_s: GroundStateResult | Field, Q_1: GroundStateResult | Field,
                  params: SimParams | None = None, eps: float | None = None,
                  s: float | None = None, times=None) -> DynTerms:
    """The four comparison terms between an order-s run and the local (s = 1) run.

    A1 = ||u_s - u_1||^2 (lab grid); A2' = eps^(-2(1-s)) times the measured
    local tracking error with its optimal phase; A3 and A4 compare the two
    modulated profiles and are evaluated in the moving frame of the order-s
    trajectory, where A4 reduces to ||Q_s - Q_1||^2.  Without records only
    A3 and A4 are computed (A1, A2' are NaN) at the given ``times``.
    """
    qs = Q_s.Q if isinstance(Q_s, GroundStateResult) else Q_s
    q1 = Q_1.Q if isinstance(Q_1, GroundStateResult) else Q_1
    check_same_grid(qs, q1)
    if params is not None:
        eps, s = params.eps, params.s
    if eps is None or s is None:
        raise DomainError("eps and s are required (directly or through params)")
    have_fields = record_s is not None and record_1 is not None
    if have_fields:
        if record_s.params.grid != record_1.params.grid:
            raise GridMismatchError("the two runs live on different grids")
        ts = np.asarray(record_s.snapshot_times)
        t1 = np.asarray(record_1.snapshot_times)
        if ts.shape != t1.shape or np.max(np.abs(ts - t1), initial=0.0) > 1e-9:
            raise GridMismatchError("the two runs do not share their snapshot cadence")
        times = ts if times is None else np.asarray(times)
    elif times is None:
        raise DomainError("times are required when no records are given")
    times = np.asarray(times, dtype=float)
    a4 = profile_mismatch(qs, q1, s)
    A1, A2, A3, A4 = [], [], [], []
    for t in times:
        xs, vs = traj_s.interpolate(t)
        x1, v1 = traj_1.interpolate(t)
        A3.append(soliton_mismatch(q1, s, eps, xs, vs, x1, v1))
        A4.append(a4)
        if have_fields:
            us = record_s.snapshot_at(t)
            u1 = record_1.snapshot_at(t)
            A1.append(hs_eps_norm_sq(us - u1, s, eps))
            psi1 = galilean_frame(u1, eps, x1, v1, q1.grid)
            A2.append(eps ** (-2.0 * (1.0 - s)) * _optimal_phase_distance(psi1, q1, 1.0, v1))
        else:
            A1.append(math.nan)
            A2.append(math.nan)
    return DynTerms(times, np.array(A1), np.array(A2), np.array(A3), np.array(A4))
