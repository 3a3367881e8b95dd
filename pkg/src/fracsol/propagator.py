"""Split-step propagation of the semiclassical fractional NLS

    i eps u_t = (eps^(2s)/2) (-Delta)^s u + V u - |u|^(2p) u

together with its conserved quantities and the Galilean reference frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft

from .errors import BoundaryError, DomainError, PreconditionError
from .ground_state import GroundStateResult, check_admissible, potential_term
from .newton import Potential
from .spectral import Field, SpectralGrid, l2_norm_sq, resample, seminorm_sq

MIN_POINTS_PER_WIDTH = 8.0
BOUNDARY_RING = 0.02
BOUNDARY_LEVEL = 1e-6


@dataclass(frozen=True)
class SimParams:
    eps: float
    s: float
    p: float
    grid: SpectralGrid
    potential: Potential
    dt: float
    T: float
    x0: tuple
    v0: tuple
    allow_zero_velocity: bool = False

    def __post_init__(self):
        check_admissible(self.grid.dim, self.s, self.p)
        if not 0.0 < self.eps <= 1.0:
            raise DomainError(f"eps must lie in (0, 1], got {self.eps}")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if not self.T > 0:
            raise DomainError("T must be positive")
        x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
        v0 = tuple(float(v) for v in np.atleast_1d(self.v0))
        if len(x0) != self.grid.dim or len(v0) != self.grid.dim:
            raise DomainError("x0 and v0 must have one entry per dimension")
        if not self.allow_zero_velocity and not any(v0):
            raise DomainError("v0 must be nonzero")
        if self.potential.dim != self.grid.dim:
            raise DomainError("potential and grid dimensions differ")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "v0", v0)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def describe(self) -> dict:
        return {
            "eps": self.eps, "s": self.s, "p": self.p, "dim": self.dim, "n": self.grid.n,
            "box": self.grid.half_length, "potential": self.potential.describe(),
            "dt": self.dt, "T": self.T, "x0": list(self.x0), "v0": list(self.v0),
        }


def default_dt(eps: float, s: float, h: float) -> float:
    return min(1e-3, eps * h ** (2.0 * s) / 4.0)


def suggested_n(eps: float, half_length: float) -> int:
    need = MIN_POINTS_PER_WIDTH * 2.0 * half_length / eps
    return 1 << max(2, math.ceil(math.log2(need)))


def check_resolution(grid: SpectralGrid, eps: float, velocity=None) -> None:
    """eps / h >= 8 and the carrier wavenumber |v|/eps well inside the band."""
    if eps / grid.spacing < MIN_POINTS_PER_WIDTH:
        raise PreconditionError(
            f"eps/h = {eps / grid.spacing:.3g} < {MIN_POINTS_PER_WIDTH:g}: the rescaled profile is "
            f"under-resolved; use n >= {suggested_n(eps, grid.half_length)}"
        )
    if velocity is not None:
        k = float(np.linalg.norm(velocity)) / eps
        if k > 0.5 * grid.k_max:
            raise PreconditionError(
                f"carrier wavenumber |v|/eps = {k:.4g} exceeds half the grid band {grid.k_max:.4g}; "
                f"use n >= {suggested_n(eps, grid.half_length) * 2}"
            )


def initial_datum(Q: GroundStateResult | Field, params: SimParams) -> Field:
    """Q((x - x0)/eps) exp(i <x, v0>/eps) on the lab grid."""
    q = Q.Q if isinstance(Q, GroundStateResult) else Q
    g = params.grid
    check_resolution(g, params.eps, params.v0)
    x0 = np.asarray(params.x0)
    profile = resample(q, g, scale=1.0 / params.eps, shift=-x0 / params.eps)
    phase = sum(c * v for c, v in zip(g.coords, params.v0)) / params.eps
    return Field(g, profile.values * np.exp(1j * phase))


# ---------------------------------------------------------------------------
# splitting


class _Stepper:
    """Holds the phase factors of one Strang step for fixed parameters."""

    def __init__(self, params: SimParams):
        self.params = params
        g = params.grid
        kin = 0.5 * params.eps ** (2.0 * params.s - 1.0) * g.k_abs ** (2.0 * params.s)
        self.half = np.exp(-0.5j * params.dt * kin)
        self.full = self.half * self.half
        self.V = params.potential.on_grid(g)
        self.scale = params.dt / params.eps

    def nonlinear(self, u: np.ndarray) -> np.ndarray:
        # |u| is invariant under this phase, so the sub-flow is exact
        return u * np.exp(-1j * self.scale * (self.V - np.abs(u) ** (2.0 * self.params.p)))

    def kinetic(self, u: np.ndarray, factor: np.ndarray) -> np.ndarray:
        return fft.ifftn(factor * fft.fftn(u))

    def step(self, u: np.ndarray) -> np.ndarray:
        u = self.kinetic(u, self.half)
        u = self.nonlinear(u)
        return self.kinetic(u, self.half)


def step_strang(u: Field, params: SimParams) -> Field:
    """One symmetric step: half kinetic, full potential + nonlinear, half kinetic."""
    if u.grid != params.grid:
        raise DomainError("field and parameters live on different grids")
    return Field(u.grid, _Stepper(params).step(np.asarray(u.values, dtype=complex)))


# ---------------------------------------------------------------------------
# diagnostics


def semiclassical_energy(u: Field, params: SimParams, V: np.ndarray | None = None) -> float:
    """eps^(2s-N)/2 ||(-Delta)^(s/2)u||^2 + eps^-N int V|u|^2 - eps^-N/(p+1) int |u|^(2p+2)."""
    eps, s, p, n = params.eps, params.s, params.p, params.dim
    if V is None:
        V = params.potential.on_grid(u.grid)
    pot = float(np.sum(V * np.abs(u.values) ** 2)) * u.grid.cell_volume
    return (
        0.5 * eps ** (2 * s - n) * seminorm_sq(u, s)
        + eps ** (-n) * pot
        - eps ** (-n) / (p + 1.0) * potential_term(u, p)
    )


def boundary_ratio(u: Field) -> float:
    """max |u| on the outer ring of the box relative to max |u|."""
    g = u.grid
    a = np.abs(u.values)
    ring = np.max(np.abs(np.stack(g.coords)), axis=0) >= (1.0 - BOUNDARY_RING) * g.half_length
    peak = a.max()
    return float(a[ring].max() / peak) if peak > 0 else 0.0


@dataclass
class EvolutionRecord:
    params: SimParams
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    halfnorm: np.ndarray
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    guards: list = field(default_factory=list)
    status: str = "complete"

    def rows(self):
        for i in range(self.times.size):
            yield [self.times[i], self.mass[i], self.energy[i], self.halfnorm[i]]

    @staticmethod
    def header() -> list[str]:
        return ["t", "mass", "E_eps", "halfnorm"]

    def snapshot_at(self, t: float, tol: float = 1e-9) -> Field:
        for ts, f in zip(self.snapshot_times, self.snapshots):
            if abs(ts - t) <= tol:
                return f
        raise DomainError(f"no snapshot at t = {t}")


def evolve(
    params: SimParams,
    Q: GroundStateResult | Field | None = None,
    u0: Field | None = None,
    sample_every: int | None = None,
    snap_every: int | None = None,
    check_boundary: bool = True,
    snapshot_dir: Path | None = None,
) -> EvolutionRecord:
    """Run repeated Strang steps, recording diagnostics every ``sample_every`` steps.

    Consecutive kinetic half-steps are merged.  Snapshots are kept every
    ``snap_every`` steps (and written as field dumps under ``snapshot_dir``
    when given).  A BoundaryError is raised when the solution reaches the
    outer ring of the box, carrying the partial record.
    """
    from .io import save_field

    if u0 is None:
        if Q is None:
            raise DomainError("either Q or u0 is required")
        u0 = initial_datum(Q, params)
    steps = params.steps
    if abs(steps * params.dt - params.T) > 1e-9 * params.T:
        raise DomainError("T must be a whole number of time steps")
    sample_every = sample_every or max(1, steps // 100)
    stepper = _Stepper(params)
    g = params.grid
    V = stepper.V

    times, mass, energy, halfnorm = [], [], [], []
    record = EvolutionRecord(params, np.array([]), np.array([]), np.array([]), np.array([]))

    def observe(i, vals):
        f = Field(g, vals)
        t = i * params.dt
        times.append(t)
        mass.append(l2_norm_sq(f))
        energy.append(semiclassical_energy(f, params, V))
        halfnorm.append(math.sqrt(seminorm_sq(f, params.s)))
        if snap_every and i % snap_every == 0:
            record.snapshot_times.append(t)
            record.snapshots.append(f)
            if snapshot_dir is not None:
                save_field(f, Path(snapshot_dir) / f"snap_{i:08d}")
        if check_boundary:
            ratio = boundary_ratio(f)
            if ratio > BOUNDARY_LEVEL:
                record.guards.append(f"boundary ring reached at t={t:.6g} (ratio {ratio:.3g})")
                record.status = "aborted"
                _freeze(record, times, mass, energy, halfnorm)
                raise BoundaryError(
                    f"solution reaches the box boundary at t={t:.6g} (|u| ratio {ratio:.3g}); "
                    f"enlarge the box beyond L={g.half_length:g}",
                    {"t": t, "ratio": ratio, "record": record},
                )

    u = np.asarray(u0.values, dtype=complex)
    observe(0, u)
    spec = fft.fftn(u)
    pending = False  # a kinetic half step is owed to spec
    for i in range(1, steps + 1):
        spec = spec * (stepper.full if pending else stepper.half)
        u = stepper.nonlinear(fft.ifftn(spec))
        spec = fft.fftn(u)
        pending = True
        if i % sample_every == 0 or i == steps or (snap_every and i % snap_every == 0):
            spec = spec * stepper.half
            pending = False
            observe(i, fft.ifftn(spec))
    _freeze(record, times, mass, energy, halfnorm)
    return record


def _freeze(record, times, mass, energy, halfnorm):
    record.times = np.array(times)
    record.mass = np.array(mass)
    record.energy = np.array(energy)
    record.halfnorm = np.array(halfnorm)


def energy_drift(record: EvolutionRecord) -> float:
    e0 = record.energy[0]
    return float(np.max(np.abs(record.energy - e0)) / abs(e0))


def mass_drift(record: EvolutionRecord) -> float:
    return float(np.max(np.abs(record.mass - record.mass[0])) / record.mass[0])


def gradient_bound_check(record: EvolutionRecord, params: SimParams | None = None) -> float:
    """sup_t ||(-Delta)^(s/2) u(t)||_2 / eps^((N - 2s)/2)."""
    params = params or record.params
    return float(record.halfnorm.max() / params.eps ** ((params.dim - 2.0 * params.s) / 2.0))


def galilean_frame(u: Field, eps: float, x_t, v_t, reference: SpectralGrid) -> Field:
    """Psi(y) = exp(-i <eps y + x_t, v_t>/eps) u(eps y + x_t) on the reference grid."""
    check_resolution(u.grid, eps)
    x_t = np.broadcast_to(np.asarray(x_t, dtype=float), (u.grid.dim,))
    v_t = np.broadcast_to(np.asarray(v_t, dtype=float), (u.grid.dim,))
    w = resample(u, reference, scale=eps, shift=x_t)
    lab = [eps * c + xt for c, xt in zip(reference.coords, x_t)]
    phase = sum(c * v for c, v in zip(lab, v_t)) / eps
    return Field(reference, w.values * np.exp(-1j * phase))


def peak_position(u: Field) -> np.ndarray:
    """Location of max |u| refined by a parabolic fit through the neighbours."""
    g = u.grid
    a = np.abs(u.values)
    idx = np.unravel_index(int(np.argmax(a)), a.shape)
    pos = []
    for axis in range(g.dim):
        i = idx[axis]
        sl = list(idx)
        sl[axis] = (i - 1) % g.n
        am = a[tuple(sl)]
        sl[axis] = (i + 1) % g.n
        ap = a[tuple(sl)]
        denom = am - 2 * a[idx] + ap
        off = 0.5 * (am - ap) / denom if denom != 0 else 0.0
        pos.append(g.x[i] + off * g.spacing)
    return np.array(pos)


def lab_box(trajectory_x: np.ndarray, eps: float, profile_half_width: float) -> float:
    """Half-length keeping the trajectory at least L/4 inside and the profile support in the box."""
    reach = float(np.max(np.abs(trajectory_x)))
    return max(4.0 / 3.0 * reach, reach + eps * profile_half_width)

