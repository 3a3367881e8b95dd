"""The fractional Newtonian flow s |x'|^(2s-2) x'' = -grad V(x) and its invariant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NonLipschitzError


@dataclass(frozen=True)
class Potential:
    """Potential V with its gradient.

    ``value(x)`` and ``grad(x)`` take coordinates stacked along the first
    axis, so the same callables serve single points (shape (N,)) and grids
    (shape (N, n, ...)).
    """

    name: str
    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    coeffs: tuple = ()

    def __call__(self, x) -> float:
        return float(self.value(np.asarray(x, dtype=float)))

    def on_grid(self, grid) -> np.ndarray:
        if grid.dim != self.dim:
            raise DomainError(f"potential is {self.dim}-dimensional, grid is {grid.dim}-dimensional")
        return np.asarray(self.value(np.stack(grid.coords)), dtype=float)

    def describe(self) -> str:
        if self.coeffs:
            return f"{self.name}:{','.join(repr(c) for c in self.coeffs)}"
        return self.name


def harmonic2d() -> Potential:
    """V(x1, x2) = x1^2/2 + 2 x2^2."""
    w = np.array([1.0, 4.0])

    def value(x):
        return 0.5 * x[0] ** 2 + 2.0 * x[1] ** 2

    def grad(x):
        return w.reshape((2,) + (1,) * (np.ndim(x) - 1)) * x

    return Potential("harmonic2d", 2, value, grad)


def quadratic(dim: int, omega: float = 1.0) -> Potential:
    """Isotropic V(x) = omega^2 |x|^2 / 2."""
    w2 = omega * omega

    def value(x):
        return 0.5 * w2 * np.sum(np.asarray(x) ** 2, axis=0)

    def grad(x):
        return w2 * np.asarray(x)

    coeffs = () if omega == 1.0 else (omega,)
    return Potential("quadratic", dim, value, grad, coeffs)


def zero(dim: int) -> Potential:
    def value(x):
        return np.zeros(np.shape(x)[1:])

    def grad(x):
        return np.zeros(np.shape(x))

    return Potential("zero", dim, value, grad)


def polynomial(dim: int, coeffs) -> Potential:
    """Separable V(x) = sum_j sum_k c_k x_j^k."""
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise DomainError("polynomial coefficients must be a non-empty list")
    dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)

    def value(x):
        return np.sum(np.polynomial.polynomial.polyval(np.asarray(x), c), axis=0)

    def grad(x):
        return np.polynomial.polynomial.polyval(np.asarray(x), dc)

    return Potential("poly", dim, value, grad, tuple(float(v) for v in c))


def parse_potential(spec: str, dim: int) -> Potential:
    """``harmonic2d``, ``quadratic[:omega]``, ``zero`` or ``poly:c0,c1,...``."""
    name, _, arg = spec.partition(":")
    if name == "harmonic2d":
        if dim != 2:
            raise DomainError("harmonic2d is two-dimensional")
        return harmonic2d()
    if name == "quadratic":
        return quadratic(dim, float(arg) if arg else 1.0)
    if name == "zero":
        return zero(dim)
    if name == "poly":
        try:
            coeffs = [float(v) for v in arg.split(",") if v.strip()]
        except ValueError as exc:
            raise DomainError(f"bad polynomial coefficients {arg!r}") from exc
        return polynomial(dim, coeffs)
    raise DomainError(f"unknown potential {spec!r}")


def gradient_consistency(potential: Potential, points, step: float = 1e-5) -> float:
    """Max deviation of grad V from central differences of V at the given points."""
    worst = 0.0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        g = np.asarray(potential.grad(x), dtype=float)
        for j in range(potential.dim):
            e = np.zeros_like(x)
            e[j] = step
            fd = (potential(x + e) - potential(x - e)) / (2.0 * step)
            worst = max(worst, abs(fd - g[j]))
    return worst


# ---------------------------------------------------------------------------
# flow


@dataclass(frozen=True)
class NewtonState:
    t: float
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        xi = np.array(self.xi, dtype=float).ravel()
        if x.shape != xi.shape:
            raise DomainError("position and velocity must have the same dimension")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi)) and math.isfinite(self.t)):
            raise DomainError("state has non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "t", float(self.t))


def _check_order(s: float) -> None:
    if not 0.0 < s <= 1.0:
        raise DomainError(f"order s must lie in (0, 1], got {s}")


def speed_factor(xi: np.ndarray, s: float, reg_floor: float = 0.0) -> float:
    """(1/s) (|xi|^2)^(1-s), optionally with |xi|^2 floored at reg_floor."""
    q = float(np.dot(xi, xi))
    if reg_floor > 0.0:
        q = max(q, reg_floor)
    return q ** (1.0 - s) / s


def rhs(state: NewtonState, s: float, potential: Potential, reg_floor: float = 0.0):
    """(dx, dxi) = (xi, -(1/s) (|xi|^2)^(1-s) grad V(x)).

    At xi = 0 with s < 1 the factor vanishes and dxi is exactly zero.
    """
    _check_order(s)
    return _rhs(state.x, state.xi, s, potential, reg_floor)


def _rhs(x, xi, s, potential, reg_floor):
    factor = speed_factor(xi, s, reg_floor)
    # + 0.0 turns a signed zero into +0.0
    dxi = -factor * np.asarray(potential.grad(x), dtype=float) + 0.0
    return xi.copy(), dxi


def motion_energy(state: NewtonState, s: float, potential: Potential, mass_scale: float = 1.0) -> float:
    """mass_scale * (|xi|^(2s) / 2 + V(x))."""
    return mass_scale * (0.5 * float(np.dot(state.xi, state.xi)) ** s + potential(state.x))


@dataclass(frozen=True)
class NewtonTrajectory:
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    H: np.ndarray
    s: float
    potential: Potential
    method: str
    reg_floor: float = 0.0
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    def state(self, i: int) -> NewtonState:
        return NewtonState(self.t[i], self.x[i], self.xi[i])

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def energy_drift(self) -> float:
        """max |H(t) - H(0)| / |H(0)|."""
        h0 = self.H[0]
        scale = abs(h0) if h0 != 0 else 1.0
        return float(np.max(np.abs(self.H - h0)) / scale)

    def interpolate(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(x, xi) at time t by cubic Hermite interpolation between samples,
        using the exact vector field at the samples as slopes."""
        if not self.t[0] - 1e-12 <= t <= self.t[-1] + 1e-12:
            raise DomainError(f"t = {t} outside the trajectory range")
        i = int(np.clip(np.searchsorted(self.t, t) - 1, 0, self.t.size - 2))
        t0, t1 = self.t[i], self.t[i + 1]
        y0 = np.concatenate([self.x[i], self.xi[i]])
        y1 = np.concatenate([self.x[i + 1], self.xi[i + 1]])
        f0 = np.concatenate(_rhs(self.x[i], self.xi[i], self.s, self.potential, self.reg_floor))
        f1 = np.concatenate(_rhs(self.x[i + 1], self.xi[i + 1], self.s, self.potential, self.reg_floor))
        y = _hermite(t0, t1, y0, y1, f0, f1, t)
        n = self.dim
        return y[:n], y[n:]

    def rows(self):
        for i in range(self.t.size):
            yield [self.t[i], *self.x[i], *self.xi[i], self.H[i]]

    def header(self) -> list[str]:
        n = self.dim
        return ["t"] + [f"x{j + 1}" for j in range(n)] + [f"xi{j + 1}" for j in range(n)] + ["H"]


def _hermite(t0, t1, y0, y1, f0, f1, t):
    h = t1 - t0
    th = (t - t0) / h
    h00 = (1 + 2 * th) * (1 - th) ** 2
    h10 = th * (1 - th) ** 2
    h01 = th**2 * (3 - 2 * th)
    h11 = th**2 * (th - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _field(s, potential, reg_floor, n):
    def f(y):
        dx, dxi = _rhs(y[:n], y[n:], s, potential, reg_floor)
        return np.concatenate([dx, dxi])
    return f


def _rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _dp_step(f, y, h, k0):
    ks = [k0]
    for i in range(1, 7):
        yi = y + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(f(yi))
    ks = np.array(ks)
    y5 = y + h * (_B5 @ ks)
    err = h * ((_B5 - _B4) @ ks)
    return y5, err, ks[-1]


def integrate(
    state0: NewtonState,
    s: float,
    potential: Potential,
    method: str = "rk4",
    T: float = 10.0,
    step_or_tol: float = 1e-3,
    reg_floor: float = 0.0,
    sample_dt: float | None = None,
) -> NewtonTrajectory:
    """Integrate the flow on [t0, t0 + T].

    ``rk4`` uses the fixed step ``step_or_tol``; ``rk45`` is Dormand-Prince
    with mixed absolute/relative local error tolerance ``step_or_tol`` and
    cubic Hermite dense output.  Samples are taken every ``sample_dt``
    (default T/1000, rounded to whole steps for rk4).
    """
    _check_order(s)
    if not T > 0:
        raise DomainError("T must be positive")
    if reg_floor < 0:
        raise DomainError("reg_floor must be non-negative")
    if potential.dim != state0.x.size:
        raise DomainError("potential and state dimensions differ")
    n = state0.x.size
    f = _field(s, potential, reg_floor, n)
    y = np.concatenate([state0.x, state0.xi])
    t0 = state0.t
    sample_dt = T / 1000.0 if sample_dt is None else sample_dt
    times, ys = [t0], [y.copy()]
    stats = {"steps": 0, "rejected": 0, "rhs_evals": 0}

    if method == "rk4":
        dt = step_or_tol
        if not dt > 0:
            raise DomainError("step must be positive")
        nsteps = int(round(T / dt))
        if abs(nsteps * dt - T) > 1e-9 * T:
            raise DomainError("T must be a whole number of steps")
        every = max(1, int(round(sample_dt / dt)))
        for i in range(1, nsteps + 1):
            y = _rk4_step(f, y, dt)
            if i % every == 0 or i == nsteps:
                times.append(t0 + i * dt)
                ys.append(y.copy())
        stats["steps"] = nsteps
        stats["rhs_evals"] = 4 * nsteps
    elif method == "rk45":
        tol = step_or_tol
        if not tol > 0:
            raise DomainError("tolerance must be positive")
        t_end = t0 + T
        t = t0
        k0 = f(y)
        h = min(T, 1e-2)
        next_out = t0 + sample_dt
        while t < t_end:
            h = min(h, t_end - t)
            if h < 1e-14 * max(1.0, abs(t)):
                speed = float(np.linalg.norm(y[n:]))
                raise NonLipschitzError(
                    "step size underflow: the velocity field is not Lipschitz near xi = 0 "
                    "for s > 1/2, so solutions through this state need not be unique",
                    {"t": t, "h": h, "speed": speed, "s": s},
                )
            y_new, err, k_new = _dp_step(f, y, h, k0)
            scale = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
            e = float(np.max(np.abs(err) / scale))
            stats["rhs_evals"] += 6
            if not np.isfinite(e):
                h *= 0.2
                stats["rejected"] += 1
                continue
            if e <= 1.0:
                t_new = t + h
                while next_out <= t_new + 1e-12 * max(1.0, abs(t_new)) and next_out <= t_end + 1e-12:
                    tt = min(next_out, t_new)
                    times.append(tt)
                    ys.append(_hermite(t, t_new, y, y_new, k0, k_new, tt))
                    next_out = t0 + (len(times)) * sample_dt
                t, y, k0 = t_new, y_new, k_new
                stats["steps"] += 1
                if times[-1] < t and t >= t_end:
                    times.append(t)
                    ys.append(y.copy())
            else:
                stats["rejected"] += 1
            fac = 0.9 * (1.0 / max(e, 1e-10)) ** 0.2
            h *= min(5.0, max(0.2, fac))
    else:
        raise DomainError(f"unknown method {method!r}")

    arr = np.array(ys)
    x, xi = arr[:, :n], arr[:, n:]
    H = 0.5 * np.sum(xi**2, axis=1) ** s + np.array([potential(xx) for xx in x])
    return NewtonTrajectory(np.array(times), x, xi, H, s, potential, method, reg_floor, stats)


def reverse(traj: NewtonTrajectory) -> NewtonState:
    """Final state with the velocity flipped, for time-reversal checks."""
    return NewtonState(0.0, traj.x[-1], -traj.xi[-1])
