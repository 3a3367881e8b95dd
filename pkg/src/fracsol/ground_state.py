"""Ground states of 1/2 (-Delta)^s Q + Q = Q^(2p+1) and the identities they satisfy."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft, optimize

from .errors import (
    AliasingWarning,
    ConvergenceError,
    DomainError,
    NumericalError,
    PositivityError,
    StagnationError,
    WindowingWarning,
)
from .spectral import (
    Field,
    SpectralGrid,
    fractional_laplacian,
    l2_norm_sq,
    lp_norm,
    resample,
    seminorm_sq,
    translate,
)

ADMISSIBILITY_MARGIN = 1e-9


def check_admissible(dim: int, s: float, p: float) -> None:
    """Enforce 0 < s <= 1 and 0 < p < 2s/N with a strict margin."""
    if not 0.0 < s <= 1.0:
        raise DomainError(f"order s must lie in (0, 1], got {s}")
    bound = 2.0 * s / dim
    if not 0.0 < p < bound - ADMISSIBILITY_MARGIN:
        raise DomainError(f"exponent p must satisfy 0 < p < 2s/N = {bound:.6g}, got {p}")


@dataclass(frozen=True)
class GroundStateProblem:
    grid: SpectralGrid
    s: float
    p: float

    def __post_init__(self):
        check_admissible(self.grid.dim, self.s, self.p)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def symbol(self) -> np.ndarray:
        """Fourier symbol of 1/2 (-Delta)^s + 1."""
        return 0.5 * self.grid.k_abs ** (2.0 * self.s) + 1.0


@dataclass(frozen=True)
class GroundStateResult:
    problem: GroundStateProblem
    Q: Field
    residual: float
    mass: float
    action: float
    energy: float
    identity_report: dict
    iterations: int = 0
    history: tuple = field(default=(), repr=False)

    @property
    def s(self) -> float:
        return self.problem.s

    @property
    def p(self) -> float:
        return self.problem.p

    @property
    def grid(self) -> SpectralGrid:
        return self.problem.grid


# ---------------------------------------------------------------------------
# functionals


def potential_term(u: Field, p: float) -> float:
    """int |u|^(2p+2)."""
    return lp_norm(u, 2.0 * p + 2.0) ** (2.0 * p + 2.0)


def energy(u: Field, s: float, p: float) -> float:
    """1/2 ||(-Delta)^(s/2) u||^2 - 1/(p+1) int |u|^(2p+2)."""
    return 0.5 * seminorm_sq(u, s) - potential_term(u, p) / (p + 1.0)


def action(u: Field, s: float, p: float) -> float:
    """I(u) = 1/2 E(u) + 1/2 ||u||^2."""
    return 0.5 * energy(u, s, p) + 0.5 * l2_norm_sq(u)


def nehari_functional(u: Field, s: float, p: float) -> float:
    """<I'(u), u> = ||u||^2 + 1/2 ||(-Delta)^(s/2)u||^2 - int |u|^(2p+2)."""
    return l2_norm_sq(u) + 0.5 * seminorm_sq(u, s) - potential_term(u, p)


def energy_gradient(u: Field, s: float, p: float) -> Field:
    """L^2 gradient of the energy, (-Delta)^s u - 2 |u|^(2p) u."""
    return fractional_laplacian(u, s) - 2.0 * u.with_values(np.abs(u.values) ** (2 * p) * u.values)


def equation_residual(Q: Field, s: float, p: float) -> Field:
    """1/2 (-Delta)^s Q + Q - |Q|^(2p) Q."""
    return 0.5 * fractional_laplacian(Q, s) + Q - Q.with_values(np.abs(Q.values) ** (2 * p) * Q.values)


def _rel(diff: float, *scales: float) -> float:
    scale = max(abs(x) for x in scales)
    return abs(diff) / scale if scale > 0 else abs(diff)


def pohozaev_residual(Q: Field, s: float, p: float) -> float:
    """Relative residual of (N-2s)/4 A + N/2 B = N/(2p+2) P."""
    n = Q.grid.dim
    t1 = (n - 2.0 * s) / 4.0 * seminorm_sq(Q, s)
    t2 = 0.5 * n * l2_norm_sq(Q)
    t3 = n / (2.0 * p + 2.0) * potential_term(Q, p)
    return _rel(t1 + t2 - t3, t1, t2, t3)


def nehari_residual(Q: Field, s: float, p: float) -> float:
    a, b, c = 0.5 * seminorm_sq(Q, s), l2_norm_sq(Q), potential_term(Q, p)
    return _rel(b + a - c, a, b, c)


def action_scaling_constant(dim: int, s: float, p: float, mass: float) -> float:
    """T(m)/m^(-2sp/(2s-Np)) prefactor, i.e. T evaluated at m = 1 for the given mass."""
    q = 2.0 * s - dim * p
    base = mass * s * p / (2.0 * (p + 1.0) * s - dim * p)
    return (dim / (2.0 * s) - 1.0 / p) * base ** (1.0 + 2.0 * s * p / q)


def energy_from_action(dim: int, s: float, p: float, mass: float, m: float) -> float:
    """The map m -> T(m) sending the ground action to half the ground energy."""
    q = 2.0 * s - dim * p
    return action_scaling_constant(dim, s, p, mass) * m ** (-2.0 * s * p / q)


def scaling_map_identities(Q: Field, s: float, p: float) -> dict:
    """Residuals of the action identities satisfied by a ground state.

    Keys ``kinetic``, ``mass``, ``potential`` are relative residuals of
    A = 2Nm/s, B = m(2s(p+1) - Np)/(sp), P = 2m(p+1)/p with m = I(Q).
    ``gamma0`` checks the mass relation, ``energy_map`` compares T(m) with E(Q)/2
    and ``nehari_from_triple`` is the Nehari residual assembled from the three.
    """
    n = Q.grid.dim
    A, B, P = seminorm_sq(Q, s), l2_norm_sq(Q), potential_term(Q, p)
    m = 0.5 * (0.5 * A - P / (p + 1.0)) + 0.5 * B
    dA = A - 2.0 * n * m / s
    dB = B - m * (2.0 * s * (p + 1.0) - n * p) / (s * p)
    dP = P - 2.0 * m * (p + 1.0) / p
    gamma0 = m * (2.0 * (p + 1.0) * s - n * p) / (s * p)
    half_energy = 0.5 * (0.5 * A - P / (p + 1.0))
    t_of_m = energy_from_action(n, s, p, B, m)
    return {
        "action": m,
        "kinetic": _rel(dA, A),
        "mass": _rel(dB, B),
        "potential": _rel(dP, P),
        "gamma0": _rel(B - gamma0, B),
        "energy_map": _rel(t_of_m - half_energy, half_energy),
        "nehari_from_triple": _rel(dB + 0.5 * dA - dP, 0.5 * A, B, P),
        "signed": {"kinetic": dA, "mass": dB, "potential": dP},
    }


def identity_report(Q: Field, s: float, p: float) -> dict:
    return {
        "pohozaev": pohozaev_residual(Q, s, p),
        "nehari": nehari_residual(Q, s, p),
        "scaling_map": scaling_map_identities(Q, s, p),
    }


def weinstein_functional(u: Field, s: float, p: float) -> float:
    """Weinstein quotient A^(Np/2s) B^(1+p-Np/2s) / P.

    Invariant under u -> mu u(lambda x) in every dimension; for N = 1 the
    exponent of B is (p/2s)(2s-1) + 1.
    """
    n = u.grid.dim
    A, B, P = seminorm_sq(u, s), l2_norm_sq(u), potential_term(u, p)
    if P == 0.0:
        raise DomainError("Weinstein functional undefined for a zero field")
    e = n * p / (2.0 * s)
    return A**e * B ** (1.0 + p - e) / P


def gagliardo_nirenberg_ratio(u: Field, s: float, p: float) -> float:
    """||u||_{2p+2} / (||u||_2^a ||(-Delta)^(s/2)u||_2^(1-a)), the interpolation ratio."""
    n = u.grid.dim
    alpha = (2.0 * s * (p + 1.0) - n * p) / (2.0 * s * (p + 1.0))
    num = lp_norm(u, 2.0 * p + 2.0)
    den = math.sqrt(l2_norm_sq(u)) ** alpha * math.sqrt(seminorm_sq(u, s)) ** (1.0 - alpha)
    if den == 0.0:
        raise DomainError("interpolation ratio undefined for a zero field")
    return num / den


# ---------------------------------------------------------------------------
# solvers


def gaussian_guess(grid: SpectralGrid) -> Field:
    return grid.from_function(lambda *xs: np.exp(-0.5 * sum(x**2 for x in xs)))


def recenter(Q: Field) -> Field:
    """Move the centre of mass of Q^2 to the origin.

    The integer part of the shift is a roll, the sub-grid remainder a Fourier
    phase.
    """
    g = Q.grid
    w = np.abs(Q.values) ** 2
    total = w.sum()
    if total == 0.0:
        return Q
    # x = -L is its own periodic mirror image, so it gets coordinate 0
    coords = [np.where(np.isclose(c, -g.half_length), 0.0, c) for c in g.coords]
    com = np.array([float((c * w).sum() / total) for c in coords])
    steps = np.rint(com / g.spacing).astype(int)
    rolled = Q.with_values(np.roll(Q.values, tuple(-steps), axis=tuple(range(g.dim))))
    rest = com - steps * g.spacing
    if np.all(np.abs(rest) < 1e-15 * g.half_length):
        return rolled
    return translate(rolled, -rest)


def petviashvili_step(q: np.ndarray, symbol: np.ndarray, p: float) -> np.ndarray:
    """One stabilized fixed-point update on raw grid values."""
    gamma = (2.0 * p + 1.0) / (2.0 * p)
    qh = fft.fftn(q)
    nl = np.abs(q) ** (2.0 * p) * q
    nlh = fft.fftn(nl)
    num = float(np.sum(symbol * np.abs(qh) ** 2))
    den = float(np.sum(np.conj(qh) * nlh).real)
    if not den > 0.0:
        raise NumericalError("Petviashvili stabilizing factor undefined", {"denominator": den})
    return fft.ifftn((num / den) ** gamma * nlh / symbol).real


def _finish(problem: GroundStateProblem, Q: Field, iterations: int, history) -> GroundStateResult:
    s, p = problem.s, problem.p
    res = equation_residual(Q, s, p)
    return GroundStateResult(
        problem=problem,
        Q=Q,
        residual=math.sqrt(l2_norm_sq(res)),
        mass=l2_norm_sq(Q),
        action=action(Q, s, p),
        energy=energy(Q, s, p),
        identity_report=identity_report(Q, s, p),
        iterations=iterations,
        history=tuple(history),
    )


def _check_positive(Q: Field, floor: float) -> None:
    qmin, qmax = float(Q.values.min()), float(Q.values.max())
    if qmin < -floor * qmax:
        raise PositivityError(
            "converged profile takes negative values",
            {"min": qmin, "max": qmax, "argmin": int(np.argmin(Q.values))},
        )


def solve_petviashvili(
    problem: GroundStateProblem,
    tol: float = 1e-11,
    max_iter: int = 2000,
    initial: Field | None = None,
    positivity_floor: float = 1e-12,
) -> GroundStateResult:
    """Ground state by Petviashvili iteration with a Gaussian start.

    Stops once the sup-norm change between iterates is at most ``tol``.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    g = problem.grid
    q = (initial if initial is not None else gaussian_guess(g)).values.real.copy()
    symbol = problem.symbol
    history = []
    for it in range(1, max_iter + 1):
        q_new = petviashvili_step(q, symbol, problem.p)
        diff = float(np.max(np.abs(q_new - q)))
        history.append(diff)
        q = q_new
        if not np.isfinite(diff):
            break
        if diff <= tol:
            Q = recenter(Field(g, q))
            _check_positive(Q, positivity_floor)
            return _finish(problem, Q, it, history)
    raise ConvergenceError(
        f"Petviashvili iteration did not reach tol={tol} in {max_iter} iterations",
        {"history": history, "last_change": history[-1] if history else None},
    )


def solve_constrained_flow(
    problem: GroundStateProblem,
    target_mass: float,
    tol: float = 1e-9,
    max_iter: int = 20000,
    initial: Field | None = None,
    step: float = 1.0,
    min_step: float = 1e-10,
    history: list | None = None,
) -> Field:
    """Minimize the energy on the sphere ||u||_2^2 = target_mass.

    Normalized gradient flow in an H^s-type preconditioned metric: a descent
    step along the projected Sobolev gradient, then L^2 renormalization.
    A step that raises the energy is retried with half the step size.
    Stops when ||E'(u) - lambda u||_2 <= tol, lambda the Lagrange multiplier.
    ``history`` (if given) receives the energy after each accepted step.
    """
    if not target_mass > 0:
        raise DomainError("target_mass must be positive")
    s, p = problem.s, problem.p
    g = problem.grid
    kin = g.k_abs ** (2.0 * s)
    u = (initial if initial is not None else gaussian_guess(g)).real
    u = u * math.sqrt(target_mass / l2_norm_sq(u))
    e_old = energy(u, s, p)
    if history is not None:
        history.append(e_old)
    tau = step
    for _ in range(max_iter):
        grad = energy_gradient(u, s, p)
        lam = float(np.sum(grad.values * u.values)) / float(np.sum(u.values**2))
        if math.sqrt(l2_norm_sq(grad - lam * u)) <= tol:
            return recenter(u)
        # metric shift tracks the Lagrange multiplier (-2 at the ground state)
        precond = 1.0 / (kin + max(-lam, 0.1))
        pg = fft.ifftn(precond * fft.fftn(grad.values)).real
        pu = fft.ifftn(precond * fft.fftn(u.values)).real
        beta = float(np.sum(pg * u.values)) / float(np.sum(pu * u.values))
        direction = pg - beta * pu
        while True:
            trial = u.values - tau * direction
            trial = trial * math.sqrt(target_mass / (float(np.sum(trial**2)) * g.cell_volume))
            cand = u.with_values(trial)
            e_new = energy(cand, s, p)
            slack = 64 * np.finfo(float).eps * (abs(e_old) + seminorm_sq(cand, s))
            if e_new <= e_old + slack:
                break
            tau *= 0.5
            if tau < min_step:
                raise StagnationError(
                    "energy increases for every admissible step size",
                    {"step": tau, "energy": e_old},
                )
        u, e_old = cand, e_new
        if history is not None:
            history.append(e_new)
        tau = min(step, 2.0 * tau)
    raise ConvergenceError(
        f"constrained flow did not reach tol={tol} in {max_iter} iterations",
        {"energy": e_old, "step": tau},
    )


def ground_state_scaling(dim: int, s: float, p: float, mass_ratio: float) -> tuple[float, float]:
    """(mu, lambda) with mu Q(lambda x) the constrained minimizer at mass_ratio * ||Q||^2."""
    lam = mass_ratio ** (1.0 / (2.0 * s / p - dim))
    return lam ** (s / p), lam


# ---------------------------------------------------------------------------
# scaling relations


def _spectral_tail_fraction(u: Field, cutoff: float) -> float:
    power = np.abs(fft.fftn(u.values)) ** 2
    total = power.sum()
    return float(power[u.grid.k_abs > cutoff].sum() / total) if total > 0 else 0.0


def _box_tail_fraction(u: Field, radius: float) -> float:
    w = np.abs(u.values) ** 2
    total = w.sum()
    outside = np.max(np.abs(np.stack(u.grid.coords)), axis=0) >= radius
    return float(w[outside].sum() / total) if total > 0 else 0.0


def rescale(u: Field, mu: float, lam: float, guard: float = 1e-24) -> Field:
    """mu u(lambda x) on the same grid by spectral interpolation.

    Warns when compression pushes content past the Nyquist band or when
    dilation pushes mass out of the box.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if lam > 1.0 and _spectral_tail_fraction(u, u.grid.k_max / lam) > guard:
        warnings.warn(
            f"rescaling by lambda={lam} aliases spectral content beyond the grid band",
            AliasingWarning,
            stacklevel=2,
        )
    if lam < 1.0 and _box_tail_fraction(u, lam * u.grid.half_length) > guard:
        warnings.warn(
            f"rescaling by lambda={lam} stretches the profile past the box",
            WindowingWarning,
            stacklevel=2,
        )
    if lam == 1.0:
        return mu * u
    return mu * resample(u, u.grid, scale=lam)


def scaling_check(u: Field, mu: float, lam: float, s: float, p: float = 1.0) -> dict:
    """Relative errors of the three norm scaling laws for mu u(lambda x)."""
    n = u.grid.dim
    v = rescale(u, mu, lam)
    q = 2.0 * p + 2.0
    pairs = {
        "l2": (l2_norm_sq(v), mu**2 * lam ** (-n) * l2_norm_sq(u)),
        "lq": (potential_term(v, p), mu**q * lam ** (-n) * potential_term(u, p)),
        "seminorm": (seminorm_sq(v, s), mu**2 * lam ** (2 * s - n) * seminorm_sq(u, s)),
    }
    return {k: _rel(a - b, b) for k, (a, b) in pairs.items()}


# ---------------------------------------------------------------------------
# tail decay


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    constant: float
    residual: float
    rate: float
    rate_constant: float
    rate_residual: float
    window: tuple[float, float]
    samples: int

    @property
    def kind(self) -> str:
        return "polynomial" if self.residual <= self.rate_residual else "exponential"

    def __iter__(self):
        yield self.exponent
        yield self.constant


def decay_fit(Q: Field, s: float, periodic_images: bool = True, noise_factor: float = 1e4) -> DecayFit:
    """Fit the tail of Q on |x| in [L/4, 3L/4] to c (1+|x|)^(-a) and to c e^(-b|x|).

    Samples at or below the floating-point noise floor are dropped, shrinking
    the window.  With ``periodic_images`` the models are summed over the
    periodic copies of the box, which matter for algebraic tails since their
    relative weight does not shrink as L grows.
    """
    g = Q.grid
    L = g.half_length
    r = g.radius.ravel()
    q = np.abs(Q.values).ravel()
    floor = noise_factor * np.finfo(float).eps * q.max()
    mask = (r >= 0.25 * L) & (r <= 0.75 * L) & (q > floor)
    if g.dim == 2:
        # along the axis, where the radius is exact and images sit symmetric
        on_axis = np.abs(g.coords[1].ravel()) < 0.5 * g.spacing
        mask &= on_axis
    if mask.sum() < 4:
        raise NumericalError(
            "tail window is empty above the noise floor", {"floor": floor, "L": L}
        )
    rr, logq = r[mask], np.log(q[mask])
    images = np.arange(-64, 65) if periodic_images else np.array([0])

    def poly_model(theta):
        a, logc = theta
        acc = np.zeros_like(rr)
        for m in images:
            acc += (1.0 + np.abs(rr + 2.0 * L * m)) ** (-a)
        return logc + np.log(acc)

    def exp_model(theta):
        b, logc = theta
        acc = np.zeros_like(rr)
        for m in images[np.abs(images) <= 1]:
            acc += np.exp(-b * (np.abs(rr + 2.0 * L * m) - rr.min()))
        return logc + np.log(acc) - b * rr.min()

    a0, c0 = np.polyfit(np.log1p(rr), logq, 1)
    b0, e0 = np.polyfit(rr, logq, 1)
    poly = optimize.least_squares(lambda t: poly_model(t) - logq, [max(-a0, 0.1), c0])
    expo = optimize.least_squares(lambda t: exp_model(t) - logq, [max(-b0, 1e-3), e0])
    rms = lambda f: float(np.sqrt(np.mean(f**2)))
    return DecayFit(
        exponent=float(poly.x[0]),
        constant=float(math.exp(poly.x[1])),
        residual=rms(poly.fun),
        rate=float(expo.x[0]),
        rate_constant=float(math.exp(expo.x[1])),
        rate_residual=rms(expo.fun),
        window=(float(rr.min()), float(rr.max())),
        samples=int(mask.sum()),
    )


def default_box(dim: int, s: float, tail: float = 1e-4, cap: float = 400.0) -> float:
    """Half-length heuristic: exponential tails fit in L = 20; algebraic
    tails need L ~ tail^(-1/(N+2s))."""
    if s >= 1.0:
        return 20.0
    return float(min(cap, max(20.0, 4.0 * tail ** (-1.0 / (dim + 2.0 * s)))))


def ground_state(
    dim: int, s: float, p: float, n: int, half_length: float | None = None, tol: float = 1e-11,
    max_iter: int = 2000,
) -> GroundStateResult:
    """Convenience wrapper: build the grid and run the Petviashvili solver."""
    L = default_box(dim, s) if half_length is None else half_length
    return solve_petviashvili(GroundStateProblem(SpectralGrid(dim, n, L), s, p), tol, max_iter)


def ground_state_flow(
    dim: int, s: float, p: float, n: int, half_length: float | None = None, tol: float = 1e-9,
    max_iter: int = 20000, mass: float = 1.0,
) -> GroundStateResult:
    """Ground state through the constrained energy flow.

    A minimizer u at any mass solves 1/2 (-Delta)^s u + w u = u^(2p+1), with w
    read off the Lagrange multiplier, and Q(x) = w^(-1/2p) u(w^(-1/2s) x).  A
    first pass at ``mass`` fixes the mass of Q; the second pass runs at that
    mass (w = 1) from the rescaled first-pass profile, so no rescaling error
    from the box edge survives.
    """
    L = default_box(dim, s) if half_length is None else half_length
    problem = GroundStateProblem(SpectralGrid(dim, n, L), s, p)
    history: list = []

    def frequency(u: Field) -> float:
        grad = energy_gradient(u, s, p)
        w = -0.5 * float(np.sum(grad.values * u.values)) / float(np.sum(u.values**2))
        if not w > 0:
            raise ConvergenceError("flow ended at a non-positive frequency", {"w": w})
        return w

    u = solve_constrained_flow(problem, mass, tol, max_iter, history=history)
    w = frequency(u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        guess = recenter(rescale(u, w ** (-0.5 / p), w ** (-0.5 / s)))
    target = mass * w ** (0.5 * dim / s - 1.0 / p)
    u = solve_constrained_flow(problem, target, tol, max_iter, initial=guess, history=history)
    w = frequency(u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Q = rescale(u, w ** (-0.5 / p), w ** (-0.5 / s))
    return _finish(problem, Q, len(history), history)
