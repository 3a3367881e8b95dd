"""Linearized operators L+ and L- at a ground state, constrained spectral probes
and the operator identities behind nondegeneracy."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft, linalg
from scipy.sparse.linalg import LinearOperator, lobpcg

from .errors import (
    ConvergenceError,
    DomainError,
    GridMismatchError,
    PreconditionError,
    UnsupportedError,
    WindowingWarning,
)
from .ground_state import GroundStateResult
from .spectral import (
    Field,
    SpectralGrid,
    check_same_grid,
    fractional_laplacian,
    gradient,
    hs_norm_sq,
    inner_hs,
    inner_l2,
    l2_norm_sq,
    x_dot_grad,
)


@dataclass(frozen=True)
class LinearizedPair:
    """L+ = 1/2 (-Delta)^s + 1 - (2p+1) Q^(2p) and L- = 1/2 (-Delta)^s + 1 - Q^(2p)."""

    Q: Field
    s: float
    p: float

    @classmethod
    def from_ground_state(cls, gs: GroundStateResult) -> "LinearizedPair":
        return cls(gs.Q, gs.s, gs.p)

    @property
    def grid(self) -> SpectralGrid:
        return self.Q.grid

    @cached_property
    def weight(self) -> np.ndarray:
        """Q^(2p) as a multiplication field."""
        return np.abs(self.Q.values) ** (2.0 * self.p)

    @cached_property
    def hessian_weight(self) -> Field:
        """H(Q) = (2p+1) Q^(2p)."""
        return Field(self.grid, (2.0 * self.p + 1.0) * self.weight)

    def _free(self, u: Field) -> Field:
        check_same_grid(u, self.Q)
        return 0.5 * fractional_laplacian(u, self.s) + u

    def apply_plus(self, u: Field) -> Field:
        return self._free(u) - u.with_values((2.0 * self.p + 1.0) * self.weight * u.values)

    def apply_minus(self, u: Field) -> Field:
        return self._free(u) - u.with_values(self.weight * u.values)

    def apply(self, which: str, u: Field) -> Field:
        if which == "plus":
            return self.apply_plus(u)
        if which == "minus":
            return self.apply_minus(u)
        raise DomainError(f"which must be 'plus' or 'minus', got {which!r}")

    def translation_modes(self) -> tuple[Field, ...]:
        return gradient(self.Q)


def apply_l_plus(pair: LinearizedPair, u: Field) -> Field:
    return pair.apply_plus(u)


def apply_l_minus(pair: LinearizedPair, u: Field) -> Field:
    return pair.apply_minus(u)


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class SubspaceConstraint:
    """Orthogonality constraints <v, c>_kind = 0, kind in {"l2", "hs"}.

    Every constraint is turned into an L^2 representer (for the H^s pairing
    this is (1 + 1/2 (-Delta)^s) c) so the projector is L^2-orthogonal.
    """

    fields: tuple[Field, ...]
    kinds: tuple[str, ...]
    s: float

    def __post_init__(self):
        if len(self.fields) != len(self.kinds):
            raise DomainError("one pairing kind per constraint field is required")
        for k in self.kinds:
            if k not in ("l2", "hs"):
                raise DomainError(f"unknown pairing kind {k!r}")
        for f in self.fields[1:]:
            check_same_grid(f, self.fields[0])

    @classmethod
    def none(cls, s: float) -> "SubspaceConstraint":
        return cls((), (), s)

    @cached_property
    def representers(self) -> np.ndarray:
        """Columns spanning the removed directions, orthonormal in the grid L^2 sense."""
        if not self.fields:
            return np.zeros((0, 0))
        cols = []
        for f, kind in zip(self.fields, self.kinds):
            rep = f if kind == "l2" else f + 0.5 * fractional_laplacian(f, self.s)
            cols.append(rep.values.real.ravel())
        q, r = np.linalg.qr(np.stack(cols, axis=1))
        keep = np.abs(np.diag(r)) > 1e-12 * np.abs(np.diag(r)).max()
        return q[:, keep]

    def project(self, v: Field) -> Field:
        if not self.fields:
            return v
        y = self.representers
        flat = v.values.ravel()
        proj = flat - y @ (y.T @ flat)
        return v.with_values(proj.reshape(v.grid.shape))

    def pairings(self, v: Field) -> list[float]:
        out = []
        for f, kind in zip(self.fields, self.kinds):
            out.append(inner_l2(v, f) if kind == "l2" else inner_hs(v, f, self.s))
        return out


def constraint_v(pair: LinearizedPair) -> SubspaceConstraint:
    """{<u, Q>_2 = 0}."""
    return SubspaceConstraint((pair.Q,), ("l2",), pair.s)


def constraint_v0(pair: LinearizedPair) -> SubspaceConstraint:
    """{<u, Q>_2 = 0 and <u, H(Q) d_j Q>_2 = 0 for every j}."""
    extra = tuple(pair.hessian_weight * d for d in pair.translation_modes())
    return SubspaceConstraint((pair.Q,) + extra, ("l2",) * (1 + len(extra)), pair.s)


def constraint_hs_q(pair: LinearizedPair) -> SubspaceConstraint:
    """{<v, Q>_{H^s} = 0}."""
    return SubspaceConstraint((pair.Q,), ("hs",), pair.s)


# ---------------------------------------------------------------------------
# eigen-probes


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: Field
    residual: float


def smallest_eigenpairs(
    pair: LinearizedPair,
    which: str,
    constraint: SubspaceConstraint | None = None,
    count: int = 1,
    seed: int = 0,
    tol: float = 1e-6,
    max_restarts: int = 5,
    maxiter: int = 3000,
    method: str = "auto",
) -> list[EigenPair]:
    """Smallest eigenpairs of L restricted to the constraint complement.

    ``method="krylov"`` runs preconditioned LOBPCG with the constraint
    representers as hard orthogonality constraints; a run whose residual
    exceeds ``tol`` is restarted from a fresh random block, and after
    ``max_restarts`` failures a ConvergenceError is raised.  ``"dense"``
    diagonalizes the compressed matrix Z^T L Z on an orthonormal basis Z of
    the complement; it is exact but O(size^3).  ``"auto"`` picks dense for
    grids of at most 4096 points, where the clustered continuum above 1 would
    otherwise stall the Krylov iteration.
    """
    if not 1 <= count <= 6:
        raise DomainError("count must lie in 1..6")
    constraint = constraint or SubspaceConstraint.none(pair.s)
    g = pair.grid
    size = g.n**g.dim
    weight = pair.weight * (2.0 * pair.p + 1.0 if which == "plus" else 1.0)
    if which not in ("plus", "minus"):
        raise DomainError(f"which must be 'plus' or 'minus', got {which!r}")
    free = 0.5 * g.k_abs ** (2.0 * pair.s) + 1.0

    def apply_block(x):
        x = np.asarray(x).reshape(g.shape + (-1,))
        axes = tuple(range(g.dim))
        spec = fft.fftn(x, axes=axes) * free[..., None]
        y = fft.ifftn(spec, axes=axes).real - weight[..., None] * x
        return y.reshape(size, -1)

    def precondition(x):
        x = np.asarray(x).reshape(g.shape + (-1,))
        axes = tuple(range(g.dim))
        y = fft.ifftn(fft.fftn(x, axes=axes) / free[..., None], axes=axes).real
        return y.reshape(size, -1)

    y = constraint.representers if constraint.fields else None
    if method == "auto":
        method = "dense" if size <= 4096 else "krylov"
    if method == "dense":
        return _dense_eigenpairs(apply_block, g, y, count, tol)
    if method != "krylov":
        raise DomainError(f"unknown eigen method {method!r}")

    op = LinearOperator((size, size), matvec=apply_block, matmat=apply_block, dtype=float)
    prec = LinearOperator((size, size), matvec=precondition, matmat=precondition, dtype=float)
    rng = np.random.default_rng(seed)
    block = max(count + 2, 3)
    history = []
    for attempt in range(max_restarts + 1):
        x0 = rng.standard_normal((size, block))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals, vecs = lobpcg(op, x0, M=prec, Y=y, tol=tol * 1e-3, maxiter=maxiter, largest=False)
        order = np.argsort(vals)[:count]
        pairs = []
        worst = 0.0
        for i in order:
            v = vecs[:, i]
            v = v / math.sqrt(float(v @ v) * g.cell_volume)
            r = apply_block(v[:, None])[:, 0] - vals[i] * v
            if y is not None:
                r = r - y @ (y.T @ r)
            res = math.sqrt(float(r @ r) * g.cell_volume)
            worst = max(worst, res)
            pairs.append(EigenPair(float(vals[i]), Field(g, v.reshape(g.shape)), res))
        history.append(worst)
        if worst <= tol:
            return pairs
    raise ConvergenceError(
        f"eigen-probe did not reach residual {tol} after {max_restarts} restarts",
        {"residuals": history, "which": which},
    )


def _dense_eigenpairs(apply_block, g: SpectralGrid, y, count: int, tol: float) -> list[EigenPair]:
    size = g.n**g.dim
    mat = apply_block(np.eye(size))
    mat = 0.5 * (mat + mat.T)
    if y is not None:
        # orthonormal basis of the complement of span(y)
        q, _ = np.linalg.qr(np.concatenate([y, np.eye(size)], axis=1))
        z = q[:, y.shape[1]:size]
        mat = z.T @ mat @ z
    else:
        z = None
    vals, vecs = np.linalg.eigh(mat)
    out = []
    for i in range(count):
        v = vecs[:, i] if z is None else z @ vecs[:, i]
        v = v / math.sqrt(float(v @ v) * g.cell_volume)
        r = apply_block(v[:, None])[:, 0] - vals[i] * v
        if y is not None:
            r = r - y @ (y.T @ r)
        res = math.sqrt(float(r @ r) * g.cell_volume)
        if res > tol:
            raise ConvergenceError("dense eigen-solve residual above tolerance", {"residual": res})
        out.append(EigenPair(float(vals[i]), Field(g, v.reshape(g.shape)), res))
    return out


def kernel_dimension(pair: LinearizedPair, threshold: float = 1e-5, seed: int = 0) -> dict:
    """Count near-zero eigenvalues of L+ after setting aside its negative direction."""
    count = min(6, pair.grid.dim + 2)
    pairs = smallest_eigenpairs(pair, "plus", None, count=count, seed=seed)
    values = [e.value for e in pairs]
    negatives = sum(v < -threshold for v in values)
    zeros = sum(abs(v) <= threshold for v in values)
    return {"values": values, "negative": negatives, "kernel": zeros}


def hs_coercivity(pair: LinearizedPair, which: str, constraint: SubspaceConstraint | None = None,
                  max_size: int = 4096) -> EigenPair:
    """min <L v, v> / ||v||_{H^s}^2 over the constraint complement.

    The smallest generalized eigenpair of (L, 1 + 1/2 (-Delta)^s) compressed
    to an orthonormal basis of the complement, solved densely.
    """
    if which not in ("plus", "minus"):
        raise DomainError(f"which must be 'plus' or 'minus', got {which!r}")
    g = pair.grid
    size = g.n**g.dim
    if size > max_size:
        raise PreconditionError(f"dense generalized eigen-solve needs size <= {max_size}, got {size}")
    constraint = constraint or SubspaceConstraint.none(pair.s)
    free = 0.5 * g.k_abs ** (2.0 * pair.s) + 1.0
    axes = tuple(range(g.dim))
    eye = np.eye(size).reshape(g.shape + (size,))
    gram = fft.ifftn(fft.fftn(eye, axes=axes) * free[..., None], axes=axes).real.reshape(size, size)
    gram = 0.5 * (gram + gram.T)
    weight = pair.weight * (2.0 * pair.p + 1.0 if which == "plus" else 1.0)
    op = gram - np.diag(weight.ravel())
    if constraint.fields:
        z = linalg.null_space(constraint.representers.T)
        a, b = z.T @ op @ z, z.T @ gram @ z
    else:
        z, a, b = None, op, gram
    vals, vecs = linalg.eigh(0.5 * (a + a.T), 0.5 * (b + b.T), subset_by_index=[0, 0])
    v = vecs[:, 0] if z is None else z @ vecs[:, 0]
    v = v / math.sqrt(float(v @ v) * g.cell_volume)
    r = op @ v - vals[0] * (gram @ v)
    if constraint.fields:
        y = constraint.representers
        r = r - y @ (y.T @ r)
    res = math.sqrt(float(r @ r) * g.cell_volume)
    return EigenPair(float(vals[0]), Field(g, v.reshape(g.shape)), res)


# ---------------------------------------------------------------------------
# coercivity


def random_smooth_field(grid: SpectralGrid, rng: np.random.Generator, bumps: int = 4,
                        spread: float = 4.0) -> Field:
    """Sum of Gaussian bumps with random centres, widths and signs near the origin."""
    spread = min(spread, 0.25 * grid.half_length)
    vals = np.zeros(grid.shape)
    for _ in range(bumps):
        centre = rng.uniform(-spread, spread, size=grid.dim)
        width = math.exp(rng.uniform(math.log(0.3), math.log(3.0)))
        r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, centre))
        vals += rng.standard_normal() * np.exp(-0.5 * r2 / width**2)
    return Field(grid, vals)


@dataclass(frozen=True)
class CoercivityProbe:
    min_ratio: float
    ratios: np.ndarray
    redraws: int

    def __float__(self):
        return self.min_ratio


def coercivity_probe(
    pair: LinearizedPair,
    constraint: SubspaceConstraint | None,
    samples: int,
    seed: int,
    which: str = "plus",
    base: Field | None = None,
    delta: float = 1.0,
) -> CoercivityProbe:
    """min over random v in the constraint subspace of <L v, v> / ||v||_{H^s}^2.

    With ``base`` given each draw is base + delta * (random field).  Draws
    that nearly vanish after projection are replaced.
    """
    constraint = constraint or SubspaceConstraint.none(pair.s)
    rng = np.random.default_rng(seed)
    ratios = []
    redraws = 0
    while len(ratios) < samples:
        w = random_smooth_field(pair.grid, rng)
        raw = w if base is None else base + delta * w
        v = constraint.project(raw)
        if l2_norm_sq(v) <= 1e-16 * max(l2_norm_sq(raw), 1e-300):
            redraws += 1
            if redraws > 10 * samples:
                raise ConvergenceError("coercivity sampler keeps producing degenerate draws")
            continue
        lv = pair.apply(which, v)
        ratios.append(inner_l2(lv, v) / hs_norm_sq(v, pair.s))
    arr = np.asarray(ratios)
    return CoercivityProbe(float(arr.min()), arr, redraws)


# ---------------------------------------------------------------------------
# identities involving x


def _padded(u: Field, pad: int) -> Field:
    if pad == 1:
        return u
    if u.grid.dim != 1:
        raise UnsupportedError("zero padding is implemented for dim = 1")
    g = u.grid
    big = SpectralGrid(1, g.n * pad, g.half_length * pad)
    vals = np.zeros(big.n, dtype=u.values.dtype)
    offset = (big.n - g.n) // 2
    vals[offset:offset + g.n] = u.values
    return Field(big, vals)


def _inner_mask(grid: SpectralGrid, radius: float) -> np.ndarray:
    return np.max(np.abs(np.stack(grid.coords)), axis=0) <= radius


def _tail_ratio(u: Field, radius: float) -> float:
    a = np.abs(u.values)
    outside = ~_inner_mask(u.grid, radius)
    return float(a[outside].max() / a.max()) if a.max() > 0 and outside.any() else 0.0


def default_pad(grid: SpectralGrid, s: float) -> int:
    if s == 1.0 or grid.dim != 1:
        return 1
    # the periodic-image error decays like pad^(-2s)
    return 256


def commutator_residual(u: Field, s: float, pad: int | None = None, window: float = 0.5,
                        tail_tol: float = 1e-12) -> float:
    """Relative residual of (-Delta)^s (x.grad u) = 2s (-Delta)^s u + x.grad (-Delta)^s u.

    Multiplication by x is only meaningful away from the periodic seam, so
    the residual is measured on |x| <= window * L.  For s < 1 the field is
    zero-padded first so the slowly decaying (-Delta)^s u does not pick up
    periodic images.
    """
    tail = _tail_ratio(u, window * u.grid.half_length)
    if tail > 1e-2:
        raise PreconditionError(
            f"field does not decay inside the box (tail/max = {tail:.3g})"
        )
    if tail > tail_tol:
        warnings.warn(
            f"tail beyond the inner window is {tail:.3g} of the peak", WindowingWarning, stacklevel=2
        )
    pad = default_pad(u.grid, s) if pad is None else pad
    w = _padded(u, pad)
    lhs = fractional_laplacian(x_dot_grad(w), s)
    lap = fractional_laplacian(w, s)
    rhs = 2.0 * s * lap + x_dot_grad(lap)
    mask = _inner_mask(w.grid, window * u.grid.half_length)
    diff = np.abs(lhs.values - rhs.values)[mask]
    scale = np.abs(lhs.values)[mask]
    return float(np.sqrt(np.sum(diff**2) / np.sum(scale**2)))


def dilation_identities(pair: LinearizedPair, window: float = 0.5) -> dict:
    """Relative residuals of the three L+ identities generated by dilation.

    dilation: L+(x Q') = s (-Delta)^s Q
    power:    L+((s/p) Q) = -2s Q^(2p+1)
    combined: L+(x Q' + (s/p) Q) = -2s Q
    Each residual is measured on |x| <= window * L.
    """
    g = pair.grid
    if g.dim != 1:
        raise UnsupportedError("the dilation identities are checked for dim = 1")
    s, p, Q = pair.s, pair.p, pair.Q
    xq = x_dot_grad(Q)
    qpow = Q.with_values(np.abs(Q.values) ** (2 * p) * Q.values)
    mask = _inner_mask(g, window * g.half_length)

    def rel(a: Field, b: Field) -> float:
        d = np.abs(a.values - b.values)[mask]
        sc = np.abs(b.values)[mask]
        return float(np.sqrt(np.sum(d**2) / np.sum(sc**2)))

    return {
        "dilation": rel(pair.apply_plus(xq), s * fractional_laplacian(Q, s)),
        "power": rel(pair.apply_plus((s / p) * Q), -2.0 * s * qpow),
        "combined": rel(pair.apply_plus(xq + (s / p) * Q), -2.0 * s * Q),
    }


def kernel_report(pair: LinearizedPair) -> dict:
    """||L- Q|| and ||L+ d_j Q|| / ||d_j Q||_{H^s}."""
    out = {"l_minus_q": math.sqrt(l2_norm_sq(pair.apply_minus(pair.Q)))}
    out["l_plus_dq"] = [
        math.sqrt(l2_norm_sq(pair.apply_plus(d)) / hs_norm_sq(d, pair.s))
        for d in pair.translation_modes()
    ]
    return out


# ---------------------------------------------------------------------------
# Hoelder continuity of z -> |z|^(p-1) z


def holder_ratio(z: np.ndarray, w: np.ndarray, p: float) -> np.ndarray:
    """| |z|^(p-1) z - |w|^(p-1) w | / |z - w|^p; w = 0 is handled."""
    def power(a):
        mag = np.abs(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(mag > 0, mag ** (p - 1.0) * a, 0.0)
    return np.abs(power(z) - power(w)) / np.abs(z - w) ** p


@dataclass(frozen=True)
class HolderCheck:
    sup_ratio: float
    half_sup: float
    growth: float
    samples: int


def holder_power_check(p: float, samples: int, seed: int) -> HolderCheck:
    """Sampled sup of the Hoelder ratio and its growth under sample doubling.

    Moduli are drawn log-uniformly over six decades and arguments uniformly;
    coincident pairs are resampled.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    rng = np.random.default_rng(seed)

    def draw(k):
        mag = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), size=k))
        return mag * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi, size=k))

    z, w = draw(samples), draw(samples)
    same = z == w
    while same.any():
        w[same] = draw(int(same.sum()))
        same = z == w
    ratios = holder_ratio(z, w, p)
    half = max(1, samples // 2)
    half_sup = float(ratios[:half].max())
    sup = float(ratios.max())
    return HolderCheck(sup, half_sup, sup / half_sup - 1.0, samples)
