import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsol.errors import DomainError, PreconditionError
from fracsol.ground_state import ground_state
from fracsol.linearized import (
    LinearizedPair,
    SubspaceConstraint,
    apply_l_minus,
    apply_l_plus,
    coercivity_probe,
    commutator_residual,
    constraint_hs_q,
    constraint_v,
    constraint_v0,
    holder_power_check,
    holder_ratio,
    hs_coercivity,
    dilation_identities,
    kernel_dimension,
    kernel_report,
    random_smooth_field,
    smallest_eigenpairs,
)
from fracsol.spectral import SpectralGrid, gradient, hs_norm_sq, inner_hs, inner_l2, l2_norm_sq

# smallest generalized eigenvalues against the H^s Gram matrix, s = 1, n = 1024, L = 20
COERCIVITY_PLUS_S1 = 0.32491173
COERCIVITY_MINUS = 2.0 / 3.0


@pytest.fixture(scope="module")
def pair1(gs1):
    return LinearizedPair.from_ground_state(gs1)


@pytest.fixture(scope="module")
def pair075(gs075):
    return LinearizedPair.from_ground_state(gs075)


@pytest.fixture(scope="module")
def pair075_coarse(gs075_coarse):
    return LinearizedPair.from_ground_state(gs075_coarse)


class TestOperators:
    def test_l_minus_annihilates_q(self, gs1, pair1):
        r = apply_l_minus(pair1, gs1.Q)
        assert math.sqrt(l2_norm_sq(r)) == pytest.approx(gs1.residual, rel=1e-6, abs=1e-14)

    @pytest.mark.parametrize("name", ["pair1", "pair075"])
    def test_l_plus_kills_translation(self, name, request):
        pair = request.getfixturevalue(name)
        dq = gradient(pair.Q)[0]
        assert math.sqrt(l2_norm_sq(apply_l_plus(pair, dq))) <= 1e-4 * math.sqrt(hs_norm_sq(dq, pair.s))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6), a=st.floats(-3, 3), b=st.floats(-3, 3))
    def test_linear(self, pair1, seed, a, b):
        rng = np.random.default_rng(seed)
        u = random_smooth_field(pair1.grid, rng)
        v = random_smooth_field(pair1.grid, rng)
        for which in ("plus", "minus"):
            lhs = pair1.apply(which, a * u + b * v)
            rhs = a * pair1.apply(which, u) + b * pair1.apply(which, v)
            assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-12 * (1 + np.max(np.abs(rhs.values)))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_symmetric(self, pair075_coarse, seed):
        pair = pair075_coarse
        rng = np.random.default_rng(seed)
        u = random_smooth_field(pair.grid, rng)
        v = random_smooth_field(pair.grid, rng)
        for which in ("plus", "minus"):
            a = inner_l2(pair.apply(which, u), v)
            b = inner_l2(u, pair.apply(which, v))
            assert abs(a - b) <= 1e-10 * max(1.0, abs(a))

    def test_operator_difference(self, pair075_coarse):
        pair = pair075_coarse
        u = random_smooth_field(pair.grid, np.random.default_rng(0))
        diff = pair.apply_minus(u) - pair.apply_plus(u)
        expected = u.with_values(2 * pair.p * pair.weight * u.values)
        assert np.max(np.abs(diff.values - expected.values)) <= 1e-12

    def test_unknown_operator(self, pair1):
        with pytest.raises(DomainError):
            pair1.apply("middle", pair1.Q)

    def test_kernel_report(self, gs1, pair1):
        rep = kernel_report(pair1)
        assert rep["l_minus_q"] <= 10 * gs1.residual
        assert rep["l_plus_dq"][0] <= 1e-4


class TestConstraints:
    def test_projection_satisfies_pairings(self, pair075_coarse):
        u = random_smooth_field(pair075_coarse.grid, np.random.default_rng(3))
        for c in (constraint_v(pair075_coarse), constraint_v0(pair075_coarse), constraint_hs_q(pair075_coarse)):
            v = c.project(u)
            scale = math.sqrt(l2_norm_sq(u))
            assert max(abs(x) for x in c.pairings(v)) <= 1e-12 * scale * 100

    def test_projection_idempotent(self, pair1):
        c = constraint_v0(pair1)
        u = random_smooth_field(pair1.grid, np.random.default_rng(4))
        once = c.project(u)
        twice = c.project(once)
        assert np.max(np.abs(once.values - twice.values)) <= 1e-13

    def test_bad_kind(self, pair1):
        with pytest.raises(DomainError):
            SubspaceConstraint((pair1.Q,), ("h1",), 1.0)


class TestCommutator:
    def test_gaussian_fractional(self):
        g = SpectralGrid(1, 2048, 30.0)
        u = g.from_function(lambda x: np.exp(-x**2))
        assert commutator_residual(u, 0.5) <= 1e-6

    def test_gaussian_local(self):
        g = SpectralGrid(1, 1024, 20.0)
        u = g.from_function(lambda x: np.exp(-x**2))
        assert commutator_residual(u, 1.0) <= 1e-8

    def test_plane_wave_rejected(self):
        g = SpectralGrid(1, 256, 20.0)
        with pytest.raises(PreconditionError):
            commutator_residual(g.from_function(lambda x: np.exp(1j * math.pi / 4 * x)), 0.5)


class TestDilationIdentities:
    def test_sech(self, pair1):
        assert max(dilation_identities(pair1).values()) <= 1e-6

    def test_fractional(self, pair075):
        assert max(dilation_identities(pair075).values()) <= 1e-3

    def test_resolution_doubling(self):
        coarse = dilation_identities(LinearizedPair.from_ground_state(ground_state(1, 0.75, 1.0, 1024, 100.0)))
        fine = dilation_identities(LinearizedPair.from_ground_state(ground_state(1, 0.75, 1.0, 2048, 100.0)))
        for key in ("dilation", "combined"):
            assert fine[key] <= coarse[key] / 2


class TestSpectrum:
    def test_l_minus_kernel_is_q(self, pair1):
        (e,) = smallest_eigenpairs(pair1, "minus")
        assert abs(e.value) <= 1e-6
        q = pair1.Q.values / math.sqrt(np.sum(pair1.Q.values**2))
        v = e.vector.values.real / math.sqrt(np.sum(np.abs(e.vector.values) ** 2))
        assert min(np.max(np.abs(v - q)), np.max(np.abs(v + q))) <= 1e-4

    @pytest.mark.parametrize("name", ["pair1", "pair075_coarse"])
    def test_constrained_positive(self, name, request):
        pair = request.getfixturevalue(name)
        plus = smallest_eigenpairs(pair, "plus", constraint_v0(pair))[0]
        minus = smallest_eigenpairs(pair, "minus", constraint_hs_q(pair))[0]
        assert plus.value > 0.1
        assert minus.value > 0.1

    def test_krylov_negative_direction(self, pair1):
        # -d^2/dy^2 - 6 sech^2 y has ground energy -4, so L+ has eigenvalue 1 - 4 = -3
        krylov = smallest_eigenpairs(pair1, "plus", method="krylov", seed=1)[0]
        dense = smallest_eigenpairs(pair1, "plus", method="dense")[0]
        assert krylov.value == pytest.approx(-3.0, abs=1e-8)
        assert dense.value == pytest.approx(-3.0, abs=1e-8)

    def test_kernel_dimension(self, pair1):
        rep = kernel_dimension(pair1)
        assert rep["negative"] == 1
        assert rep["kernel"] == 1

    def test_hs_coercivity_frozen(self, pair1):
        plus = hs_coercivity(pair1, "plus", constraint_v0(pair1))
        minus = hs_coercivity(pair1, "minus", constraint_hs_q(pair1))
        assert plus.value == pytest.approx(COERCIVITY_PLUS_S1, abs=1e-6)
        assert minus.value == pytest.approx(COERCIVITY_MINUS, abs=1e-6)
        assert plus.residual < 1e-8

    def test_hs_coercivity_is_rayleigh_minimum(self, pair1):
        e = hs_coercivity(pair1, "plus", constraint_v0(pair1))
        v = e.vector
        ratio = inner_l2(pair1.apply_plus(v), v) / hs_norm_sq(v, 1.0)
        assert ratio == pytest.approx(e.value, rel=1e-8)
        probe = coercivity_probe(pair1, constraint_v0(pair1), 50, 0)
        assert probe.min_ratio >= e.value - 1e-10

    def test_size_guard(self, gs075):
        with pytest.raises(PreconditionError):
            hs_coercivity(LinearizedPair.from_ground_state(gs075), "plus", max_size=1024)


class TestCoercivityProbe:
    def test_positive_on_v0(self, pair1):
        assert coercivity_probe(pair1, constraint_v0(pair1), 500, 0).min_ratio > 0

    def test_negative_without_constraint(self, pair1):
        probe = coercivity_probe(pair1, None, 20, 0, base=pair1.Q, delta=0.1)
        assert probe.min_ratio < 0

    def test_translation_direction_near_zero(self, pair1):
        dq = gradient(pair1.Q)[0]
        probe = coercivity_probe(pair1, None, 20, 0, base=dq, delta=1e-4)
        assert probe.min_ratio >= -1e-4
        assert probe.min_ratio <= 1e-3

    def test_hs_pairing_constraint(self, pair1):
        probe = coercivity_probe(pair1, constraint_hs_q(pair1), 100, 2, which="minus")
        assert probe.min_ratio > 0
        assert inner_hs(pair1.Q, pair1.Q, 1.0) > 0


class TestHolder:
    def test_zero_partner(self):
        z = np.array([0.3 + 0.4j, 2.0, -1j])
        np.testing.assert_allclose(holder_ratio(z, np.zeros(3), 0.5), 1.0, rtol=1e-14)

    def test_sup_bound(self):
        check = holder_power_check(0.5, 1_000_000, 0)
        assert check.sup_ratio <= 2.1
        assert check.growth < 1e-2

    @settings(max_examples=50, deadline=None)
    @given(r1=st.floats(1e-3, 1e3), r2=st.floats(1e-3, 1e3), a=st.floats(0, 6.28), b=st.floats(0, 6.28),
           p=st.floats(0.05, 0.95))
    def test_ratio_bounded(self, r1, r2, a, b, p):
        z, w = np.array([r1 * np.exp(1j * a)]), np.array([r2 * np.exp(1j * b)])
        if abs(z[0] - w[0]) < 1e-9 * max(r1, r2):
            return
        assert holder_ratio(z, w, p)[0] <= 2.0 ** (1 - p) * 1.5 + 1e-9

    def test_domain(self):
        with pytest.raises(DomainError):
            holder_power_check(1.5, 10, 0)
