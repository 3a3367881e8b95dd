import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsol import newton
from fracsol.errors import DomainError
from fracsol.newton import NewtonState, integrate, motion_energy, rhs


def closed_form_s1(t):
    """x(0) = (1, 1), xi(0) = (1, 0.5) in V = x1^2/2 + 2 x2^2 with s = 1."""
    return np.stack([np.cos(t) + np.sin(t), np.cos(2 * t) + 0.25 * np.sin(2 * t)], axis=1)


class TestPotentials:
    @pytest.mark.parametrize("spec,dim", [("harmonic2d", 2), ("quadratic", 1), ("quadratic:2.5", 2),
                                          ("zero", 1), ("poly:0,0.5,0,0.1", 2)])
    def test_gradient_consistency(self, spec, dim):
        V = newton.parse_potential(spec, dim)
        pts = np.random.default_rng(0).uniform(-2, 2, size=(10, dim))
        assert newton.gradient_consistency(V, pts) < 1e-6

    def test_describe_round_trip(self):
        V = newton.parse_potential("poly:1,0,0.25", 1)
        W = newton.parse_potential(V.describe(), 1)
        assert W.coeffs == V.coeffs

    @pytest.mark.parametrize("spec,dim", [("harmonic2d", 1), ("cubic", 1), ("poly:a,b", 1)])
    def test_rejected(self, spec, dim):
        with pytest.raises(DomainError):
            newton.parse_potential(spec, dim)

    def test_on_grid(self):
        from fracsol.spectral import SpectralGrid

        g = SpectralGrid(2, 8, 2.0)
        vals = newton.harmonic2d().on_grid(g)
        x, y = g.coords
        np.testing.assert_allclose(vals, 0.5 * x**2 + 2 * y**2)


class TestRhs:
    def test_local_harmonic(self):
        _, dxi = rhs(NewtonState(0, [0.3, -0.7], [1.0, 2.0]), 1.0, newton.harmonic2d())
        np.testing.assert_allclose(dxi, [-0.3, 2.8])

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_stationary_family(self, s):
        dx, dxi = rhs(NewtonState(0, [1.3, -0.4], [0.0, 0.0]), s, newton.harmonic2d())
        assert np.all(dxi == 0.0) and not np.any(np.signbit(dxi))
        assert np.all(dx == 0.0)

    def test_no_stationary_points_at_s1(self):
        _, dxi = rhs(NewtonState(0, [1.0, 1.0], [0.0, 0.0]), 1.0, newton.harmonic2d())
        np.testing.assert_allclose(dxi, [-1.0, -4.0])

    def test_regularization_floor(self):
        _, dxi = rhs(NewtonState(0, [1.0], [0.0]), 0.5, newton.quadratic(1), reg_floor=1e-2)
        assert dxi[0] == pytest.approx(-2 * 1e-2**0.5)

    def test_order_guard(self):
        with pytest.raises(DomainError):
            rhs(NewtonState(0, [1.0], [1.0]), 1.5, newton.quadratic(1))


class TestIntegrate:
    def test_closed_form_rk4(self):
        traj = integrate(NewtonState(0, [1, 1], [1, 0.5]), 1.0, newton.harmonic2d(), "rk4", 10.0, 1e-3,
                         sample_dt=0.01)
        assert np.max(np.abs(traj.x - closed_form_s1(traj.t))) <= 1e-8

    def test_closed_form_rk45(self):
        traj = integrate(NewtonState(0, [1, 1], [1, 0.5]), 1.0, newton.harmonic2d(), "rk45", 10.0, 1e-12)
        assert np.max(np.abs(traj.x - closed_form_s1(traj.t))) <= 1e-8

    @pytest.mark.parametrize("s", [0.5, 0.25])
    @pytest.mark.parametrize("a,b", [(1.0, 0.5), (0.5, 1.0)])
    def test_figure_runs(self, s, a, b, tmp_path):
        from fracsol.io import emit_csv, read_csv

        traj = integrate(NewtonState(0, [1, a], [1, b]), s, newton.harmonic2d(), "rk45", 50.0, 1e-10,
                         sample_dt=0.1)
        assert traj.t[-1] == pytest.approx(50.0)
        assert traj.energy_drift() < 1e-7
        header, rows = read_csv(emit_csv(traj.header(), traj.rows(), tmp_path / "f.csv"))
        assert header == ["t", "x1", "x2", "xi1", "xi2", "H"]
        assert len(rows) == len(traj)

    def test_stationary_trajectory(self):
        traj = integrate(NewtonState(0, [0.7, -1.1], [0, 0]), 0.5, newton.harmonic2d(), "rk4", 2.0, 1e-2)
        assert np.all(traj.x == traj.x[0])

    def test_invariant_rk4(self):
        traj = integrate(NewtonState(0, [1, 1], [1, 0.5]), 0.75, newton.harmonic2d(), "rk4", 20.0, 1e-3)
        assert traj.energy_drift() <= 1e-7

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75, 1.0])
    def test_invariant_rk45_long(self, s):
        traj = integrate(NewtonState(0, [1, 1], [1, 0.5]), s, newton.harmonic2d(), "rk45", 50.0, 1e-12)
        assert traj.energy_drift() <= 1e-7

    @settings(max_examples=15, deadline=None)
    @given(s=st.floats(0.3, 1.0), x=st.floats(-2, 2), xi=st.floats(0.3, 2.0))
    def test_invariant_random_data(self, s, x, xi):
        traj = integrate(NewtonState(0, [x], [xi]), s, newton.quadratic(1), "rk45", 5.0, 1e-12)
        assert traj.energy_drift() <= 1e-7

    def test_time_reversal(self):
        V = newton.harmonic2d()
        fwd = integrate(NewtonState(0, [1, 0.5], [1, 1]), 0.5, V, "rk45", 3.0, 1e-11)
        back = integrate(newton.reverse(fwd), 0.5, V, "rk45", 3.0, 1e-11)
        ref = integrate(NewtonState(0, [1, 0.5], [1, 1]), 0.5, V, "rk45", 3.0, 1e-9)
        one_way = np.max(np.abs(ref.x[-1] - fwd.x[-1]))
        assert np.max(np.abs(back.x[-1] - [1, 0.5])) <= 100 * max(one_way, 1e-12)

    def test_dense_output_converges(self):
        V = newton.quadratic(1)
        ref = integrate(NewtonState(0, [1], [1]), 0.8, V, "rk45", 2.0, 1e-13, sample_dt=0.01)
        i = int(np.argmin(np.abs(ref.t - 1.23)))
        errs = []
        for h in (0.4, 0.2, 0.1, 0.05):
            coarse = integrate(NewtonState(0, [1], [1]), 0.8, V, "rk45", 2.0, 1e-13, sample_dt=h)
            errs.append(abs(coarse.interpolate(1.23)[0][0] - ref.x[i][0]))
        assert all(b < a / 3 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-6

    def test_interpolate_range(self):
        traj = integrate(NewtonState(0, [1], [1]), 1.0, newton.quadratic(1), "rk4", 1.0, 1e-2)
        with pytest.raises(DomainError):
            traj.interpolate(2.0)

    @pytest.mark.parametrize("kwargs", [dict(method="euler"), dict(T=-1.0), dict(reg_floor=-1.0),
                                        dict(method="rk4", step_or_tol=0.3)])
    def test_bad_arguments(self, kwargs):
        args = dict(method="rk4", T=1.0, step_or_tol=1e-2)
        args.update(kwargs)
        with pytest.raises(DomainError):
            integrate(NewtonState(0, [1], [1]), 0.5, newton.quadratic(1), **args)


class TestMotionEnergy:
    def test_at_rest(self):
        V = newton.harmonic2d()
        st_ = NewtonState(0, [1.0, 0.5], [0, 0])
        assert motion_energy(st_, 0.4, V, 3.0) == pytest.approx(3.0 * V([1.0, 0.5]))

    def test_classical_endpoint(self):
        V = newton.quadratic(1)
        st_ = NewtonState(0, [0.3], [1.7])
        assert motion_energy(st_, 1.0, V) == pytest.approx(0.5 * 1.7**2 + 0.5 * 0.3**2)

    def test_matches_trajectory_column(self):
        V = newton.harmonic2d()
        traj = integrate(NewtonState(0, [1, 1], [1, 0.5]), 0.6, V, "rk4", 1.0, 1e-2)
        assert traj.H[3] == pytest.approx(motion_energy(traj.state(3), 0.6, V), rel=1e-14)
