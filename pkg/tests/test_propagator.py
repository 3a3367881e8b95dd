import numpy as np
import pytest

from fracsol import newton
from fracsol import propagator as pr
from fracsol.errors import BoundaryError, DomainError, PreconditionError
from fracsol.ground_state import ground_state
from fracsol.spectral import Field, SpectralGrid, l2_norm_sq

ZERO = newton.parse_potential("zero", 1)
QUAD = newton.parse_potential("quadratic", 1)


@pytest.fixture(scope="module")
def lab():
    return SpectralGrid(1, 1024, 10.0)


def params(grid, eps=0.2, s=1.0, V=QUAD, dt=1e-3, T=1.0, x0=0.5, v0=1.0, **kw):
    return pr.SimParams(eps, s, 1.0, grid, V, dt, T, (x0,), (v0,), **kw)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(eps=0.0), dict(eps=1.5), dict(dt=0.0), dict(T=-1.0),
                                    dict(v0=0.0), dict(s=1.2)])
    def test_rejected(self, lab, kw):
        with pytest.raises(DomainError):
            params(lab, **kw)

    def test_dimension_mismatch(self, lab):
        with pytest.raises(DomainError):
            params(lab, V=newton.harmonic2d())

    def test_steps_and_describe(self, lab):
        P = params(lab, dt=0.01, T=0.5)
        assert P.steps == 50
        d = P.describe()
        assert d["potential"] == QUAD.describe() and d["x0"] == [0.5]

    def test_default_dt(self):
        assert pr.default_dt(0.1, 1.0, 0.01) == pytest.approx(0.1 * 1e-4 / 4)
        assert pr.default_dt(1.0, 0.1, 0.5) == 1e-3


class TestResolution:
    def test_under_resolved_profile(self):
        g = SpectralGrid(1, 256, 10.0)
        with pytest.raises(PreconditionError, match="n >= "):
            pr.check_resolution(g, 0.1)

    def test_carrier_outside_band(self, lab):
        with pytest.raises(PreconditionError, match="carrier"):
            pr.check_resolution(lab, 0.2, [40.0])

    def test_suggested_n_passes(self):
        n = pr.suggested_n(0.05, 6.0)
        pr.check_resolution(SpectralGrid(1, n, 6.0), 0.05)


class TestInitialDatum:
    @pytest.mark.parametrize("eps", [1.0, 0.5, 0.2])
    def test_mass(self, gs1, lab, eps):
        u0 = pr.initial_datum(gs1, params(lab, eps=eps))
        assert l2_norm_sq(u0) / eps == pytest.approx(l2_norm_sq(gs1.Q), rel=1e-8)

    def test_zero_velocity_is_rescaled_profile(self, gs1, lab):
        P = params(lab, eps=0.2, x0=1.5, v0=0.0, allow_zero_velocity=True)
        u0 = pr.initial_datum(gs1, P)
        ref = np.sqrt(2.0) / np.cosh(np.sqrt(2.0) * (lab.x - 1.5) / 0.2)
        np.testing.assert_allclose(np.abs(u0.values), ref, atol=1e-8)

    def test_carrier_phase(self, gs1, lab):
        u0 = pr.initial_datum(gs1, params(lab, eps=0.25, x0=0.0, v0=0.5))
        i = np.argmin(np.abs(lab.x - 0.1))
        assert np.angle(u0.values[i]) == pytest.approx(0.5 * lab.x[i] / 0.25)


class TestGalileanFrame:
    @pytest.mark.parametrize("eps,x0,v0", [(0.2, -2.0, 1.0), (0.25, 1.0, -0.5)])
    def test_inverts_datum(self, gs1, lab, eps, x0, v0):
        u0 = pr.initial_datum(gs1, params(lab, eps=eps, x0=x0, v0=v0))
        back = pr.galilean_frame(u0, eps, [x0], [v0], gs1.Q.grid)
        assert np.max(np.abs(back.values - gs1.Q.values)) <= 1e-8

    def test_identity(self, rng):
        g = SpectralGrid(1, 64, 4.0)
        u = Field(g, np.exp(-g.x**2) * (1 + 0.1j * np.sin(np.pi * g.x / 4)))
        w = pr.galilean_frame(u, 1.0, [0.0], [0.0], g)
        np.testing.assert_allclose(w.values, u.values, atol=1e-12)


class TestSplitting:
    def test_mass_over_many_steps(self, gs1):
        g = SpectralGrid(1, 1024, 10.0)
        P = params(g, eps=0.2, dt=1e-3, T=10.0)
        rec = pr.evolve(P, gs1, sample_every=1000)
        assert rec.times[-1] == pytest.approx(10.0) and P.steps == 10_000
        assert pr.mass_drift(rec) <= 1e-10

    @pytest.mark.parametrize("s", [1.0, 0.75])
    def test_energy_second_order(self, gs1, gs075_coarse, lab, s):
        Q = gs1 if s == 1.0 else gs075_coarse
        drifts = [pr.energy_drift(pr.evolve(params(lab, s=s, dt=dt, T=2.0), Q, check_boundary=s == 1.0))
                  for dt in (4e-3, 2e-3, 1e-3)]
        for a, b in zip(drifts, drifts[1:]):
            assert a / b == pytest.approx(4.0, rel=0.1)

    def test_step_matches_evolve(self, gs1, lab):
        P = params(lab, dt=1e-2, T=3e-2)
        u = pr.initial_datum(gs1, P)
        for _ in range(3):
            u = pr.step_strang(u, P)
        rec = pr.evolve(P, gs1, snap_every=3)
        np.testing.assert_allclose(rec.snapshot_at(0.03).values, u.values, atol=1e-12)

    def test_step_grid_mismatch(self, lab, gs1):
        with pytest.raises(DomainError):
            pr.step_strang(gs1.Q, params(lab))

    def test_T_multiple_of_dt(self, gs1, lab):
        with pytest.raises(DomainError):
            pr.evolve(params(lab, dt=0.3, T=1.0), gs1)

    def test_needs_datum(self, lab):
        with pytest.raises(DomainError):
            pr.evolve(params(lab))

    @pytest.mark.parametrize("theta", [0.7, np.pi / 3])
    def test_gauge_invariance(self, gs1, lab, theta):
        P = params(lab, dt=2e-3, T=0.2)
        u0 = pr.initial_datum(gs1, P)
        a = pr.evolve(P, u0=u0, snap_every=100).snapshots[-1]
        b = pr.evolve(P, u0=Field(lab, np.exp(1j * theta) * u0.values), snap_every=100).snapshots[-1]
        np.testing.assert_allclose(b.values, np.exp(1j * theta) * a.values, atol=1e-12)


class TestDynamics:
    def test_free_soliton_translates(self, gs1, lab):
        P = params(lab, V=ZERO, x0=-2.0, v0=1.0, T=2.0)
        rec = pr.evolve(P, gs1, snap_every=P.steps)
        uT = rec.snapshot_at(2.0)
        assert abs(pr.peak_position(uT)[0] - 0.0) <= 1e-6
        frame = pr.galilean_frame(uT, 0.2, [0.0], [1.0], gs1.Q.grid)
        assert np.max(np.abs(np.abs(frame.values) - gs1.Q.values)) <= 1e-4

    @pytest.mark.parametrize("eps", [0.2, 0.1])
    def test_peak_follows_newton(self, gs1, eps):
        g = SpectralGrid(1, 2048, 8.0)
        P = params(g, eps=eps, x0=1.0, v0=0.5, T=3.0)
        rec = pr.evolve(P, gs1, snap_every=500)
        traj = newton.integrate(newton.NewtonState(0, [1.0], [0.5]), 1.0, QUAD, "rk45", 3.0, 1e-12)
        for t, f in zip(rec.snapshot_times, rec.snapshots):
            assert abs(pr.peak_position(f)[0] - traj.interpolate(t)[0][0]) <= 2 * eps

    def test_gradient_bound_uniform(self, gs1):
        vals = []
        for eps in (0.2, 0.1, 0.05):
            n = pr.suggested_n(eps, 8.0)
            P = params(SpectralGrid(1, n, 8.0), eps=eps, x0=1.0, v0=0.5, dt=2e-3, T=1.0)
            vals.append(pr.gradient_bound_check(pr.evolve(P, gs1, check_boundary=False)))
        assert max(vals) / min(vals) < 1.1

    def test_boundary_error_partial_record(self, gs1, tmp_path):
        g = SpectralGrid(1, 512, 4.0)
        P = params(g, V=ZERO, x0=0.0, v0=3.0, T=2.0, dt=1e-3)
        with pytest.raises(BoundaryError) as info:
            pr.evolve(P, gs1, sample_every=10, snap_every=100, snapshot_dir=tmp_path)
        rec = info.value.diagnostics["record"]
        assert rec.status == "aborted" and rec.guards
        assert 0 < rec.times[-1] < 2.0
        assert rec.times.size == rec.mass.size == rec.energy.size
        assert info.value.diagnostics["t"] == pytest.approx(rec.times[-1])
        assert list(tmp_path.iterdir())

    def test_record_rows(self, gs1, lab):
        rec = pr.evolve(params(lab, dt=1e-2, T=0.1), gs1, sample_every=5)
        rows = list(rec.rows())
        assert len(rows) == 3 and len(rows[0]) == len(rec.header())
        with pytest.raises(DomainError):
            rec.snapshot_at(0.05)


def test_lab_box():
    assert pr.lab_box(np.array([[1.0], [-3.0]]), 0.1, 10.0) == pytest.approx(4.0)
    assert pr.lab_box(np.array([[1.0]]), 0.5, 10.0) == pytest.approx(6.0)
