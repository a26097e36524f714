import math

import numpy as np
import pytest

from borelq.dynamics import (
    DensityFloorError,
    DGParams,
    DynamicsError,
    EvolutionAbort,
    Probe,
    current,
    density,
    ehrenfest_residual,
    evolve,
    fokker_planck_residual,
    free_superposition_at,
    periodic_gaussian,
    plane_wave,
    rhs,
    rj_functionals,
    superposition,
    transport_current,
)
from borelq.geometry import Grid, ManifoldSpec, OneForm, TrigPoly, integrate, laplacian, norm
from borelq.kinematics import KinematicsParams

TWO_PI = 2 * math.pi


@pytest.fixture
def circle():
    return Grid.uniform(ManifoldSpec.circle(), 64)


def params(grid, theta=0.0, hbar=1.0, c=0.0, **kw):
    return DGParams(KinematicsParams.with_theta(grid, theta, hbar, c), **kw)


def nodeless(grid):
    return superposition(grid, [((0,), 1.0), ((1,), 0.25), ((-1,), 0.15j), ((2,), 0.1)])


class TestParams:
    @pytest.mark.parametrize(
        "kw",
        [
            {"d_coeffs": (0.1, 0.0)},
            {"d_coeffs": (0, 0, 0, 0, math.nan)},
            {"dt": 0.0},
            {"density_floor": -1.0},
            {"twist_convention": "other"},
            {"current_convention": "other"},
            {"potential": math.inf},
        ],
    )
    def test_rejects(self, circle, kw):
        with pytest.raises(DynamicsError):
            params(circle, **kw)

    def test_potential_broadcast(self, circle):
        p = params(circle, potential=2.0)
        assert p.potential.shape == circle.shape and np.all(p.potential == 2.0)

    @pytest.mark.parametrize("conv, a", [("half", 0.5), ("minimal", 1.0)])
    def test_coupling(self, circle, conv, a):
        assert params(circle, hbar=0.5, twist_convention=conv).coupling == a / 0.5

    def test_stability_bound(self, circle):
        h = TWO_PI / 64
        assert params(circle).dt_bound == pytest.approx(0.5 * h * h, rel=1e-15)

    def test_linearity_flag(self, circle):
        assert params(circle).is_linear
        assert not params(circle, c=0.05).is_linear
        assert not params(circle, d_coeffs=(0, 0, 0.1, 0, 0)).is_linear


class TestRhs:
    @pytest.mark.parametrize("k", [0, 1, -3])
    @pytest.mark.parametrize("hbar", [1.0, 0.5])
    def test_free_plane_wave(self, circle, k, hbar):
        psi = plane_wave(circle, [k])
        out = rhs(psi, params(circle, hbar=hbar))
        assert np.max(np.abs(out + 0.5j * hbar * k * k * psi)) < 1e-12

    def test_constant_potential(self, circle):
        psi = plane_wave(circle, [0])
        out = rhs(psi, params(circle, potential=3.0))
        assert np.max(np.abs(out + 3.0j * psi)) < 1e-14

    def test_diffusion_term_vanishes_on_uniform_density(self, circle):
        psi = plane_wave(circle, [2])
        assert np.max(np.abs(rhs(psi, params(circle, c=0.3)) - rhs(psi, params(circle)))) < 1e-12

    def test_diffusion_term(self, circle):
        psi = nodeless(circle)
        rho = density(psi)
        expected = rhs(psi, params(circle)) + 0.5 * 0.2 * laplacian(rho, circle) / rho * psi
        assert np.max(np.abs(rhs(psi, params(circle, c=0.2)) - expected)) < 1e-12


class TestCurrents:
    @pytest.mark.parametrize("k", [1, -2])
    @pytest.mark.parametrize("conv, factor", [("doubled", 2.0), ("conventional", 1.0)])
    def test_plane_wave_current(self, circle, k, conv, factor):
        (j,) = current(plane_wave(circle, [k]), OneForm.zero(circle), 1.0, circle, conv)
        assert np.max(np.abs(j - factor * k / TWO_PI)) < 1e-12

    def test_twist_adds_rho_theta(self, circle):
        psi = nodeless(circle)
        (j0,) = current(psi, OneForm.zero(circle), 1.0, circle)
        (j1,) = current(psi, OneForm.constant(circle, 0.7), 1.0, circle)
        assert np.max(np.abs(j1 - j0 - 0.7 * density(psi))) < 1e-14

    def test_transport_current_is_half_for_plane_wave(self, circle):
        psi = plane_wave(circle, [3])
        (jt,) = transport_current(psi, params(circle))
        assert np.max(np.abs(jt - 3 / TWO_PI)) < 1e-12


class TestFunctionals:
    def test_plane_wave_values(self, circle):
        # the doubled current of e^{ikx}/sqrt(2 pi) is 2k rho, so R3 = (2k)^2 and the rest vanish
        R = rj_functionals(plane_wave(circle, [2]), params(circle))
        assert np.max(np.abs(R[2] - 16.0)) < 1e-10
        for j in (0, 1, 3, 4):
            assert np.max(np.abs(R[j])) < 1e-10

    def test_real_state_has_no_current_terms(self, circle):
        x = circle.coords[0]
        psi = np.sqrt(1.5 + np.cos(x)).astype(complex)
        R = rj_functionals(psi, params(circle))
        assert np.max(np.abs(R[0])) < 1e-12 and np.max(np.abs(R[2])) < 1e-20
        rho = 1.5 + np.cos(x)
        assert np.max(np.abs(R[1] + np.cos(x) / rho)) < 1e-10
        assert np.max(np.abs(R[4] - np.sin(x) ** 2 / rho**2)) < 1e-10

    def test_floor_violation(self, circle):
        psi = np.cos(circle.coords[0]).astype(complex)
        with pytest.raises(DensityFloorError, match="below floor"):
            rj_functionals(psi, params(circle, density_floor=1e-3))


class TestLinearEvolution:
    def test_zero_time(self, circle):
        psi = nodeless(circle)
        r = evolve(psi, params(circle), 0.0)
        assert len(r.snapshots) == 1 and np.array_equal(r.final, psi)

    def test_plane_wave_phase(self):
        grid = Grid.uniform(ManifoldSpec.circle(), 128)
        psi0 = plane_wave(grid, [3])
        r = evolve(psi0, params(grid, dt=1e-3), 1.0, snapshot_every=1000)
        assert np.max(np.abs(r.final - np.exp(-4.5j) * psi0)) < 1e-8

    def test_superposition_matches_exact(self, circle):
        terms = [((0,), 1.0), ((2,), 0.5j)]
        r = evolve(superposition(circle, terms, normalized=False), params(circle, dt=1e-3), 0.5, snapshot_every=500)
        assert np.max(np.abs(r.final - free_superposition_at(circle, terms, 0.5))) < 1e-9

    @pytest.mark.parametrize("theta", [-1.3, -0.4, 0.0, 0.3, 1.1])
    def test_twisted_dispersion(self, circle, theta):
        k = 2
        psi0 = plane_wave(circle, [k])
        r = evolve(psi0, params(circle, theta=theta, dt=1e-3), 0.2, snapshot_every=200)
        omega_k = 0.5 * (k + theta / 2) ** 2
        assert np.max(np.abs(r.final - np.exp(-1j * omega_k * 0.2) * psi0)) < 1e-9

    def test_constant_potential_is_a_global_phase(self, circle):
        psi0 = nodeless(circle)
        a = evolve(psi0, params(circle, dt=1e-3), 0.3, snapshot_every=300).final
        b = evolve(psi0, params(circle, dt=1e-3, potential=2.0), 0.3, snapshot_every=300).final
        assert np.max(np.abs(b - np.exp(-0.6j) * a)) < 1e-10
        assert np.max(np.abs(density(b) - density(a))) < 1e-12

    def test_norm_conservation(self, circle):
        r = evolve(periodic_gaussian(circle, math.pi, 0.6, [2]), params(circle, dt=1e-3), 1.0, snapshot_every=1000)
        assert r.norm_drift < 1e-8

    def test_dt_above_bound(self, circle):
        with pytest.raises(DynamicsError, match="stability"):
            evolve(nodeless(circle), params(circle, dt=1.0), 1.0)

    def test_rejects_zero_state(self, circle):
        with pytest.raises(DynamicsError):
            evolve(np.zeros(circle.shape), params(circle), 0.1)


class TestTwistConventions:
    def test_minimal_coupling_theta_lattice(self, circle):
        # under 1/hbar coupling, theta -> theta + hbar (L = 2 pi) is undone by e^{-ix}
        x = circle.coords[0]
        psi0 = nodeless(circle)
        a = evolve(psi0, params(circle, theta=0.3, dt=1e-3, twist_convention="minimal"), 0.2, snapshot_every=200)
        b = evolve(np.exp(-1j * x) * psi0, params(circle, theta=1.3, dt=1e-3, twist_convention="minimal"), 0.2,
                   snapshot_every=200)
        assert np.max(np.abs(b.final - np.exp(-1j * x) * a.final)) < 1e-10

    def test_half_coupling_needs_double_shift(self, circle):
        x = circle.coords[0]
        psi0 = nodeless(circle)
        run = lambda th, psi: evolve(psi, params(circle, theta=th, dt=1e-3), 0.2, snapshot_every=200).final
        ref = run(0.3, psi0)
        assert np.max(np.abs(run(2.3, np.exp(-1j * x) * psi0) - np.exp(-1j * x) * ref)) < 1e-10
        assert np.max(np.abs(run(1.3, np.exp(-1j * x) * psi0) - np.exp(-1j * x) * ref)) > 1e-2

    def test_conventions_disagree(self, circle):
        psi = plane_wave(circle, [1])
        a = rhs(psi, params(circle, theta=0.5))
        b = rhs(psi, params(circle, theta=0.5, twist_convention="minimal"))
        assert np.max(np.abs(a - b)) > 0.1


class TestNonlinearDiagnostics:
    f = TrigPoly.sin(1, (TWO_PI,))

    @pytest.mark.parametrize("c, d", [(0.0, (0, 0, 0, 0, 0)), (0.05, (0, 0.1, 0, 0, 0)), (0.0, (0, 0, 0, 0.1, 0)), (0.05, (-0.1, 0, 0, 0, 0))])
    def test_fp_and_ehrenfest(self, circle, c, d):
        r = evolve(nodeless(circle), params(circle, c=c, d_coeffs=d, dt=1e-3), 0.2, probes=[Probe("s", self.f)])
        assert r.max_fp_residual < 1e-6
        assert r.max_ehrenfest < 1e-6
        assert r.norm_drift < 1e-10

    def test_fp_stationary_plane_wave(self, circle):
        r = evolve(plane_wave(circle, [2]), params(circle, dt=1e-3), 0.05)
        assert r.max_fp_residual < 1e-10

    def test_fp_gaussian_second_order(self, circle):
        psi0 = periodic_gaussian(circle, math.pi, 1.0, [1])  # the residual grows as the bump narrows
        res = [evolve(psi0, params(circle, dt=dt), 0.2).max_fp_residual for dt in (1e-3, 5e-4)]
        assert res[0] < 1e-6
        assert 3.3 <= res[0] / res[1] <= 4.7

    def test_fp_doubled_current_disagrees(self, circle):
        p = params(circle, dt=1e-3)
        r = evolve(nodeless(circle), p, 0.01)
        a, b = r.snapshots[-2], r.snapshots[-1]
        assert fokker_planck_residual(a, b, r.dt, p) < 1e-6
        assert fokker_planck_residual(a, b, r.dt, p, "doubled") > 1e-2

    def test_ehrenfest_residual_helper(self, circle):
        p = params(circle, dt=1e-3)
        r = evolve(nodeless(circle), p, 0.05)
        assert ehrenfest_residual(self.f, r.snapshots, r.dt, p) < 1e-6
        with pytest.raises(DynamicsError):
            ehrenfest_residual(self.f, r.snapshots[:2], r.dt, p)

    def test_diffusion_spreads_density(self, circle):
        psi0 = periodic_gaussian(circle, math.pi, 0.8)
        r = evolve(psi0, params(circle, c=0.2, dt=1e-3), 0.3, snapshot_every=300)
        assert np.max(density(r.final)) < np.max(density(psi0))
        assert abs(integrate(density(r.final), circle) - 1.0) < 1e-10

    def test_nodal_initial_state_rejected(self, circle):
        psi = np.cos(circle.coords[0]).astype(complex)
        with pytest.raises(DensityFloorError):
            evolve(psi, params(circle, c=0.05, density_floor=1e-6), 0.1)

    @pytest.mark.parametrize("kw", [{"dt": 0.05}, {"dt": 1e-3, "d_coeffs": (5.0, 0, 0, 0, 0)}])
    def test_abort_keeps_partial_result(self, circle, kw):
        with pytest.raises(EvolutionAbort, match="norm grew") as info:
            evolve(nodeless(circle), params(circle, **kw), 2.0, check_stability=False)
        result = info.value.result
        assert result.aborted
        assert result.records[0].time == 0.0 and len(result.records) >= 2

def test_line_segment_gaussian_stays_interior():
    grid = Grid.uniform(ManifoldSpec.line_segment(40.0), 256)
    psi0 = periodic_gaussian(grid, 20.0, 1.5, [3])
    f = TrigPoly.sin(1, grid.extents)
    p = DGParams(KinematicsParams(grid), dt=1e-3)
    r = evolve(psi0, p, 0.5, probes=[Probe("s", f)], snapshot_every=100)
    assert grid.boundary_mass(density(r.final)) < 1e-10
    assert r.max_ehrenfest < 1e-6
    assert abs(norm(r.final, grid) - 1.0) < 1e-10
