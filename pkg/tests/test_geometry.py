import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from borelq.geometry import (
    GeometryError,
    Grid,
    ManifoldKind,
    ManifoldSpec,
    OneForm,
    TrigPoly,
    TwoForm,
    divergence,
    gradient,
    integrate,
    laplacian,
    twisted_laplacian,
    two_form_integral,
)

TWO_PI = 2 * math.pi


@pytest.fixture
def circle():
    return Grid.uniform(ManifoldSpec.circle(), 64)


@pytest.fixture
def torus():
    return Grid.uniform(ManifoldSpec.torus2(), 32)


class TestManifoldAndGrid:
    def test_rejects_nonpositive_extent(self):
        with pytest.raises(GeometryError):
            ManifoldSpec(ManifoldKind.CIRCLE, (0.0,))

    def test_rejects_nonpositive_metric(self):
        with pytest.raises(GeometryError):
            ManifoldSpec(ManifoldKind.TORUS2, (1.0, 1.0), (1.0, -2.0))

    @pytest.mark.parametrize("n", [3, 12, 2])
    def test_points_must_be_power_of_two(self, n):
        with pytest.raises(GeometryError):
            Grid.uniform(ManifoldSpec.circle(), n)

    @pytest.mark.parametrize("metric", [(1.0,), (4.0,), (0.25,)])
    def test_total_weight(self, metric):
        grid = Grid.uniform(ManifoldSpec(ManifoldKind.CIRCLE, (3.0,), metric), 16)
        assert grid.total_volume == pytest.approx(3.0 * math.sqrt(metric[0]), rel=1e-15)
        assert integrate(np.ones(grid.shape), grid) == pytest.approx(grid.total_volume, rel=1e-14)

    def test_coordinates_are_uniform(self, torus):
        x, y = torus.coords
        assert x[1, 0] - x[0, 0] == pytest.approx(TWO_PI / 32)
        assert np.all(y[:, 0] == 0)

    def test_kind_codes_round_trip(self):
        for kind in ManifoldKind:
            assert ManifoldKind.from_code(kind.code) is kind

    def test_boundary_mass_of_centered_bump(self):
        grid = Grid.uniform(ManifoldSpec.line_segment(40.0), 256)
        x = grid.coords[0]
        rho = np.exp(-((x - 20.0) ** 2))
        rho /= integrate(rho, grid)
        assert grid.boundary_mass(rho) < 1e-10
        shifted = np.roll(rho, 120)
        assert grid.boundary_mass(shifted) > 1e-3


class TestDifferentialOperators:
    def test_gradient_of_constant(self, circle):
        (g,) = gradient(np.full(circle.shape, 2.5), circle)
        assert np.max(np.abs(g)) == 0

    def test_gradient_of_sine(self, circle):
        x = circle.coords[0]
        (g,) = gradient(np.sin(x), circle)
        assert np.max(np.abs(g - np.cos(x))) < 1e-12

    def test_gradient_uses_inverse_metric(self):
        grid = Grid.uniform(ManifoldSpec(ManifoldKind.CIRCLE, (TWO_PI,), (4.0,)), 64)
        x = grid.coords[0]
        (g,) = gradient(np.sin(x), grid)
        assert np.max(np.abs(g - 0.25 * np.cos(x))) < 1e-12

    def test_divergence_of_constant_field(self, torus):
        div = divergence([np.full(torus.shape, 1.3), np.full(torus.shape, -0.2)], torus)
        assert np.max(np.abs(div)) < 1e-14

    def test_divergence_of_sine_field(self, torus):
        x, _ = torus.coords
        div = divergence([np.sin(x), np.zeros(torus.shape)], torus)
        assert np.max(np.abs(div - np.cos(x))) < 1e-12

    @pytest.mark.parametrize(
        "make, expected",
        [
            (lambda x: np.sin(x), lambda x: -np.sin(x)),
            (lambda x: np.full_like(x, 3.0), lambda x: np.zeros_like(x)),
            (lambda x: np.exp(2j * x), lambda x: -4 * np.exp(2j * x)),
        ],
    )
    def test_laplacian_eigenfunctions(self, circle, make, expected):
        x = circle.coords[0]
        assert np.max(np.abs(laplacian(make(x), circle) - expected(x))) < 1e-11

    def test_wrong_shape_is_rejected(self, circle):
        with pytest.raises(GeometryError):
            laplacian(np.zeros(63), circle)

    def test_component_count_checked(self, torus):
        with pytest.raises(GeometryError):
            divergence([np.zeros(torus.shape)], torus)


class TestTwistedLaplacian:
    def test_zero_twist_is_laplacian(self, circle):
        psi = TrigPoly.random(np.random.default_rng(3), 8, circle.extents, real=False).on(circle)
        out = twisted_laplacian(psi, OneForm.zero(circle), 1.0, circle)
        assert np.array_equal(out, laplacian(psi, circle))

    @pytest.mark.parametrize("theta", [0.3, -1.1, 2.0])
    @pytest.mark.parametrize("k", [0, 1, -3])
    @pytest.mark.parametrize("hbar", [1.0, 0.5])
    def test_plane_wave_eigenvalue(self, circle, theta, k, hbar):
        x = circle.coords[0]
        psi = np.exp(1j * k * x)
        out = twisted_laplacian(psi, OneForm.constant(circle, theta), hbar, circle)
        assert np.max(np.abs(out + (k + theta / (2 * hbar)) ** 2 * psi)) < 1e-11

    def test_exact_form_matches_gauge_conjugation(self, circle):
        # (div + i a d chi)(grad + i a d chi) = e^{-i a chi} Lap e^{i a chi}
        x = circle.coords[0]
        chi = 0.4 * np.sin(x) + 0.1 * np.cos(2 * x)
        omega = OneForm.exact(circle, chi)
        psi = TrigPoly.random(np.random.default_rng(0), 4, circle.extents, real=False).on(circle)
        a = 0.5
        lhs = twisted_laplacian(psi, omega, 1.0, circle)
        rhs = np.exp(-1j * a * chi) * laplacian(np.exp(1j * a * chi) * psi, circle)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_general_branch_agrees_with_constant_branch(self, torus):
        # theta + d chi (general branch) against e^{-i a chi} Lap^theta e^{i a chi} (constant branch)
        x, y = torus.coords
        chi = 0.3 * np.cos(x) * np.sin(y)
        theta = (0.7, -0.3)
        psi = TrigPoly.random(np.random.default_rng(1), 4, torus.extents, real=False).on(torus)
        lhs = twisted_laplacian(psi, OneForm.exact(torus, chi, theta), 1.0, torus)
        inner = twisted_laplacian(np.exp(0.5j * chi) * psi, OneForm.constant(torus, theta), 1.0, torus)
        assert np.max(np.abs(lhs - np.exp(-0.5j * chi) * inner)) < 1e-9

    def test_non_closed_form_rejected(self, torus):
        x, y = torus.coords
        omega = OneForm(torus, (np.sin(y), np.zeros(torus.shape)))
        assert not omega.closed
        with pytest.raises(GeometryError):
            twisted_laplacian(np.ones(torus.shape, complex), omega, 1.0, torus)


class TestIntegration:
    def test_constant_over_circle(self, circle):
        assert integrate(np.ones(circle.shape), circle) == pytest.approx(TWO_PI, rel=1e-15)

    def test_sine_integrates_to_zero(self, circle):
        assert abs(integrate(np.sin(circle.coords[0]), circle)) < 1e-14

    def test_periodic_bump_against_fine_reference(self):
        def bump(grid):
            return np.exp(2 * np.cos(grid.coords[0]))

        coarse = Grid.uniform(ManifoldSpec.circle(), 64)
        fine = Grid.uniform(ManifoldSpec.circle(), 1024)
        ref = integrate(bump(fine), fine)
        assert abs(integrate(bump(coarse), coarse) - ref) < 1e-12
        # analytic value: 2 pi I_0(2)
        assert ref == pytest.approx(TWO_PI * 2.2795853023360673, rel=1e-14)

    @pytest.mark.parametrize(
        "phi, expected",
        [(0.0, 0.0), (0.3, 0.3 * TWO_PI**2), (-1.2, -1.2 * TWO_PI**2)],
    )
    def test_two_form_constant(self, torus, phi, expected):
        assert two_form_integral(TwoForm.constant(torus, phi), torus) == pytest.approx(expected, abs=1e-12)

    def test_two_form_harmonic(self, torus):
        x, _ = torus.coords
        assert abs(two_form_integral(TwoForm(torus, np.sin(x)), torus)) < 1e-13

    def test_two_form_needs_torus(self, circle):
        with pytest.raises(GeometryError):
            TwoForm(circle, np.zeros(circle.shape))


class TestTrigPoly:
    def test_derivative_of_sine(self):
        f = TrigPoly.sin(2, (TWO_PI,), 3.0)
        x = np.linspace(0, 1, 7)
        assert np.allclose(f.derivative(0)(x), 6.0 * np.cos(2 * x))

    def test_product_degree_adds(self):
        L = (TWO_PI,)
        p = TrigPoly.cos(2, L) * TrigPoly.sin(3, L)
        assert p.degree == 5
        x = np.linspace(0, 6, 11)
        assert np.allclose(p(x), np.cos(2 * x) * np.sin(3 * x))

    def test_random_real_is_real(self):
        f = TrigPoly.random(np.random.default_rng(9), 3, (TWO_PI, 1.0))
        assert f.is_real
        grid = Grid.uniform(ManifoldSpec.torus2((TWO_PI, 1.0)), 16)
        assert np.max(np.abs(f.on(grid).imag)) < 1e-14


@st.composite
def band_limited(draw, n=32, max_degree=8):
    seed = draw(st.integers(0, 2**32 - 1))
    degree = draw(st.integers(0, max_degree))
    return TrigPoly.random(np.random.default_rng(seed), degree, (TWO_PI, TWO_PI), real=False)


@settings(max_examples=100, deadline=None)
@given(band_limited())
def test_divergence_of_gradient_is_laplacian(f):
    grid = Grid.uniform(ManifoldSpec(ManifoldKind.TORUS2, (TWO_PI, TWO_PI), (1.0, 2.5)), 32)
    psi = f.on(grid)
    assert np.max(np.abs(divergence(gradient(psi, grid), grid) - laplacian(psi, grid))) < 1e-12 * (
        1 + np.max(np.abs(psi)) * 64
    )


@settings(max_examples=50, deadline=None)
@given(band_limited(), band_limited())
def test_integration_by_parts(f, g):
    grid = Grid.uniform(ManifoldSpec.torus2(), 32)
    fv = f.on(grid)
    X = [g.on(grid), (g * TrigPoly.cos((1, 0), (TWO_PI, TWO_PI))).on(grid)]
    df = gradient(fv, grid)  # metric is identity
    lhs = integrate(fv * divergence(X, grid), grid)
    rhs = -integrate(sum(d * x for d, x in zip(df, X)), grid)
    assert abs(lhs - rhs) < 1e-10 * (1 + abs(lhs))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 16))
def test_spectral_exactness_to_quarter_band(seed, degree):
    grid = Grid.uniform(ManifoldSpec.circle(), 64)
    f = TrigPoly.random(np.random.default_rng(seed), degree, grid.extents, real=False)
    exact = f.derivative(0).derivative(0).on(grid)
    assert np.max(np.abs(laplacian(f.on(grid), grid) - exact)) < 1e-10 * (1 + degree**2)
