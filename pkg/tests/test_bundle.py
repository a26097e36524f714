import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from borelq.bundle import (
    FieldConfig,
    FieldError,
    check_constant_field,
    curvature_scale,
    dirac_admissible,
    dirac_lattice_spacing,
    integrality_check,
)
from borelq.geometry import Grid, ManifoldSpec, TwoForm

TWO_PI = 2 * math.pi


@pytest.fixture
def torus():
    return Grid.uniform(ManifoldSpec.torus2(), 16)


@pytest.mark.parametrize("e, hbar, expected", [(0.0, 1.0, 0.0), (1.0, 1.0, 1.0), (2.0, 0.5, 4.0)])
def test_curvature_scale(torus, e, hbar, expected):
    assert curvature_scale(FieldConfig(TwoForm.constant(torus, 1.0), e, hbar)) == expected


def test_hbar_must_be_positive(torus):
    with pytest.raises(FieldError):
        FieldConfig(TwoForm.constant(torus, 1.0), 1.0, 0.0)


class TestIntegrality:
    def test_zero_field(self, torus):
        r = integrality_check(FieldConfig(TwoForm.constant(torus, 0.0), 1.0))
        assert r["cycle_value"] == 0 and r["admissible"]

    def test_three_flux_quanta(self, torus):
        phi0 = 3 / TWO_PI
        r = integrality_check(FieldConfig(TwoForm.constant(torus, phi0), 1.0))
        assert r["nearest_integer"] == 3
        assert r["residual"] < 1e-12
        assert r["admissible"]

    def test_inadmissible_constant(self, torus):
        r = integrality_check(FieldConfig(TwoForm.constant(torus, 0.3), 1.0))
        assert r["cycle_value"] == pytest.approx(0.3 * TWO_PI, rel=1e-14)
        assert r["nearest_integer"] == 2
        assert not r["admissible"]

    def test_flux_of_nonconstant_field(self, torus):
        x, y = torus.coords
        phi = 1 / TWO_PI + 0.4 * np.sin(x) * np.cos(2 * y)
        r = integrality_check(FieldConfig(TwoForm(torus, phi), 1.0))
        assert r["nearest_integer"] == 1 and r["admissible"]

    def test_needs_torus(self):
        grid = Grid.uniform(ManifoldSpec.circle(), 16)
        with pytest.raises(Exception):
            integrality_check(FieldConfig(TwoForm(grid, np.zeros(16)), 1.0))


class TestDirac:
    def test_zero(self):
        r = dirac_admissible(0.0, 1.0, 1.0)
        assert r["n_nearest"] == 0 and r["residual"] == 0

    def test_one_quantum(self):
        r = dirac_admissible(1 / TWO_PI, 1.0, 1.0)
        assert r["n_nearest"] == 1
        assert r["residual"] < 1e-15

    def test_nearest_to_point_three(self):
        r = dirac_admissible(0.3, 1.0, 1.0)
        assert r["n_nearest"] == 2
        assert r["phi0_nearest"] == pytest.approx(1 / math.pi, rel=1e-15)
        assert r["residual"] == pytest.approx(0.018309886183790702, rel=1e-12)

    def test_e_zero_rejected(self):
        with pytest.raises(FieldError):
            dirac_admissible(0.1, 0.0, 1.0)

    @pytest.mark.parametrize("e", [0.5, 1.0, 3.0, -2.0])
    @pytest.mark.parametrize("hbar", [1.0, 0.25])
    def test_spacing_exact(self, e, hbar):
        assert dirac_lattice_spacing(e, hbar) == hbar / (2 * math.pi * e)
        assert dirac_lattice_spacing(2 * e, hbar) == dirac_lattice_spacing(e, hbar) / 2


@settings(max_examples=100, deadline=None)
@given(
    n=st.integers(-20, 20),
    offset=st.one_of(st.just(0.0), st.floats(1e-6, 0.49), st.floats(-0.49, -1e-6)),
    e=st.sampled_from([0.5, 1.0, 2.0]),
    hbar=st.sampled_from([1.0, 0.3]),
)
def test_both_conditions_agree(n, offset, e, hbar):
    grid = Grid.uniform(ManifoldSpec.torus2(), 8)
    phi0 = (n + offset) * dirac_lattice_spacing(e, hbar)
    report = check_constant_field(phi0, e, hbar, grid)
    assert report["consistent"]
    assert report["admissible"] == (offset == 0.0)


def test_conditions_diverge_off_the_standard_torus():
    # the Dirac lattice assumes area (2 pi)^2; on a half-size torus one quantum of
    # the Dirac lattice carries only half a flux quantum
    grid = Grid.uniform(ManifoldSpec.torus2((TWO_PI, math.pi)), 8)
    report = check_constant_field(1 / TWO_PI, 1.0, 1.0, grid)
    assert report["dirac"]["residual"] < 1e-15
    assert report["integrality"]["cycle_value"] == pytest.approx(0.5)
    assert not report["consistent"]
