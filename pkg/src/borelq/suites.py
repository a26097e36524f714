"""Verification suites: named relation checks with residuals and tolerances.

Each suite returns a list of :class:`Check` rows.  Relation tags follow the
conventional labels of the kinematical and Poisson relations (Qlin, Qcom,
PQcom, partadd, parhom, loc-cons, curv, Jj, wcom, wecom, cm-Ehr).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .bundle import FieldConfig
from .classical import (
    ClassicalObservable,
    PhasePoint,
    classical_ehrenfest_residual,
    free_force,
    harmonic_force,
    integrate_trajectory,
    jacobi_sum,
    poisson_bracket,
    random_phase_points,
)
from .geometry import Grid, ManifoldSpec, TrigPoly, TwoForm
from .kinematics import (
    BorelSet,
    KinematicsParams,
    VectorFieldSpec,
    commutator_residual,
    imprimitivity_residual,
    linearity_residual,
    momentum_spectrum,
    spectra_equivalent,
    test_vectors,
)


@dataclass
class Check:
    relation: str
    residual: float
    tolerance: float
    detail: str = ""
    lower: float | None = None  # when set, pass iff lower <= residual <= tolerance

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.residual):
            return False
        if self.lower is not None:
            return bool(self.lower <= self.residual <= self.tolerance)
        return bool(self.residual < self.tolerance)

    def as_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def _random_field(rng, degree, periods) -> VectorFieldSpec:
    return VectorFieldSpec(tuple(TrigPoly.random(rng, degree, periods) for _ in periods))


def algebra_suite(
    n: int = 128,
    degree: int = 8,
    thetas=(0.0, 0.3, 1.7),
    cs=(0.0, 0.05, -0.4),
    seed: int = 0,
    tol: float = 1e-10,
) -> list[Check]:
    """Kinematical relations on the circle over a (theta, c) grid, plus the
    magnetic commutator on the torus."""
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(ManifoldSpec.circle(), n)
    L = grid.extents
    vectors = test_vectors(grid, seed=seed)
    checks = []
    for theta in thetas:
        for c in cs:
            params = KinematicsParams.with_theta(grid, theta, 1.0, c)
            f, g = TrigPoly.random(rng, degree, L), TrigPoly.random(rng, degree, L)
            X, Y = _random_field(rng, degree, L), _random_field(rng, degree, L)
            alpha = float(rng.uniform(-2, 2))
            tag = f"theta={theta:g}, c={c:g}"
            checks += [
                Check("Qlin", linearity_residual("Qlin", params, alpha, f=f, g=g, vectors=vectors), tol, tag),
                Check("Qcom", commutator_residual("QQ", params, f=f, g=g, vectors=vectors), tol, tag),
                Check("PQcom", commutator_residual("PQ", params, f=f, X=X, vectors=vectors), tol, tag),
                Check("partadd", linearity_residual("partadd", params, alpha, X=X, Y=Y, vectors=vectors), tol, tag),
                Check("parhom", commutator_residual("PP", params, X=X, Y=Y, vectors=vectors), tol, tag),
            ]
    checks += magnetic_algebra_checks(seed=seed, tol=tol)
    return checks


def magnetic_algebra_checks(n: int = 64, degree: int = 4, e: float = 0.7, seed: int = 0, tol: float = 1e-10):
    """[P(X),P(Y)] picks up e Q(phi(X,Y)) for a zero-flux field on the torus."""
    rng = np.random.default_rng(seed + 1)
    grid = Grid.uniform(ManifoldSpec.torus2(), n)
    L = grid.extents
    phi = np.real(TrigPoly.cos((1, 0), L, 0.8).on(grid) + TrigPoly.sin((1, 2), L, 0.5).on(grid))
    field = FieldConfig(TwoForm(grid, phi), e)
    params = KinematicsParams.with_theta(grid, (0.2, -0.5), 1.0, 0.1)
    vectors = test_vectors(grid, count=4, degree=4, seed=seed)
    X, Y = _random_field(rng, degree, L), _random_field(rng, degree, L)
    r = commutator_residual("PP_magnetic", params, X=X, Y=Y, field=field, vectors=vectors)
    return [Check("curv", r, tol, f"torus N={n}, e={e:g}")]


def imprimitivity_suite(n: int = 128, pairs: int = 20, seed: int = 0, tol: float = 1e-12) -> list[Check]:
    """V_s E(B) V_{-s} against the projection onto the flowed set, for
    grid-aligned sets and shifts."""
    rng = np.random.default_rng(seed)
    grid = Grid.uniform(ManifoldSpec.circle(), n)
    h = grid.spacing[0]
    params = KinematicsParams.with_theta(grid, 0.4, 1.0, 0.0)
    vectors = test_vectors(grid, seed=seed)
    checks = []
    for _ in range(pairs):
        a, b = sorted(rng.choice(n + 1, size=2, replace=False))
        B = BorelSet.interval(a * h, b * h)
        speed = float(rng.choice([-1.0, 0.5, 1.0, 2.0]))
        steps = int(rng.integers(-n, n))
        s = steps * h / speed
        X = VectorFieldSpec.constant([speed], grid.extents)
        r = imprimitivity_residual(X, s, B, params, vectors)
        checks.append(Check("loc-cons", r, tol, f"B=[{a},{b})h, X={speed:g}, s={steps}h/{speed:g}"))
    return checks


def spectrum_checks(theta: float = 0.3, n: int = 128) -> list[Check]:
    """Momentum spectrum under a constant twist and its lattice equivalence."""
    grid = Grid.uniform(ManifoldSpec.circle(), n)
    params = KinematicsParams.with_theta(grid, theta, 1.0)
    values = momentum_spectrum(params)
    expected = [k + theta for k in range(-(n // 2) + 1, n // 2)]
    err = max(abs(a - b) for a, b in zip(values, expected))
    shifted = KinematicsParams.with_theta(grid, theta + params.theta_lattice[0], 1.0)
    off = KinematicsParams.with_theta(grid, theta + 0.5 * params.theta_lattice[0], 1.0)
    eq_ok = spectra_equivalent(params, shifted) and not spectra_equivalent(params, off)
    return [
        Check("Jj", err, 1e-12, f"theta={theta:g}: eigenvalues k + theta"),
        Check("Jj", 0.0 if eq_ok else 1.0, 0.5, "theta lattice equivalence"),
    ]


def poisson_suite(points: int = 50, e: float = 0.8, phi0: float = 0.37, degree: int = 1, seed: int = 0) -> list[Check]:
    """Standard and magnetic Poisson relations at random points of T*T^2."""
    rng = np.random.default_rng(seed)
    man = ManifoldSpec.torus2()
    L = man.extents
    checks = []
    worst = {"QQ": 0.0, "PQ": 0.0, "PP": 0.0}
    worst_e = {"QQ": 0.0, "PQ": 0.0, "PP": 0.0}
    d1 = ClassicalObservable.p(VectorFieldSpec.coordinate(0, L))
    d2 = ClassicalObservable.p(VectorFieldSpec.coordinate(1, L))
    const_err, jac = 0.0, 0.0
    for alpha in random_phase_points(rng, man, points):
        f, g = TrigPoly.random(rng, degree, L), TrigPoly.random(rng, degree, L)
        X, Y = _random_field(rng, degree, L), _random_field(rng, degree, L)
        Qf, Qg = ClassicalObservable.q(f), ClassicalObservable.q(g)
        PX, PY = ClassicalObservable.p(X), ClassicalObservable.p(Y)
        LXf = ClassicalObservable.q(X.lie_derivative(f))
        PXY = ClassicalObservable.p(X.bracket(Y))
        phiXY = phi0 * (np.real(X.components[0](*alpha.x)) * np.real(Y.components[1](*alpha.x))
                        - np.real(X.components[1](*alpha.x)) * np.real(Y.components[0](*alpha.x)))
        for tag, ee, bucket in (("wcom", 0.0, worst), ("wecom", e, worst_e)):
            bucket["QQ"] = max(bucket["QQ"], abs(poisson_bracket(Qf, Qg, alpha, ee, phi0)))
            bucket["PQ"] = max(bucket["PQ"], abs(poisson_bracket(PX, Qf, alpha, ee, phi0) - LXf(alpha.x, alpha.p)))
            extra = ee * phiXY
            bucket["PP"] = max(bucket["PP"], abs(poisson_bracket(PX, PY, alpha, ee, phi0) - PXY(alpha.x, alpha.p) - extra))
        const_err = max(const_err, abs(poisson_bracket(d1, d2, alpha, e, phi0) - e * phi0))
        jac = max(jac, abs(jacobi_sum(PX, PY, Qf, alpha, e, phi0)))
    for rel, val in worst.items():
        checks.append(Check("wcom", val, 1e-8, f"{{{rel}}} at {points} points"))
    for rel, val in worst_e.items():
        checks.append(Check("wecom", val, 1e-6, f"{{{rel}}}_e at {points} points, e={e:g}, phi0={phi0:g}"))
    checks.append(Check("wecom", const_err, 1e-6, "{P_d1, P_d2}_e = e phi0"))
    checks.append(Check("wecom", jac, 1e-6, "Jacobi identity, magnetic bracket"))
    return checks


def classical_ehrenfest_suite(dt: float = 1e-3, tol: float = 1e-6, ratio=(3.5, 4.5)) -> list[Check]:
    """d/dt f(x) = P_{grad f} along leapfrog trajectories, and its order."""
    cases = [
        ("free", ManifoldSpec.circle(), free_force, PhasePoint([0.4], [1.7]), 2.0),
        ("harmonic", ManifoldSpec.line_segment(20.0), harmonic_force([10.0], 1.0)[0],
         PhasePoint([11.0], [0.5]), 2.0),
    ]
    checks = []
    for name, man, force, alpha0, T in cases:
        f = TrigPoly.sin(1, man.extents)
        r1 = classical_ehrenfest_residual(f, integrate_trajectory(force, alpha0, dt, T, man))
        r2 = classical_ehrenfest_residual(f, integrate_trajectory(force, alpha0, dt / 2, T, man))
        checks.append(Check("cm-Ehr", r1, tol, f"{name}, dt={dt:g}"))
        q = r1 / r2 if r2 > 0 else math.inf
        checks.append(Check("cm-Ehr", q, ratio[1], f"{name}, ratio under dt halving", lower=ratio[0]))
    return checks


SUITES: dict[str, Callable[[], list[Check]]] = {
    "algebra": lambda: algebra_suite() + spectrum_checks(),
    "imprimitivity": imprimitivity_suite,
    "poisson": poisson_suite,
    "ehrenfest-classical": classical_ehrenfest_suite,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for key in SUITES for c in SUITES[key]()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join([*SUITES, 'all'])}")
    return SUITES[name]()
