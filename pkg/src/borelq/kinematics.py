"""Discrete Borel-kinematic operators E(B), Q(f), P(X) on a periodic grid.

Representations are labelled by a closed one-form ``omega`` (its constant part
carries the character of the fundamental group) and the real number ``c``.
All operators are matrix-free: they act on sample arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import (
    GeometryError,
    Grid,
    ManifoldKind,
    OneForm,
    TrigPoly,
    norm,
    partials,
    random_band_limited,
)


class KinematicsError(ValueError):
    pass


class FlowError(RuntimeError):
    """Numeric flow lost unitarity beyond tolerance."""


@dataclass(frozen=True, eq=False)
class KinematicsParams:
    grid: Grid
    hbar: float = 1.0
    c: float = 0.0
    omega: OneForm | None = None

    def __post_init__(self):
        if not self.hbar > 0:
            raise KinematicsError(f"hbar must be positive, got {self.hbar}")
        if not math.isfinite(self.c):
            raise KinematicsError("c must be finite")
        omega = OneForm.zero(self.grid) if self.omega is None else self.omega
        if omega.grid != self.grid:
            raise KinematicsError("omega lives on a different grid")
        if not omega.closed:
            raise KinematicsError(f"omega must be closed (curl {omega.curl_norm():.3e})")
        object.__setattr__(self, "omega", omega)

    @classmethod
    def with_theta(cls, grid: Grid, theta=0.0, hbar: float = 1.0, c: float = 0.0) -> "KinematicsParams":
        return cls(grid, hbar, c, OneForm.constant(grid, theta))

    @property
    def manifold(self):
        return self.grid.manifold

    @property
    def theta(self) -> tuple[float, ...]:
        return self.omega.harmonic_part

    @property
    def theta_lattice(self) -> tuple[float, ...]:
        """Shifts of theta_d that give unitarily equivalent representations."""
        return tuple(2 * math.pi * self.hbar / L for L in self.grid.extents)

    @property
    def reduced_theta(self) -> tuple[float, ...]:
        return tuple(t % u for t, u in zip(self.theta, self.theta_lattice))


# --------------------------------------------------------------------------
# Borel sets and vector fields
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BorelSet:
    """Product of per-dimension unions of half-open intervals [a, b).

    Endpoints must sit on grid points of the grid the set is used with.
    """

    intervals: tuple[tuple[tuple[float, float], ...], ...]

    @classmethod
    def full(cls, grid: Grid) -> "BorelSet":
        return cls(tuple(((0.0, L),) for L in grid.extents))

    @classmethod
    def empty(cls, grid: Grid) -> "BorelSet":
        return cls(tuple(() for _ in grid.extents))

    @classmethod
    def interval(cls, a: float, b: float) -> "BorelSet":
        return cls((((a, b),),))

    def _index_ranges(self, grid: Grid) -> list[list[tuple[int, int]]]:
        if len(self.intervals) != grid.ndim:
            raise KinematicsError("Borel set dimension does not match grid")
        out = []
        for d, ivs in enumerate(self.intervals):
            rng = []
            for a, b in ivs:
                try:
                    ia, ib = grid.index_of(a, d), grid.index_of(b, d)
                except GeometryError as exc:
                    raise KinematicsError(str(exc)) from None
                if not 0 <= ia <= ib <= grid.shape[d]:
                    raise KinematicsError(f"interval [{a}, {b}) outside [0, {grid.extents[d]})")
                rng.append((ia, ib))
            out.append(rng)
        return out

    def indicator(self, grid: Grid) -> np.ndarray:
        masks = []
        for d, rng in enumerate(self._index_ranges(grid)):
            m = np.zeros(grid.shape[d], dtype=bool)
            for ia, ib in rng:
                m[ia:ib] = True
            view = [1] * grid.ndim
            view[d] = grid.shape[d]
            masks.append(m.reshape(view))
        out = np.ones(grid.shape, dtype=bool)
        for m in masks:
            out = out & m
        return out.astype(float)

    def translated(self, shift: Sequence[float], grid: Grid) -> "BorelSet":
        """Image under x -> x + shift (mod periods); shift must be grid-aligned."""
        new = []
        for d, rng in enumerate(self._index_ranges(grid)):
            n, h = grid.shape[d], grid.spacing[d]
            try:
                m = grid.index_of(shift[d], d)
            except GeometryError as exc:
                raise KinematicsError(f"non-grid-aligned displacement: {exc}") from None
            cover = np.zeros(n, dtype=bool)
            for ia, ib in rng:
                cover[np.arange(ia, ib) % n] = True
            cover = np.roll(cover, m)
            new.append(_runs(cover, h, n))
        return BorelSet(tuple(new))


def _runs(mask: np.ndarray, h: float, n: int) -> tuple[tuple[float, float], ...]:
    if mask.all():
        return ((0.0, n * h),)
    out = []
    i = 0
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            out.append((i * h, j * h))
            i = j
        else:
            i += 1
    return tuple(out)


@dataclass(frozen=True)
class VectorFieldSpec:
    """Vector field X = X^d d_d with trigonometric-polynomial components."""

    components: tuple[TrigPoly, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if len({c.periods for c in comps}) > 1:
            raise KinematicsError("vector field components live on different periods")
        object.__setattr__(self, "components", comps)

    @classmethod
    def constant(cls, values: Sequence[float], periods) -> "VectorFieldSpec":
        return cls(tuple(TrigPoly.const(v, periods) for v in values))

    @classmethod
    def coordinate(cls, d: int, periods) -> "VectorFieldSpec":
        """The coordinate field d/dx^d."""
        periods = tuple(np.atleast_1d(periods))
        return cls.constant([1.0 if i == d else 0.0 for i in range(len(periods))], periods)

    @classmethod
    def gradient_of(cls, f: TrigPoly, metric_diag: Sequence[float]) -> "VectorFieldSpec":
        return cls(tuple(f.derivative(d) * (1.0 / g) for d, g in enumerate(metric_diag)))

    @property
    def ndim(self) -> int:
        return len(self.components)

    @property
    def periods(self):
        return self.components[0].periods

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    @property
    def is_constant(self) -> bool:
        return all(c.is_constant for c in self.components)

    @property
    def constant_values(self) -> tuple[float, ...]:
        return tuple(float(np.real(c.mean)) for c in self.components)

    def on(self, grid: Grid) -> list[np.ndarray]:
        vals = [c.on(grid) for c in self.components]
        if all(c.is_real for c in self.components):
            vals = [np.real(v) for v in vals]
        return vals

    def divergence(self) -> TrigPoly:
        return sum((c.derivative(d) for d, c in enumerate(self.components)), TrigPoly.zero(self.periods))

    def lie_derivative(self, f: TrigPoly) -> TrigPoly:
        """L_X f = X^d d_d f."""
        return sum((c * f.derivative(d) for d, c in enumerate(self.components)), TrigPoly.zero(self.periods))

    def bracket(self, other: "VectorFieldSpec") -> "VectorFieldSpec":
        """Lie bracket [X, Y]^a = X(Y^a) - Y(X^a)."""
        return VectorFieldSpec(tuple(
            self.lie_derivative(ya) - other.lie_derivative(xa)
            for xa, ya in zip(self.components, other.components)
        ))

    def __add__(self, other: "VectorFieldSpec") -> "VectorFieldSpec":
        return VectorFieldSpec(tuple(a + b for a, b in zip(self.components, other.components)))

    def __mul__(self, alpha: float) -> "VectorFieldSpec":
        return VectorFieldSpec(tuple(a * alpha for a in self.components))

    __rmul__ = __mul__


# --------------------------------------------------------------------------
# Operators
# --------------------------------------------------------------------------


def apply_e(B: BorelSet, psi: np.ndarray, grid: Grid) -> np.ndarray:
    return B.indicator(grid) * grid.check(psi)


def apply_q(f: np.ndarray | TrigPoly, psi: np.ndarray, grid: Grid) -> np.ndarray:
    values = f.on(grid) if isinstance(f, TrigPoly) else np.asarray(f)
    if values.shape != grid.shape:
        raise KinematicsError(f"multiplier shape {values.shape} does not match grid {grid.shape}")
    if isinstance(f, TrigPoly) and f.is_real:
        values = np.real(values)
    return values * grid.check(psi)


def _max_degree(grid: Grid, fraction: int = 4) -> int:
    return min(grid.shape) // fraction


def apply_p(
    X: VectorFieldSpec,
    psi: np.ndarray,
    params: KinematicsParams,
    connection: OneForm | None = None,
) -> np.ndarray:
    """P(X) psi = (hbar/i) X^d d_d psi + omega(X) psi + (c + hbar/2i) div X psi.

    ``connection`` replaces ``params.omega`` (it may be non-closed, which is how
    an external field enters).
    """
    grid = params.grid
    psi = grid.check(psi)
    if X.ndim != grid.ndim:
        raise KinematicsError("vector field dimension does not match grid")
    if X.degree > _max_degree(grid):
        raise KinematicsError(f"vector field degree {X.degree} exceeds N/4 = {_max_degree(grid)} (aliasing risk)")
    form = params.omega if connection is None else connection
    hbar = params.hbar
    Xs = X.on(grid)
    out = np.zeros(grid.shape, dtype=complex)
    for Xd, dpsi in zip(Xs, partials(psi, grid)):
        out += Xd * dpsi
    out *= hbar / 1j
    if not form.is_zero:
        out += form.contract(Xs) * psi
    div = X.divergence()
    if div.coeffs:
        divs = div.on(grid)
        if div.is_real:
            divs = np.real(divs)
        out += (params.c + hbar / 2j) * divs * psi
    return out


def flow_unitary(
    X: VectorFieldSpec,
    s: float,
    psi: np.ndarray,
    params: KinematicsParams,
    max_step: float | None = None,
    norm_tol: float = 1e-8,
) -> np.ndarray:
    """V_s psi with V_s = exp(i s P(X) / hbar).

    Constant X with constant omega: exact translation in frequency space,
    (V_s psi)(x) = exp(i s omega(X)/hbar) psi(x + s X).  Otherwise RK4 on
    d psi/ds = (i/hbar) P(X) psi.
    """
    grid = params.grid
    psi = grid.check(psi).astype(complex)
    if s == 0:
        return psi.copy()
    if X.is_constant and params.omega.is_constant:
        a = X.constant_values
        phase = sum(k * ad for k, ad in zip(grid.wavenumbers, a))
        F = np.fft.fftn(psi) * np.exp(1j * s * phase)
        twist = sum(t * ad for t, ad in zip(params.theta, a))
        return np.exp(1j * s * twist / params.hbar) * np.fft.ifftn(F)

    kmax = max(np.max(np.abs(k)) for k in grid.wavenumbers)
    xmax = max(float(np.max(np.abs(v))) for v in X.on(grid)) or 1.0
    scale = xmax * kmax + float(np.max(np.abs(params.omega.contract(X.on(grid))))) / params.hbar
    h = 0.2 / scale if max_step is None else max_step  # keeps RK4 damping of the top mode small
    n = max(1, math.ceil(abs(s) / h))
    ds = s / n
    n0 = norm(psi, grid)

    def f(u):
        return (1j / params.hbar) * apply_p(X, u, params)

    u = psi
    for _ in range(n):
        k1 = f(u)
        k2 = f(u + 0.5 * ds * k1)
        k3 = f(u + 0.5 * ds * k2)
        k4 = f(u + ds * k3)
        u = u + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    drift = abs(norm(u, grid) - n0) / n0
    if drift > norm_tol:
        raise FlowError(f"numeric flow norm drift {drift:.3e} exceeds {norm_tol:.1e} ({n} steps of {ds:.3e})")
    return u


# --------------------------------------------------------------------------
# Residual harnesses
# --------------------------------------------------------------------------


def test_vectors(grid: Grid, count: int = 6, degree: int | None = None, seed: int = 0) -> list[np.ndarray]:
    degree = _max_degree(grid, 8) if degree is None else degree
    return random_band_limited(np.random.default_rng(seed), grid, degree, count)


def _sup_ratio(diffs, vectors, grid):
    return max(norm(d, grid) / norm(v, grid) for d, v in zip(diffs, vectors))


def _check_degree(grid, *objs):
    limit = _max_degree(grid, 8)
    for o in objs:
        if o is not None and o.degree > limit:
            raise KinematicsError(f"test data degree {o.degree} exceeds N/8 = {limit}")


def connection_for_field(field, grid: Grid) -> OneForm:
    """One-form A with dA = e phi for a zero-flux two-form (Coulomb gauge).

    Nonzero total flux needs a nontrivial bundle, which has no periodic
    connection form on the trivial bundle and is rejected.
    """
    from .geometry import _fft, _ifft  # local: private helpers

    phi = field.e * field.phi.phi12
    if abs(np.mean(phi)) > 1e-12 * (1 + np.max(np.abs(phi))):
        raise KinematicsError("net flux is nonzero; no connection form on the trivial bundle")
    k1, k2 = grid.wavenumbers
    ksq = k1**2 + k2**2
    ksq_safe = np.where(ksq == 0, 1.0, ksq)
    chi_hat = np.where(ksq == 0, 0.0, -_fft(phi, grid) / ksq_safe)
    d1, d2 = grid.derivative_wavenumbers
    A1 = np.real(_ifft(-1j * d2 * chi_hat, grid))
    A2 = np.real(_ifft(1j * d1 * chi_hat, grid))
    return OneForm(grid, (A1, A2), closed_tol=np.inf)


def commutator_residual(
    kind: str,
    params: KinematicsParams,
    f: TrigPoly | None = None,
    g: TrigPoly | None = None,
    X: VectorFieldSpec | None = None,
    Y: VectorFieldSpec | None = None,
    field=None,
    vectors: Sequence[np.ndarray] | None = None,
    check_degree: bool = True,
) -> float:
    """sup_psi ||(LHS - RHS) psi|| / ||psi|| for one commutation relation.

    kinds:  QQ  [Q(f),Q(g)] = 0
            PQ  [P(X),Q(f)] = (hbar/i) Q(L_X f)
            PP  [P(X),P(Y)] = (hbar/i) P([X,Y])
            PP_magnetic  [P(X),P(Y)] = (hbar/i) (P([X,Y]) + e Q(phi(X,Y)))
    """
    grid = params.grid
    vectors = test_vectors(grid) if vectors is None else list(vectors)
    if check_degree:
        _check_degree(grid, f, g, X, Y)
    hbar = params.hbar
    diffs = []
    if kind == "QQ":
        for psi in vectors:
            diffs.append(apply_q(f, apply_q(g, psi, grid), grid) - apply_q(g, apply_q(f, psi, grid), grid))
    elif kind == "PQ":
        Lf = X.lie_derivative(f)
        for psi in vectors:
            lhs = apply_p(X, apply_q(f, psi, grid), params) - apply_q(f, apply_p(X, psi, params), grid)
            diffs.append(lhs - (hbar / 1j) * apply_q(Lf, psi, grid))
    elif kind in ("PP", "PP_magnetic"):
        conn = None
        if kind == "PP_magnetic":
            if field is None:
                raise KinematicsError("PP_magnetic needs a FieldConfig")
            conn = connection_for_field(field, grid)
            if not params.omega.is_zero:
                conn = OneForm(grid, tuple(a + w for a, w in zip(conn.components, params.omega.components)),
                               closed_tol=np.inf)
        XY = X.bracket(Y)
        for psi in vectors:
            lhs = (apply_p(X, apply_p(Y, psi, params, conn), params, conn)
                   - apply_p(Y, apply_p(X, psi, params, conn), params, conn))
            rhs = apply_p(XY, psi, params, conn)
            if conn is not None:
                rhs = rhs + field.e * field.phi(X.on(grid), Y.on(grid)) * psi
            diffs.append(lhs - (hbar / 1j) * rhs)
    else:
        raise KinematicsError(f"unknown commutator kind {kind!r}")
    return _sup_ratio(diffs, vectors, grid)


def linearity_residual(
    kind: str,
    params: KinematicsParams,
    alpha: float,
    f: TrigPoly | None = None,
    g: TrigPoly | None = None,
    X: VectorFieldSpec | None = None,
    Y: VectorFieldSpec | None = None,
    vectors: Sequence[np.ndarray] | None = None,
) -> float:
    """Qlin: Q(f) + a Q(g) = Q(f + a g);  partadd: P(X) + a P(Y) = P(X + a Y)."""
    grid = params.grid
    vectors = test_vectors(grid) if vectors is None else list(vectors)
    diffs = []
    for psi in vectors:
        if kind == "Qlin":
            diffs.append(apply_q(f, psi, grid) + alpha * apply_q(g, psi, grid) - apply_q(f + alpha * g, psi, grid))
        elif kind == "partadd":
            diffs.append(apply_p(X, psi, params) + alpha * apply_p(Y, psi, params) - apply_p(X + alpha * Y, psi, params))
        else:
            raise KinematicsError(f"unknown linearity kind {kind!r}")
    return _sup_ratio(diffs, vectors, grid)


def imprimitivity_residual(
    X: VectorFieldSpec,
    s: float,
    B: BorelSet,
    params: KinematicsParams,
    vectors: Sequence[np.ndarray] | None = None,
) -> float:
    """sup_psi || V_s E(B) V_{-s} psi - E(Phi_{-s} B) psi || / ||psi||.

    V_s = exp(isP(X)/hbar) pulls states back along the flow
    ((V_s psi)(x) ~ psi(x + sX)), so the conjugated projection localizes on
    the set carried backwards by s.
    """
    grid = params.grid
    if not X.is_constant:
        raise KinematicsError("imprimitivity check needs a constant vector field (exact flow)")
    vectors = test_vectors(grid) if vectors is None else list(vectors)
    shift = [-s * a for a in X.constant_values]
    target = B.translated(shift, grid)
    diffs = []
    for psi in vectors:
        lhs = flow_unitary(X, s, apply_e(B, flow_unitary(X, -s, psi, params), grid), params)
        diffs.append(lhs - apply_e(target, psi, grid))
    return _sup_ratio(diffs, vectors, grid)


def momentum_spectrum(params: KinematicsParams, d: int = 0, verify: bool = True, tol: float = 1e-10) -> list[float]:
    """Eigenvalues of P(d/dx^d) on the resolved plane-wave band.

    Each plane wave exp(2 pi i k x/L) is an eigenvector with eigenvalue
    hbar k 2pi/L + theta_d; ``verify`` applies P to every basis vector and
    checks this.  The Nyquist mode is excluded (no resolved derivative).
    """
    grid = params.grid
    if grid.manifold.kind not in (ManifoldKind.CIRCLE, ManifoldKind.TORUS2):
        raise KinematicsError("momentum spectrum needs a circle or torus")
    if not params.omega.is_constant:
        raise KinematicsError("momentum spectrum needs a constant one-form")
    n, L = grid.shape[d], grid.extents[d]
    unit = 2 * math.pi / L
    theta = params.theta[d]
    band = range(-(n // 2) + 1, n // 2)
    values = [params.hbar * k * unit + theta for k in band]
    if verify:
        X = VectorFieldSpec.coordinate(d, grid.extents)
        x = grid.coords[d]
        for k, lam in zip(band, values):
            e_k = np.exp(1j * k * unit * x)
            err = np.max(np.abs(apply_p(X, e_k, params) - lam * e_k))
            if err > tol * (1 + abs(lam)):
                raise KinematicsError(f"plane wave k={k} is not an eigenvector (error {err:.2e})")
    return sorted(values)


def spectra_equivalent(a: KinematicsParams, b: KinematicsParams, d: int = 0, tol: float = 1e-12) -> bool:
    """True iff theta_a - theta_b is a lattice multiple and the spectra agree
    as sets on the window both bands resolve."""
    unit = a.theta_lattice[d]
    shift = (b.theta[d] - a.theta[d]) / unit
    m = round(shift)
    if abs(shift - m) > 1e-9:
        return False
    sa = np.array(momentum_spectrum(a, d))
    sb = np.array(momentum_spectrum(b, d))
    lo, hi = max(sa[0], sb[0]), min(sa[-1], sb[-1])
    wa = sa[(sa >= lo - tol) & (sa <= hi + tol)]
    wb = sb[(sb >= lo - tol) & (sb <= hi + tol)]
    return len(wa) == len(wb) and bool(np.all(np.abs(wa - wb) <= tol * (1 + np.abs(wa))))
