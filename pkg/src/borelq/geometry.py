"""Flat periodic manifolds, uniform grids and pseudospectral calculus.

Every manifold is discretized on a uniform periodic grid and all derivatives
are taken in frequency space.  The metric is constant and diagonal, so the
volume measure is a constant multiple of the coordinate measure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class GeometryError(ValueError):
    """Invalid manifold, grid, or field/grid mismatch."""


class ManifoldKind(str, enum.Enum):
    CIRCLE = "circle"
    TORUS2 = "torus2"
    LINE_SEGMENT = "line_segment"

    @property
    def ndim(self) -> int:
        return 2 if self is ManifoldKind.TORUS2 else 1

    @property
    def code(self) -> int:
        return list(ManifoldKind).index(self)

    @classmethod
    def from_code(cls, code: int) -> "ManifoldKind":
        return list(cls)[code]


@dataclass(frozen=True)
class ManifoldSpec:
    kind: ManifoldKind
    extents: tuple[float, ...]
    metric_diag: tuple[float, ...] | None = None

    def __post_init__(self):
        kind = ManifoldKind(self.kind)
        object.__setattr__(self, "kind", kind)
        extents = tuple(float(L) for L in np.atleast_1d(self.extents))
        metric = self.metric_diag
        metric = (1.0,) * kind.ndim if metric is None else tuple(float(g) for g in np.atleast_1d(metric))
        if len(extents) != kind.ndim or len(metric) != kind.ndim:
            raise GeometryError(
                f"{kind.value} needs {kind.ndim} extents and metric entries, "
                f"got {len(extents)} and {len(metric)}"
            )
        if not all(L > 0 and math.isfinite(L) for L in extents):
            raise GeometryError(f"extents must be positive, got {extents}")
        if not all(g > 0 and math.isfinite(g) for g in metric):
            raise GeometryError(f"metric_diag must be positive, got {metric}")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "metric_diag", metric)

    @classmethod
    def circle(cls, length: float = 2 * math.pi, metric: float = 1.0) -> "ManifoldSpec":
        return cls(ManifoldKind.CIRCLE, (length,), (metric,))

    @classmethod
    def torus2(cls, extents=(2 * math.pi, 2 * math.pi), metric=(1.0, 1.0)) -> "ManifoldSpec":
        return cls(ManifoldKind.TORUS2, tuple(extents), tuple(metric))

    @classmethod
    def line_segment(cls, length: float, metric: float = 1.0) -> "ManifoldSpec":
        return cls(ManifoldKind.LINE_SEGMENT, (length,), (metric,))

    @property
    def ndim(self) -> int:
        return self.kind.ndim

    @property
    def sqrt_det_g(self) -> float:
        return math.sqrt(math.prod(self.metric_diag))

    @property
    def inverse_metric(self) -> tuple[float, ...]:
        return tuple(1.0 / g for g in self.metric_diag)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic sampling of a manifold.

    Sample ``i`` along dimension ``d`` sits at ``i * L_d / N_d``.
    """

    manifold: ManifoldSpec
    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if len(shape) != self.manifold.ndim:
            raise GeometryError(f"grid shape {shape} does not match {self.manifold.kind.value}")
        for n in shape:
            if n < 4 or n & (n - 1):
                raise GeometryError(f"points per dimension must be a power of two >= 4, got {n}")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def uniform(cls, manifold: ManifoldSpec, n: int | Sequence[int]) -> "Grid":
        if np.isscalar(n):
            n = (int(n),) * manifold.ndim
        return cls(manifold, tuple(n))

    def __eq__(self, other):
        return isinstance(other, Grid) and self.manifold == other.manifold and self.shape == other.shape

    def __hash__(self):
        return hash((self.manifold, self.shape))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def extents(self) -> tuple[float, ...]:
        return self.manifold.extents

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.shape))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing) * self.manifold.sqrt_det_g

    @property
    def total_volume(self) -> float:
        return math.prod(self.extents) * self.manifold.sqrt_det_g

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.arange(n) * (L / n) for L, n in zip(self.extents, self.shape))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def modes(self) -> tuple[np.ndarray, ...]:
        """Integer Fourier mode numbers, broadcastable against the grid."""
        out = []
        for d, n in enumerate(self.shape):
            m = np.fft.fftfreq(n, 1.0 / n)
            view = [1] * self.ndim
            view[d] = n
            out.append(m.reshape(view))
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(2 * math.pi / L * m for L, m in zip(self.extents, self.modes))

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode has no odd derivative on an even grid.
        out = []
        for d, (k, n) in enumerate(zip(self.wavenumbers, self.shape)):
            k = k.copy()
            k[(slice(None),) * d + (n // 2,)] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        ginv = self.manifold.inverse_metric
        return -sum(gi * k**2 for gi, k in zip(ginv, self.wavenumbers))

    def check(self, values: np.ndarray, what: str = "field") -> np.ndarray:
        values = np.asarray(values)
        if values.shape != self.shape:
            raise GeometryError(f"{what} has shape {values.shape}, grid is {self.shape}")
        return values

    def index_of(self, x: float, d: int = 0, tol: float = 1e-9) -> int:
        """Grid index of coordinate ``x`` along ``d``; raises if not on the grid."""
        h = self.spacing[d]
        q = x / h
        i = round(q)
        if abs(q - i) > tol * max(1.0, abs(q)):
            raise GeometryError(f"coordinate {x!r} is not aligned to the grid (spacing {h!r})")
        return int(i)

    def boundary_mass(self, rho: np.ndarray, fraction: float = 0.1) -> float:
        """Mass within the outer ``fraction`` of a line segment (half at each end)."""
        rho = self.check(rho, "density")
        x = self.coords[0]
        L = self.extents[0]
        edge = (x < 0.5 * fraction * L) | (x >= (1 - 0.5 * fraction) * L)
        return float(np.sum(rho[edge]).real * self.cell_volume)


# --------------------------------------------------------------------------
# Trigonometric polynomials (test data, vector-field components, probes)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigPoly:
    """Finite Fourier sum  sum_k c_k exp(i k.x 2pi/L)  with integer modes ``k``."""

    coeffs: Mapping[tuple[int, ...], complex]
    periods: tuple[float, ...]

    def __post_init__(self):
        periods = tuple(float(p) for p in np.atleast_1d(self.periods))
        clean = {}
        for k, c in self.coeffs.items():
            k = tuple(int(v) for v in np.atleast_1d(k))
            if len(k) != len(periods):
                raise GeometryError(f"mode {k} does not match dimension {len(periods)}")
            c = complex(c)
            if c != 0:
                clean[k] = clean.get(k, 0) + c
        object.__setattr__(self, "coeffs", clean)
        object.__setattr__(self, "periods", periods)

    # constructors
    @classmethod
    def zero(cls, periods) -> "TrigPoly":
        return cls({}, tuple(np.atleast_1d(periods)))

    @classmethod
    def const(cls, value: float, periods) -> "TrigPoly":
        periods = tuple(np.atleast_1d(periods))
        return cls({(0,) * len(periods): value}, periods)

    @classmethod
    def cos(cls, mode, periods, amplitude: float = 1.0) -> "TrigPoly":
        mode = tuple(np.atleast_1d(mode))
        neg = tuple(-m for m in mode)
        return cls({mode: amplitude / 2, neg: amplitude / 2}, periods)

    @classmethod
    def sin(cls, mode, periods, amplitude: float = 1.0) -> "TrigPoly":
        mode = tuple(np.atleast_1d(mode))
        neg = tuple(-m for m in mode)
        return cls({mode: amplitude / 2j, neg: -amplitude / 2j}, periods)

    @classmethod
    def random(cls, rng: np.random.Generator, degree: int, periods, real: bool = True) -> "TrigPoly":
        periods = tuple(np.atleast_1d(periods))
        ranges = [range(-degree, degree + 1)] * len(periods)
        coeffs = {}
        for k in np.array(np.meshgrid(*ranges, indexing="ij")).reshape(len(periods), -1).T:
            k = tuple(int(v) for v in k)
            coeffs[k] = complex(rng.normal(), rng.normal()) / (1 + sum(map(abs, k)))
        if real:
            coeffs = {k: 0.5 * (c + np.conj(coeffs[tuple(-v for v in k)])) for k, c in coeffs.items()}
        return cls(coeffs, periods)

    @property
    def ndim(self) -> int:
        return len(self.periods)

    @property
    def degree(self) -> int:
        return max((max(map(abs, k)) for k in self.coeffs), default=0)

    @property
    def is_real(self) -> bool:
        return all(abs(c - np.conj(self.coeffs.get(tuple(-v for v in k), 0))) < 1e-14 * (1 + abs(c))
                   for k, c in self.coeffs.items())

    @property
    def is_constant(self) -> bool:
        return all(not any(k) for k in self.coeffs)

    @property
    def mean(self) -> complex:
        return self.coeffs.get((0,) * self.ndim, 0j)

    def __call__(self, *x) -> np.ndarray:
        """Evaluate at coordinate arrays ``x[0], ..., x[d-1]`` (broadcast)."""
        if len(x) == 1 and self.ndim > 1:
            x = tuple(x[0])
        x = [np.asarray(xi, dtype=float) for xi in x]
        out = np.zeros(np.broadcast(*x).shape, dtype=complex) if x else 0j
        for k, c in self.coeffs.items():
            phase = sum(kd * 2 * math.pi / L * xd for kd, L, xd in zip(k, self.periods, x))
            out = out + c * np.exp(1j * phase)
        return out

    def real_values(self, *x) -> np.ndarray:
        return np.real(self(*x))

    def on(self, grid: Grid) -> np.ndarray:
        if grid.ndim != self.ndim:
            raise GeometryError("trigonometric polynomial and grid dimension differ")
        return self(*grid.coords)

    def derivative(self, d: int) -> "TrigPoly":
        k2 = 2 * math.pi / self.periods[d]
        return TrigPoly({k: 1j * k[d] * k2 * c for k, c in self.coeffs.items()}, self.periods)

    def _check(self, other: "TrigPoly"):
        if self.periods != other.periods:
            raise GeometryError("trigonometric polynomials live on different periods")

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            other = TrigPoly.const(other, self.periods)
        self._check(other)
        coeffs = dict(self.coeffs)
        for k, c in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0) + c
        return TrigPoly(coeffs, self.periods)

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly({k: -c for k, c in self.coeffs.items()}, self.periods)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, TrigPoly):
            return TrigPoly({k: c * other for k, c in self.coeffs.items()}, self.periods)
        self._check(other)
        coeffs: dict = {}
        for k1, c1 in self.coeffs.items():
            for k2, c2 in other.coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                coeffs[k] = coeffs.get(k, 0) + c1 * c2
        return TrigPoly(coeffs, self.periods)

    __rmul__ = __mul__


# --------------------------------------------------------------------------
# Forms
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OneForm:
    """Real one-form sampled on a grid; ``components[d]`` is omega_d."""

    grid: Grid
    components: tuple[np.ndarray, ...]
    closed_tol: float = 1e-9
    closed: bool = field(init=False)

    def __post_init__(self):
        comps = []
        for c in self.components:
            c = np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape).copy()
            comps.append(c)
        if len(comps) != self.grid.ndim:
            raise GeometryError(f"one-form needs {self.grid.ndim} components, got {len(comps)}")
        object.__setattr__(self, "components", tuple(comps))
        object.__setattr__(self, "closed", self.curl_norm() <= self.closed_tol)

    @classmethod
    def constant(cls, grid: Grid, theta) -> "OneForm":
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (grid.ndim,))
        return cls(grid, tuple(np.full(grid.shape, t) for t in theta))

    @classmethod
    def zero(cls, grid: Grid) -> "OneForm":
        return cls.constant(grid, 0.0)

    @classmethod
    def exact(cls, grid: Grid, potential: np.ndarray, theta=0.0) -> "OneForm":
        """theta + d(potential) for a real periodic potential."""
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (grid.ndim,))
        dchi = partials(np.asarray(potential, dtype=float), grid)
        return cls(grid, tuple(t + np.real(p) for t, p in zip(theta, dchi)))

    def curl_norm(self) -> float:
        if self.grid.ndim < 2:
            return 0.0
        d = [partials(c, self.grid) for c in self.components]
        curl = d[1][0] - d[0][1]
        return float(np.max(np.abs(curl)))

    @property
    def is_constant(self) -> bool:
        return all(np.ptp(c) == 0.0 for c in self.components)

    @property
    def harmonic_part(self) -> tuple[float, ...]:
        """Grid mean of each component (the cohomology class on a torus)."""
        if self.is_constant:  # exact, no summation rounding
            return tuple(float(c.flat[0]) for c in self.components)
        return tuple(float(np.mean(c)) for c in self.components)

    @property
    def is_zero(self) -> bool:
        return all(not np.any(c) for c in self.components)

    def contract(self, vector: Sequence[np.ndarray]) -> np.ndarray:
        """omega(X) = sum_d omega_d X^d."""
        return sum(c * v for c, v in zip(self.components, vector))

    def raised(self) -> tuple[np.ndarray, ...]:
        """g^sharp omega."""
        ginv = self.grid.manifold.inverse_metric
        return tuple(gi * c for gi, c in zip(ginv, self.components))


@dataclass(frozen=True, eq=False)
class TwoForm:
    """Real two-form on the 2-torus, stored by its single component phi_12."""

    grid: Grid
    phi12: np.ndarray

    def __post_init__(self):
        if self.grid.manifold.kind is not ManifoldKind.TORUS2:
            raise GeometryError("two-forms are only supported on the 2-torus")
        phi = np.broadcast_to(np.asarray(self.phi12, dtype=float), self.grid.shape).copy()
        object.__setattr__(self, "phi12", phi)

    @classmethod
    def constant(cls, grid: Grid, phi0: float) -> "TwoForm":
        return cls(grid, np.full(grid.shape, float(phi0)))

    def component(self, a: int, b: int) -> np.ndarray:
        if a == b:
            return np.zeros(self.grid.shape)
        return self.phi12 if (a, b) == (0, 1) else -self.phi12

    def __call__(self, X: Sequence[np.ndarray], Y: Sequence[np.ndarray]) -> np.ndarray:
        """phi(X, Y) = phi_12 (X^1 Y^2 - X^2 Y^1)."""
        return self.phi12 * (X[0] * Y[1] - X[1] * Y[0])


# --------------------------------------------------------------------------
# Spectral calculus
# --------------------------------------------------------------------------


def _fft(f, grid):
    return np.fft.fftn(grid.check(f), axes=tuple(range(grid.ndim)))


def _ifft(F, grid):
    return np.fft.ifftn(F, axes=tuple(range(grid.ndim)))


def partials(field: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Coordinate partial derivatives d_d field (no metric)."""
    F = _fft(field, grid)
    out = [_ifft(1j * k * F, grid) for k in grid.derivative_wavenumbers]
    if not np.iscomplexobj(field):
        out = [np.real(o) for o in out]
    return out


def gradient(field: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """grad_g f: contravariant components g^{dd} d_d f."""
    ginv = grid.manifold.inverse_metric
    return [gi * p for gi, p in zip(ginv, partials(field, grid))]


def divergence(vfield: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    """div_mu X = sum_d d_d X^d (constant volume density)."""
    if len(vfield) != grid.ndim:
        raise GeometryError(f"vector field has {len(vfield)} components, grid has {grid.ndim} dims")
    total = 0
    complex_in = False
    for k, comp in zip(grid.derivative_wavenumbers, vfield):
        comp = np.broadcast_to(comp, grid.shape)
        complex_in |= np.iscomplexobj(comp)
        total = total + 1j * k * _fft(comp, grid)
    out = _ifft(total, grid)
    return out if complex_in else np.real(out)


def laplacian(field: np.ndarray, grid: Grid) -> np.ndarray:
    out = _ifft(grid.laplacian_symbol * _fft(field, grid), grid)
    return out if np.iscomplexobj(field) else np.real(out)


def twisted_laplacian(
    field: np.ndarray,
    omega: OneForm,
    hbar: float,
    grid: Grid,
    coupling: float | None = None,
) -> np.ndarray:
    """(div + i a omega) o (grad + i a g^sharp omega) applied to ``field``.

    ``a`` defaults to 1/(2 hbar).  Constant forms use shifted wavenumbers;
    other closed forms go through the explicit composition.
    """
    if not omega.closed:
        raise GeometryError(f"one-form is not closed (curl {omega.curl_norm():.3e})")
    if omega.is_zero:
        return laplacian(field, grid)
    a = 1.0 / (2.0 * hbar) if coupling is None else coupling
    if omega.is_constant:
        ginv = grid.manifold.inverse_metric
        shift = [a * c.flat[0] for c in omega.components]
        symbol = -sum(gi * (k + s) ** 2 for gi, k, s in zip(ginv, grid.wavenumbers, shift))
        return _ifft(symbol * _fft(field, grid), grid)
    field = np.asarray(field, dtype=complex)
    A = [a * c for c in omega.components]
    ginv = grid.manifold.inverse_metric
    cov = [gi * (p + 1j * Ad * field) for gi, p, Ad in zip(ginv, partials(field, grid), A)]
    return divergence(cov, grid) + 1j * sum(Ad * v for Ad, v in zip(A, cov))


def integrate(field: np.ndarray, grid: Grid):
    """Rectangle-rule quadrature against the metric volume measure."""
    s = np.sum(grid.check(field)) * grid.cell_volume
    return complex(s) if np.iscomplexobj(s) else float(s)


def inner(phi: np.ndarray, psi: np.ndarray, grid: Grid) -> complex:
    """<phi|psi>, antilinear in the first slot."""
    return complex(np.vdot(grid.check(phi), grid.check(psi)) * grid.cell_volume)


def norm(psi: np.ndarray, grid: Grid) -> float:
    return math.sqrt(max(inner(psi, psi, grid).real, 0.0))


def two_form_integral(phi: TwoForm, grid: Grid | None = None) -> float:
    """Integral of phi over the fundamental 2-cycle of the torus."""
    grid = phi.grid if grid is None else grid
    if grid.manifold.kind is not ManifoldKind.TORUS2:
        raise GeometryError(f"no fundamental 2-cycle available on {grid.manifold.kind.value}")
    # Coordinate area element: the two-form carries its own density.
    return float(np.sum(phi.phi12) * math.prod(grid.spacing))


def band_limit_degree(values: np.ndarray, grid: Grid, tol: float = 1e-12) -> int:
    """Largest |mode| carrying relative spectral weight above ``tol``."""
    F = np.abs(_fft(values, grid))
    if F.max() == 0:
        return 0
    mask = F > tol * F.max()
    deg = 0
    for m in grid.modes:
        deg = max(deg, int(np.max(np.abs(np.broadcast_to(m, grid.shape)[mask]))))
    return deg


def random_band_limited(rng: np.random.Generator, grid: Grid, degree: int, count: int) -> list[np.ndarray]:
    """Normalized random complex test vectors of the given Fourier degree."""
    out = []
    for _ in range(count):
        psi = TrigPoly.random(rng, degree, grid.extents, real=False).on(grid)
        out.append(psi / norm(psi, grid))
    return out


def as_components(values: Iterable) -> list[np.ndarray]:
    return [np.asarray(v) for v in values]
