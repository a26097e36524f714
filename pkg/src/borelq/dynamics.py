"""Nonlinear Schroedinger family with the five R_j functionals.

    i hbar dpsi/dt = (-hbar^2/2 Lap^omega + V) psi + i (hbar c/2)(Lap rho/rho) psi
                     + (sum_j d_j R_j[psi]) psi

integrated by the method of lines (classic RK4, spectral derivatives), with
per-step continuity (Fokker-Planck) and Ehrenfest diagnostics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    Grid,
    OneForm,
    TrigPoly,
    divergence,
    gradient,
    integrate,
    inner,
    laplacian,
    norm,
    partials,
    twisted_laplacian,
)
from .kinematics import KinematicsParams, VectorFieldSpec, apply_p

log = logging.getLogger(__name__)

TWIST_COUPLING = {"half": 0.5, "minimal": 1.0}  # a = factor / hbar
CURRENT_PREFACTOR = {"doubled": 2.0, "conventional": 1.0}  # j = factor * hbar Im(conj(psi) grad psi) + rho g#omega


class DynamicsError(ValueError):
    pass


class DensityFloorError(DynamicsError):
    pass


class EvolutionAbort(RuntimeError):
    """Run stopped early; ``result`` holds everything computed so far."""

    def __init__(self, message: str, result: "EvolutionResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True, eq=False)
class DGParams:
    kin: KinematicsParams
    potential: np.ndarray | float = 0.0
    d_coeffs: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)
    dt: float = 1e-3
    density_floor: float | None = None
    twist_convention: str = "half"
    current_convention: str = "doubled"
    stability_factor: float = 0.5

    def __post_init__(self):
        grid = self.kin.grid
        V = np.broadcast_to(np.asarray(self.potential, dtype=float), grid.shape).copy()
        if not np.all(np.isfinite(V)):
            raise DynamicsError("potential must be finite")
        object.__setattr__(self, "potential", V)
        d = tuple(float(x) for x in self.d_coeffs)
        if len(d) != 5 or not all(math.isfinite(x) for x in d):
            raise DynamicsError(f"d_coeffs must be five finite reals, got {self.d_coeffs}")
        object.__setattr__(self, "d_coeffs", d)
        if not self.dt > 0:
            raise DynamicsError(f"dt must be positive, got {self.dt}")
        if self.density_floor is not None and self.density_floor < 0:
            raise DynamicsError("density_floor must be >= 0")
        if self.twist_convention not in TWIST_COUPLING:
            raise DynamicsError(f"twist_convention must be one of {sorted(TWIST_COUPLING)}")
        if self.current_convention not in CURRENT_PREFACTOR:
            raise DynamicsError(f"current_convention must be one of {sorted(CURRENT_PREFACTOR)}")

    @property
    def grid(self) -> Grid:
        return self.kin.grid

    @property
    def hbar(self) -> float:
        return self.kin.hbar

    @property
    def c(self) -> float:
        return self.kin.c

    @property
    def omega(self) -> OneForm:
        return self.kin.omega

    @property
    def coupling(self) -> float:
        return TWIST_COUPLING[self.twist_convention] / self.hbar

    @property
    def is_linear(self) -> bool:
        return self.c == 0 and not any(self.d_coeffs)

    @property
    def dt_bound(self) -> float:
        """Explicit-RK4 stability bound factor * min_d(h_d^2 g_dd) / (hbar * ndim)."""
        grid = self.grid
        hg = min(h * h * g for h, g in zip(grid.spacing, grid.manifold.metric_diag))
        return self.stability_factor * hg / (self.hbar * grid.ndim)

    def floor_for(self, rho: np.ndarray) -> float:
        if self.density_floor is not None:
            return self.density_floor
        return 1e-12 * float(np.max(rho))

    def replace(self, **changes) -> "DGParams":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return DGParams(**values)


# --------------------------------------------------------------------------
# Densities, currents, functionals
# --------------------------------------------------------------------------


def density(psi: np.ndarray) -> np.ndarray:
    return np.abs(psi) ** 2


def current(
    psi: np.ndarray,
    omega: OneForm,
    hbar: float,
    grid: Grid,
    convention: str = "doubled",
    tol: float = 1e-12,
) -> list[np.ndarray]:
    """Probability current j^omega.

    ``doubled``:      (hbar/i)(conj(psi) grad psi - psi grad conj(psi)) + rho g#omega
    ``conventional``: the same with hbar/2i.
    """
    pref = CURRENT_PREFACTOR[convention] / 2.0
    psi = grid.check(psi).astype(complex)
    rho = density(psi)
    gpsi = gradient(psi, grid)
    gbar = gradient(np.conj(psi), grid)
    raised = omega.raised()
    out = []
    amp = float(np.max(np.abs(psi)))
    for gp, gb, w in zip(gpsi, gbar, raised):
        j = pref * (hbar / 1j) * (np.conj(psi) * gp - psi * gb)
        resid = float(np.max(np.abs(j.imag)))
        if resid > tol * (hbar * amp * float(np.max(np.abs(gp))) + 1e-300):
            raise DynamicsError(f"current has imaginary residue {resid:.2e} (aliased input?)")
        out.append(j.real + rho * w)
    return out


def transport_current(psi: np.ndarray, params: DGParams) -> list[np.ndarray]:
    """Current carried by the kinetic term: hbar Im(conj(psi) g# D psi),
    D = d + i a omega with the run's twist coupling ``a``.  This is the
    current for which drho/dt + div j = c Lap rho holds along the flow."""
    grid = params.grid
    rho = density(psi)
    a = params.coupling * params.hbar
    return [params.hbar * np.imag(np.conj(psi) * gp) + a * rho * w
            for gp, w in zip(gradient(psi, grid), params.omega.raised())]


def _check_floor(rho, eps, grid):
    if np.min(rho) < eps:
        idx = np.unravel_index(int(np.argmin(rho)), rho.shape)
        where = tuple(float(ax[i]) for ax, i in zip(grid.axes, idx))
        raise DensityFloorError(
            f"density {float(np.min(rho)):.3e} below floor {eps:.3e} at index {idx} (x={where})"
        )


def rj_functionals(psi: np.ndarray, params: DGParams, strict: bool = True) -> list[np.ndarray]:
    """The five real functionals R_1..R_5 (divisions by max(rho, floor)).

    R1 = div j/rho, R2 = Lap rho/rho, R3 = g(j,j)/rho^2,
    R4 = d rho . j/rho^2, R5 = d rho . grad rho/rho^2
    """
    grid = params.grid
    rho = density(psi)
    eps = params.floor_for(rho)
    if strict:
        _check_floor(rho, eps, grid)
    rs = np.maximum(rho, eps if eps > 0 else np.finfo(float).tiny)
    j = current(psi, params.omega, params.hbar, grid, params.current_convention)
    drho = partials(rho, grid)
    g = grid.manifold.metric_diag
    R1 = divergence(j, grid) / rs
    R2 = laplacian(rho, grid) / rs
    R3 = sum(gd * jd * jd for gd, jd in zip(g, j)) / rs**2
    R4 = sum(dr * jd for dr, jd in zip(drho, j)) / rs**2
    R5 = sum(dr * dr / gd for dr, gd in zip(drho, g)) / rs**2
    return [np.real(R) for R in (R1, R2, R3, R4, R5)]


def rhs(psi: np.ndarray, params: DGParams) -> np.ndarray:
    """dpsi/dt."""
    grid, hbar = params.grid, params.hbar
    kinetic = -0.5 * hbar**2 * twisted_laplacian(psi, params.omega, hbar, grid, params.coupling)
    out = (kinetic + params.potential * psi) / (1j * hbar)
    if params.c != 0:
        rho = density(psi)
        eps = params.floor_for(rho)
        out = out + 0.5 * params.c * laplacian(rho, grid) / np.maximum(rho, eps) * psi
    if any(params.d_coeffs):
        R = rj_functionals(psi, params, strict=False)
        Rsum = sum(d * Rj for d, Rj in zip(params.d_coeffs, R) if d)
        out = out + Rsum * psi / (1j * hbar)
    return out


def rk4_step(psi: np.ndarray, params: DGParams, dt: float) -> np.ndarray:
    k1 = rhs(psi, params)
    k2 = rhs(psi + 0.5 * dt * k1, params)
    k3 = rhs(psi + 0.5 * dt * k2, params)
    k4 = rhs(psi + dt * k3, params)
    return psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


# --------------------------------------------------------------------------
# Diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Probe:
    """Expectation probe: <Q(f)> (with its Ehrenfest partner) and/or <P(X)>."""

    name: str
    f: TrigPoly | None = None
    X: VectorFieldSpec | None = None


def expectation_q(f: TrigPoly | np.ndarray, psi: np.ndarray, grid: Grid) -> float:
    values = f.on(grid) if isinstance(f, TrigPoly) else f
    return float(np.real(integrate(np.real(values) * density(psi), grid)))


def expectation_p(X: VectorFieldSpec, psi: np.ndarray, params: KinematicsParams) -> float:
    return float(np.real(inner(psi, apply_p(X, psi, params), params.grid)))


def ehrenfest_pair(f: TrigPoly, psi: np.ndarray, params: DGParams) -> tuple[float, float]:
    """(<Q(f)>, Re <P(grad_g f)>) with the run's own (c, omega)."""
    X = VectorFieldSpec.gradient_of(f, params.grid.manifold.metric_diag)
    return expectation_q(f, psi, params.grid), expectation_p(X, psi, params.kin)


def ehrenfest_residual(f: TrigPoly, snapshots: Sequence[np.ndarray], dt: float, params: DGParams) -> float:
    """max over interior snapshots of |central d/dt <Q(f)> - Re <P(grad_g f)>|."""
    if len(snapshots) < 3:
        raise DynamicsError("Ehrenfest residual needs at least 3 snapshots")
    pairs = [ehrenfest_pair(f, psi, params) for psi in snapshots]
    q = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    lhs = (q[2:] - q[:-2]) / (2 * dt)
    return float(np.max(np.abs(lhs - p[1:-1])))


def fokker_planck_residual(
    psi_a: np.ndarray,
    psi_b: np.ndarray,
    dt: float,
    params: DGParams,
    current_convention: str = "transport",
) -> float:
    """L2 norm of (rho_b - rho_a)/dt + div j_mid - c Lap rho_mid.

    ``transport`` uses the current carried by the run's kinetic term; "doubled"
    or "conventional" use :func:`current` with that prefactor instead.
    """
    grid = params.grid
    rho_a, rho_b = density(psi_a), density(psi_b)

    def j_of(psi):
        if current_convention == "transport":
            return transport_current(psi, params)
        return current(psi, params.omega, params.hbar, grid, current_convention)

    j_mid = [0.5 * (a + b) for a, b in zip(j_of(psi_a), j_of(psi_b))]
    rho_mid = 0.5 * (rho_a + rho_b)
    r = (rho_b - rho_a) / dt + divergence(j_mid, grid)
    if params.c != 0:
        r = r - params.c * laplacian(rho_mid, grid)
    return norm(r, grid)


@dataclass
class DiagnosticsRecord:
    time: float
    norm: float
    min_rho: float
    fp_residual: float
    expectations: dict[str, float] = field(default_factory=dict)
    ehrenfest: dict[str, float] = field(default_factory=dict)

    @property
    def ehrenfest_max(self) -> float:
        return max(self.ehrenfest.values(), default=0.0)


@dataclass
class EvolutionResult:
    times: list[float]
    snapshots: list[np.ndarray]
    records: list[DiagnosticsRecord]
    dt: float
    aborted: str | None = None

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def norm_drift(self) -> float:
        return abs(self.records[-1].norm - self.records[0].norm)

    @property
    def max_fp_residual(self) -> float:
        return max((r.fp_residual for r in self.records[1:]), default=0.0)

    @property
    def max_ehrenfest(self) -> float:
        return max((r.ehrenfest_max for r in self.records), default=0.0)


def _fill_ehrenfest(records, probes, q_series, p_series, dt):
    n = len(records)
    for probe in probes:
        if probe.f is None:
            continue
        q = np.array(q_series[probe.name])
        p = np.array(p_series[probe.name])
        if n >= 3:
            dq = np.gradient(q, dt, edge_order=2)
        elif n == 2:
            dq = np.full(2, (q[1] - q[0]) / dt)
        else:
            dq = p.copy()
        for rec, a, b in zip(records, dq, p):
            rec.ehrenfest[probe.name] = float(abs(a - b))


def evolve(
    psi0: np.ndarray,
    params: DGParams,
    T: float,
    probes: Sequence[Probe] = (),
    snapshot_every: int = 1,
    check_stability: bool = True,
    callback: Callable[[float, np.ndarray], None] | None = None,
) -> EvolutionResult:
    """Integrate from t=0 to T with classic RK4, collecting diagnostics.

    Aborts (raising :class:`EvolutionAbort` with partial results) on
    non-finite values, norm growth beyond 10x, or, for nonlinear runs,
    density below the floor.
    """
    grid = params.grid
    psi = grid.check(np.asarray(psi0, dtype=complex)).copy()
    if check_stability and params.dt > params.dt_bound:
        raise DynamicsError(f"dt={params.dt:g} exceeds stability bound {params.dt_bound:.4g}")
    if T < 0:
        raise DynamicsError("T must be >= 0")
    steps = int(math.ceil(T / params.dt - 1e-9)) if T > 0 else 0
    dt = T / steps if steps else params.dt

    q_series: dict[str, list[float]] = {p.name: [] for p in probes}
    p_series: dict[str, list[float]] = {p.name: [] for p in probes}
    grad_fields = {p.name: VectorFieldSpec.gradient_of(p.f, grid.manifold.metric_diag)
                   for p in probes if p.f is not None}

    def record(t, psi, prev):
        rho = density(psi)
        rec = DiagnosticsRecord(
            time=t,
            norm=float(integrate(rho, grid)),
            min_rho=float(np.min(rho)),
            fp_residual=0.0 if prev is None else fokker_planck_residual(prev, psi, dt, params),
        )
        for probe in probes:
            if probe.f is not None:
                q = expectation_q(probe.f, psi, grid)
                pg = expectation_p(grad_fields[probe.name], psi, params.kin)
                q_series[probe.name].append(q)
                p_series[probe.name].append(pg)
                rec.expectations[f"Q[{probe.name}]"] = q
                rec.expectations[f"P[grad {probe.name}]"] = pg
            if probe.X is not None:
                rec.expectations[f"P[{probe.name}]"] = expectation_p(probe.X, psi, params.kin)
        return rec

    result = EvolutionResult([0.0], [psi.copy()], [record(0.0, psi, None)], dt)
    norm0 = result.records[0].norm
    if norm0 <= 0 or not np.isfinite(norm0):
        raise DynamicsError("initial state must have finite positive norm")
    if not params.is_linear:
        _check_floor(density(psi), params.floor_for(density(psi)), grid)

    def abort(msg):
        result.aborted = msg
        _fill_ehrenfest(result.records, probes, q_series, p_series, dt)
        log.warning("evolution aborted: %s", msg)
        raise EvolutionAbort(msg, result)

    for n in range(1, steps + 1):
        prev = psi
        psi = rk4_step(psi, params, dt)
        t = n * dt
        if not np.all(np.isfinite(psi)):
            abort(f"non-finite wavefunction at step {n} (t={t:.6g})")
        rec = record(t, psi, prev)
        result.records.append(rec)
        if rec.norm > 10 * norm0:
            abort(f"norm grew to {rec.norm:.3e} (> 10x initial) at t={t:.6g}; dt too large?")
        if not params.is_linear and rec.min_rho < params.floor_for(density(psi)):
            abort(f"density floor violated at t={t:.6g} (min rho {rec.min_rho:.3e})")
        if n % snapshot_every == 0 or n == steps:
            result.times.append(t)
            result.snapshots.append(psi.copy())
            if callback is not None:
                callback(t, psi)
    _fill_ehrenfest(result.records, probes, q_series, p_series, dt)
    return result


# --------------------------------------------------------------------------
# Initial states
# --------------------------------------------------------------------------


def plane_wave(grid: Grid, modes: Sequence[int], normalized: bool = True) -> np.ndarray:
    modes = np.atleast_1d(modes)
    phase = sum(2 * math.pi * k / L * x for k, L, x in zip(modes, grid.extents, grid.coords))
    psi = np.exp(1j * phase)
    return psi / norm(psi, grid) if normalized else psi


def periodic_gaussian(grid: Grid, center, width, modes=None, normalized: bool = True) -> np.ndarray:
    """Gaussian bump summed over periodic images (three per side)."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.ndim,))
    width = np.broadcast_to(np.asarray(width, dtype=float), (grid.ndim,))
    psi = np.ones(grid.shape, dtype=complex)
    for x, c, w, L in zip(grid.coords, center, width, grid.extents):
        acc = np.zeros(grid.shape)
        for m in range(-3, 4):
            acc += np.exp(-((x - c + m * L) ** 2) / (2 * w * w))
        psi = psi * acc
    if modes is not None:
        psi = psi * plane_wave(grid, modes, normalized=False)
    return psi / norm(psi, grid) if normalized else psi


def superposition(grid: Grid, terms: Sequence[tuple[Sequence[int], complex]], normalized: bool = True) -> np.ndarray:
    psi = sum(complex(a) * plane_wave(grid, k, normalized=False) for k, a in terms)
    psi = np.asarray(psi, dtype=complex) * np.ones(grid.shape)
    return psi / norm(psi, grid) if normalized else psi


def free_superposition_at(grid: Grid, terms, t: float, hbar: float = 1.0) -> np.ndarray:
    """Exact solution of the linear free equation (omega = 0) for a plane-wave sum."""
    out = np.zeros(grid.shape, dtype=complex)
    ginv = grid.manifold.inverse_metric
    for k, a in terms:
        k = np.atleast_1d(k)
        ksq = sum(gi * (2 * math.pi * kd / L) ** 2 for gi, kd, L in zip(ginv, k, grid.extents))
        out += complex(a) * np.exp(-0.5j * hbar * ksq * t) * plane_wave(grid, k, normalized=False)
    return out
