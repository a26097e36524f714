"""Nonlinear gauge transformations N_(Lambda, gamma) and the linearization fit.

In polar form psi = sqrt(rho) exp(iS) the map reads

    (rho, S) -> (rho, Lambda S + (gamma/2) ln rho),

which is psi^((1+Lambda+i gamma)/2) conj(psi)^((1-Lambda+i gamma)/2) on the branch
fixed by the unwrapped phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DGParams, density, rj_functionals
from .geometry import Grid, laplacian, twisted_laplacian


class GaugeError(ValueError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaugeParams:
    lam: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.lam == 0 or not math.isfinite(self.lam) or not math.isfinite(self.gamma):
            raise GaugeError(f"need finite Lambda != 0 and finite gamma, got ({self.lam}, {self.gamma})")

    @property
    def is_identity(self) -> bool:
        return self.lam == 1 and self.gamma == 0

    def inverse(self) -> "GaugeParams":
        return GaugeParams(1.0 / self.lam, -self.gamma / self.lam)


IDENTITY = GaugeParams(1.0, 0.0)


def compose_gauge(g1: GaugeParams, g2: GaugeParams) -> GaugeParams:
    """Parameters of N_g1 o N_g2."""
    return GaugeParams(g1.lam * g2.lam, g1.gamma + g1.lam * g2.gamma)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def unwrapped_phase(psi: np.ndarray, grid: Grid) -> tuple[np.ndarray, list[np.ndarray]]:
    """Phase unwrapped along grid lines from the origin sample, plus windings.

    Returns ``(S, windings)`` where ``windings[d]`` holds the winding number
    (in turns, not rounded) of every grid line along dimension ``d``.
    """
    theta = np.angle(grid.check(psi))
    if grid.ndim == 1:
        S = np.unwrap(theta)
    else:
        S = np.unwrap(theta, axis=0)
        first_col = S[:, :1]
        S = np.unwrap(np.concatenate([first_col, theta[:, 1:]], axis=1), axis=1)
    windings = []
    for d in range(grid.ndim):
        last = np.take(S, [-1], axis=d)
        first = np.take(S, [0], axis=d)
        close = last + _wrap(np.take(theta, [0], axis=d) - np.take(theta, [-1], axis=d))
        windings.append(((close - first) / (2 * np.pi)).squeeze(axis=d))
    return S, windings


def apply_gauge(
    psi: np.ndarray,
    g: GaugeParams,
    grid: Grid,
    floor: float | None = None,
    anchor_phase: float | None = None,
) -> np.ndarray:
    """N_(Lambda, gamma)[psi] for a nodeless psi.

    The phase branch is anchored at the grid origin: its principal value, or
    the value nearest ``anchor_phase`` when given (used to keep a time series
    on one branch).
    """
    psi = grid.check(np.asarray(psi, dtype=complex))
    rho = density(psi)
    floor = 1e-12 * float(np.max(rho)) if floor is None else floor
    if np.min(rho) <= floor:
        idx = np.unravel_index(int(np.argmin(rho)), rho.shape)
        raise GaugeError(f"wavefunction has a node (rho={float(np.min(rho)):.2e}) at index {idx}")
    if g.is_identity:
        return psi.copy()
    S, windings = unwrapped_phase(psi, grid)
    w = np.concatenate([np.ravel(x) for x in windings])
    if np.max(np.abs(w - np.round(w))) > 1e-6:
        raise GaugeError("phase is under-resolved on the grid (non-integer winding)")
    if g.lam != round(g.lam) and np.any(np.round(w) != 0):
        raise GaugeError(
            f"non-integer Lambda={g.lam} on a state with winding {int(np.round(w).max())}: "
            "transformed state would be multivalued (seam mismatch)"
        )
    if anchor_phase is not None:
        S = S + 2 * np.pi * np.round((anchor_phase - S.flat[0]) / (2 * np.pi))
    new_phase = g.lam * S + 0.5 * g.gamma * np.log(rho)
    return np.sqrt(rho) * np.exp(1j * new_phase)


def anchor_phase_of(psi: np.ndarray, g: GaugeParams, reference: float | None = None) -> float:
    """Origin phase used by apply_gauge, continued from ``reference``."""
    s0 = float(np.angle(psi.flat[0]))
    if reference is not None:
        s0 += 2 * np.pi * round((reference - s0) / (2 * np.pi))
    return s0


def gauge_series(snapshots, g: GaugeParams, grid: Grid) -> list[np.ndarray]:
    """Transform a time series, keeping the origin phase continuous in time."""
    out = []
    anchor = None
    for psi in snapshots:
        anchor = anchor_phase_of(psi, g, anchor)
        out.append(apply_gauge(psi, g, grid, anchor_phase=anchor))
    return out


# --------------------------------------------------------------------------
# Linearization fit
# --------------------------------------------------------------------------

COLUMNS = ("kinetic", "potential", "diffusion", "R1", "R2", "R3", "R4", "R5")


def basis_columns(psi: np.ndarray, params: DGParams) -> dict[str, np.ndarray]:
    """Candidate terms of d(psi)/dt / psi for the equation family.

    kinetic   i Lap^omega psi / psi        (coefficient hbar/2 for the linear equation)
    potential -i                           (V / hbar)
    diffusion Lap rho / rho                (c / 2)
    Rj        -i R_j[psi]                  (d_j / hbar)
    """
    grid = params.grid
    rho = density(psi)
    R = rj_functionals(psi, params)
    cols = {
        "kinetic": 1j * twisted_laplacian(psi, params.omega, params.hbar, grid, params.coupling) / psi,
        "potential": np.full(grid.shape, -1j),
        "diffusion": (laplacian(rho, grid) / rho).astype(complex),
    }
    for j, Rj in enumerate(R, start=1):
        cols[f"R{j}"] = -1j * Rj
    return cols


def _time_derivative(series, dt):
    """Central differences at interior snapshots (4th order when >= 5)."""
    n = len(series)
    if n >= 5:
        idx = range(2, n - 2)
        return idx, [(-series[i + 2] + 8 * series[i + 1] - 8 * series[i - 1] + series[i - 2]) / (12 * dt) for i in idx]
    if n >= 3:
        idx = range(1, n - 1)
        return idx, [(series[i + 1] - series[i - 1]) / (2 * dt) for i in idx]
    raise FitError("need at least 3 snapshots")


@dataclass
class FitResult:
    coefficients: dict[str, float]
    residual: float
    rank: int
    condition: float
    columns: tuple[str, ...]

    def as_equation(self, hbar: float) -> dict:
        """Translate to the equation's parameters (kinetic prefactor, V, c, d_j)."""
        c = self.coefficients
        return {
            "kinetic_prefactor": c.get("kinetic", 0.0) * hbar,
            "V": c.get("potential", 0.0) * hbar,
            "c": 2 * c.get("diffusion", 0.0),
            "d_coeffs": [c.get(f"R{j}", 0.0) * hbar for j in range(1, 6)],
        }


def linearization_fit(
    snapshots,
    dt: float,
    g: GaugeParams,
    params: DGParams,
    columns: tuple[str, ...] = COLUMNS,
    rcond: float = 1e-10,
) -> FitResult:
    """Least-squares fit of the gauge-transformed flow to the equation family.

    Each snapshot is transformed by N_g, d/dt is taken by central
    differences, and d(psi')/dt / psi' is fitted at every grid point of every
    interior snapshot by real combinations of :func:`basis_columns`.  The
    relative residual measures how well the transformed flow lies in the
    family spanned by ``columns``.
    """
    grid = params.grid
    series = gauge_series(snapshots, g, grid)
    idx, dpsi = _time_derivative(series, dt)
    rows, target = [], []
    for i, d in zip(idx, dpsi):
        psi = series[i]
        cols = basis_columns(psi, params)
        A = np.stack([np.ravel(cols[name]) for name in columns], axis=1)
        b = np.ravel(d / psi)
        rows.append(np.concatenate([A.real, A.imag]))
        target.append(np.concatenate([b.real, b.imag]))
    A = np.concatenate(rows)
    b = np.concatenate(target)
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        dead = [n for n, s in zip(columns, scale) if s == 0]
        raise FitError(f"basis columns vanish identically: {dead}")
    As = A / scale
    x, _, rank, sv = np.linalg.lstsq(As, b, rcond=rcond)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if rank < len(columns):
        raise FitError(f"ill-conditioned fit: rank {rank} < {len(columns)} columns (condition {cond:.2e})")
    x = x / scale
    resid = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b))
    return FitResult(dict(zip(columns, map(float, x))), resid, int(rank), cond, tuple(columns))
