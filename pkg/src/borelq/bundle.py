"""External-field admissibility: curvature scale, flux integrality, Dirac lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Grid, GeometryError, ManifoldKind, TwoForm, two_form_integral


class FieldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FieldConfig:
    phi: TwoForm
    e: float
    hbar: float = 1.0

    def __post_init__(self):
        if not self.hbar > 0:
            raise FieldError(f"hbar must be positive, got {self.hbar}")
        if not math.isfinite(self.e):
            raise FieldError("coupling e must be finite")


def curvature_scale(config: FieldConfig) -> float:
    """Factor e/hbar with R(X, Y) = i (e/hbar) phi(X, Y)."""
    return config.e / config.hbar


def integrality_check(config: FieldConfig, grid: Grid | None = None, tol: float = 1e-9) -> dict:
    """Flux quantum number q = e * int(phi) / (2 pi hbar) over the torus."""
    grid = config.phi.grid if grid is None else grid
    if grid.manifold.kind is not ManifoldKind.TORUS2:
        raise FieldError(f"integrality needs the 2-torus, got {grid.manifold.kind.value}")
    try:
        flux = two_form_integral(config.phi, grid)
    except GeometryError as exc:
        raise FieldError(str(exc)) from None
    q = config.e * flux / (2 * math.pi * config.hbar)
    n = round(q)
    residual = abs(q - n)
    return {
        "flux": flux,
        "cycle_value": q,
        "nearest_integer": int(n),
        "residual": residual,
        "admissible": residual < tol,
    }


def dirac_lattice_spacing(e: float, hbar: float = 1.0) -> float:
    """Spacing hbar / (2 pi e) of admissible constant field strengths."""
    if e == 0:
        raise FieldError("e = 0 imposes no quantization condition")
    return hbar / (2 * math.pi * e)


def dirac_admissible(phi0: float, e: float, hbar: float = 1.0) -> dict:
    """Nearest point phi0 = n hbar / (2 pi e) of the Dirac lattice."""
    spacing = dirac_lattice_spacing(e, hbar)
    n = round(2 * math.pi * e * phi0 / hbar)
    nearest = n * spacing
    return {
        "n_nearest": int(n),
        "phi0_nearest": nearest,
        "residual": abs(phi0 - nearest),
        "spacing": spacing,
    }


def check_constant_field(phi0: float, e: float, hbar: float, grid: Grid, tol: float = 1e-9) -> dict:
    """Both admissibility statements for a constant field on a torus grid.

    ``tol`` bounds the distance of q from the integers; the Dirac residual
    is compared at the same tolerance converted to field units.
    """
    config = FieldConfig(TwoForm.constant(grid, phi0), e, hbar)
    integral = integrality_check(config, grid, tol)
    report = {"phi0": phi0, "e": e, "hbar": hbar, "integrality": integral}
    if e != 0:
        dirac = dirac_admissible(phi0, e, hbar)
        dirac["admissible"] = dirac["residual"] < tol * abs(dirac["spacing"])
        report["dirac"] = dirac
        report["admissible"] = integral["admissible"] and dirac["admissible"]
        report["consistent"] = integral["admissible"] == dirac["admissible"]
    else:
        report["admissible"] = integral["admissible"]
        report["consistent"] = True
    return report
