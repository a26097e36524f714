"""TOML run configuration -> validated domain objects.

Every problem is reported as a :class:`ConfigError` naming the table/key, the
violated precondition, and the module that owns it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .bundle import FieldError
from .dynamics import DGParams, DynamicsError, Probe, periodic_gaussian, plane_wave, superposition
from .gauge import GaugeError, GaugeParams
from .geometry import GeometryError, Grid, ManifoldKind, ManifoldSpec, OneForm, TrigPoly
from .kinematics import KinematicsError, KinematicsParams, VectorFieldSpec


class ConfigError(ValueError):
    pass


_OWNERS = [
    (GeometryError, "geometry"),
    (KinematicsError, "kinematics"),
    (DynamicsError, "dynamics"),
    (GaugeError, "gauge"),
    (FieldError, "bundle"),
]


def _owned(section: str, exc: Exception) -> ConfigError:
    for cls, owner in _OWNERS:
        if isinstance(exc, cls):
            return ConfigError(f"[{section}] {exc} (precondition owned by {owner})")
    return ConfigError(f"[{section}] {exc}")


@dataclass
class RunConfig:
    grid: Grid
    params: DGParams
    psi0: np.ndarray
    T: float
    probes: list[Probe]
    output_dir: Path
    snapshot_every: int = 1
    plots: bool = False
    seed: int = 0
    gauges: list[GaugeParams] = field(default_factory=list)
    fit_snapshots: int = 7
    ablate: str = "diffusion"
    superposition_terms: list | None = None
    raw: dict = field(default_factory=dict)


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None


def _get(table: dict, key: str, section: str, kind=float, default: Any = ...):
    if key not in table:
        if default is ...:
            raise ConfigError(f"[{section}] missing required key '{key}'")
        return default
    value = table[key]
    try:
        if kind is float:
            value = float(value)
            if not math.isfinite(value):
                raise ValueError
        elif kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            value = int(value)
        elif kind is list:
            value = [float(v) for v in np.atleast_1d(value)]
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] '{key}' must be {kind.__name__}, got {table[key]!r}") from None
    return value


def trig_from_terms(terms, periods, section: str) -> TrigPoly:
    """List of {kind = const|cos|sin, mode = [...], amplitude = a} -> TrigPoly."""
    if isinstance(terms, (int, float)):
        return TrigPoly.const(float(terms), periods)
    out = TrigPoly.zero(periods)
    for t in terms:
        kind = t.get("kind", "const")
        amp = float(t.get("amplitude", 1.0))
        mode = tuple(int(m) for m in np.atleast_1d(t.get("mode", [0] * len(periods))))
        if len(mode) != len(periods):
            raise ConfigError(f"[{section}] mode {mode} does not match manifold dimension {len(periods)}")
        if kind == "const":
            out = out + TrigPoly.const(amp, periods)
        elif kind == "cos":
            out = out + TrigPoly.cos(mode, periods, amp)
        elif kind == "sin":
            out = out + TrigPoly.sin(mode, periods, amp)
        else:
            raise ConfigError(f"[{section}] unknown term kind {kind!r} (const, cos, sin)")
    return out


def parse_grid(raw: dict) -> Grid:
    m = raw.get("manifold")
    if m is None:
        raise ConfigError("missing [manifold] table")
    try:
        kind = ManifoldKind(m.get("kind", "circle"))
    except ValueError:
        raise ConfigError(f"[manifold] unknown kind {m.get('kind')!r}; use circle, torus2 or line_segment") from None
    extents = _get(m, "extents", "manifold", list, [2 * math.pi] * kind.ndim)
    metric = _get(m, "metric", "manifold", list, [1.0] * kind.ndim)
    points = m.get("points", 128)
    try:
        manifold = ManifoldSpec(kind, tuple(extents), tuple(metric))
        return Grid.uniform(manifold, points if np.isscalar(points) else tuple(points))
    except GeometryError as exc:
        raise _owned("manifold", exc) from None


def parse_kinematics(raw: dict, grid: Grid) -> KinematicsParams:
    k = raw.get("kinematics", {})
    hbar = _get(k, "hbar", "kinematics", float, 1.0)
    c = _get(k, "c", "kinematics", float, 0.0)
    theta = _get(k, "theta", "kinematics", list, [0.0] * grid.ndim)
    if len(theta) == 1 and grid.ndim > 1:
        theta = theta * grid.ndim
    try:
        omega = OneForm.constant(grid, theta)
        if "omega_potential" in k:
            chi = np.real(trig_from_terms(k["omega_potential"], grid.extents, "kinematics").on(grid))
            omega = OneForm.exact(grid, chi, theta)
        return KinematicsParams(grid, hbar, c, omega)
    except (GeometryError, KinematicsError) as exc:
        raise _owned("kinematics", exc) from None


def parse_potential(d: dict, grid: Grid) -> np.ndarray:
    spec = d.get("potential", {})
    if isinstance(spec, (int, float)):
        return np.full(grid.shape, float(spec))
    V = np.full(grid.shape, _get(spec, "constant", "dynamics.potential", float, 0.0))
    if "terms" in spec:
        V = V + np.real(trig_from_terms(spec["terms"], grid.extents, "dynamics.potential").on(grid))
    if "harmonic" in spec:
        h = spec["harmonic"]
        center = _get(h, "center", "dynamics.potential.harmonic", list)
        k = _get(h, "stiffness", "dynamics.potential.harmonic", float, 1.0)
        V = V + 0.5 * k * sum((x - c0) ** 2 for x, c0 in zip(grid.coords, center))
    return V


def parse_dynamics(raw: dict, kin: KinematicsParams, check_stability: bool = True) -> tuple[DGParams, float]:
    d = raw.get("dynamics", {})
    grid = kin.grid
    dt = _get(d, "dt", "dynamics", float, 1e-3)
    T = _get(d, "T", "dynamics", float, 1.0)
    if T < 0:
        raise ConfigError("[dynamics] T must be >= 0 (precondition owned by dynamics)")
    coeffs = _get(d, "d_coeffs", "dynamics", list, [0.0] * 5)
    floor = d.get("density_floor")
    try:
        params = DGParams(
            kin,
            potential=parse_potential(d, grid),
            d_coeffs=tuple(coeffs),
            dt=dt,
            density_floor=None if floor is None else float(floor),
            twist_convention=d.get("twist_convention", "half"),
            current_convention=d.get("current_convention", "doubled"),
            stability_factor=_get(d, "stability_factor", "dynamics", float, 0.5),
        )
    except DynamicsError as exc:
        raise _owned("dynamics", exc) from None
    if check_stability and params.dt > params.dt_bound:
        raise ConfigError(
            f"[dynamics] dt={dt:g} exceeds the stability bound {params.dt_bound:.6g} "
            f"(dt <= {params.stability_factor:g} * h^2 * g / (hbar * ndim); precondition owned by dynamics)"
        )
    return params, T


def parse_initial(raw: dict, grid: Grid, seed: int) -> tuple[np.ndarray, list | None]:
    s = raw.get("initial", {"kind": "plane_wave", "k": [0] * grid.ndim})
    kind = s.get("kind", "plane_wave")
    terms = None
    if kind == "plane_wave":
        psi = plane_wave(grid, [int(k) for k in np.atleast_1d(s.get("k", [0] * grid.ndim))])
    elif kind == "gaussian":
        center = _get(s, "center", "initial", list, [L / 2 for L in grid.extents])
        width = _get(s, "width", "initial", list, [L / 10 for L in grid.extents])
        k = s.get("k")
        psi = periodic_gaussian(grid, center, width, None if k is None else [int(v) for v in np.atleast_1d(k)])
    elif kind == "superposition":
        terms = []
        for t in s.get("terms", []):
            mode = [int(v) for v in np.atleast_1d(t.get("k", [0] * grid.ndim))]
            if len(mode) != grid.ndim:
                raise ConfigError(f"[initial] term mode {mode} does not match dimension {grid.ndim}")
            terms.append((mode, complex(float(t.get("re", 0.0)), float(t.get("im", 0.0)))))
        if not terms:
            raise ConfigError("[initial] superposition needs at least one term")
        psi = superposition(grid, terms)
    else:
        raise ConfigError(f"[initial] unknown kind {kind!r}; use plane_wave, gaussian or superposition")
    noise = _get(s, "noise", "initial", float, 0.0)
    if noise:
        rng = np.random.default_rng(seed)
        psi = psi * (1 + noise * rng.standard_normal(grid.shape))
    if not np.all(np.isfinite(psi)) or not np.any(psi):
        raise ConfigError("[initial] initial state must be finite and nonzero")
    return psi, terms


def parse_probes(raw: dict, grid: Grid) -> list[Probe]:
    probes = []
    for i, p in enumerate(raw.get("probes", [])):
        name = str(p.get("name", f"probe{i}"))
        f = trig_from_terms(p["f"], grid.extents, f"probes.{name}") if "f" in p else None
        X = None
        if "X" in p:
            comps = p["X"]
            if len(comps) != grid.ndim:
                raise ConfigError(f"[probes.{name}] X needs {grid.ndim} components")
            X = VectorFieldSpec(tuple(trig_from_terms(c, grid.extents, f"probes.{name}") for c in comps))
        for obj in (f, X):
            if obj is not None and obj.degree > min(grid.shape) // 4:
                raise ConfigError(f"[probes.{name}] degree {obj.degree} exceeds N/4 (precondition owned by kinematics)")
        probes.append(Probe(name, f, X))
    return probes


def parse_gauges(raw: dict) -> list[GaugeParams]:
    out = []
    for gsp in raw.get("gauge", {}).get("fits", [{"lambda": 1.0, "gamma": 0.0}]):
        try:
            out.append(GaugeParams(float(gsp.get("lambda", 1.0)), float(gsp.get("gamma", 0.0))))
        except GaugeError as exc:
            raise _owned("gauge", exc) from None
    return out


def load_config(path: str | Path, output_root: str | Path | None = None, check_stability: bool = True) -> RunConfig:
    raw = load_toml(path)
    seed = _get(raw, "seed", "root", int, 0)
    grid = parse_grid(raw)
    kin = parse_kinematics(raw, grid)
    params, T = parse_dynamics(raw, kin, check_stability)
    psi0, terms = parse_initial(raw, grid, seed)
    probes = parse_probes(raw, grid)
    out = raw.get("output", {})
    out_dir = Path(out.get("dir", Path(path).stem))
    if output_root is not None and not out_dir.is_absolute():
        out_dir = Path(output_root) / out_dir
    every = _get(out, "snapshot_every", "output", int, 1)
    if every < 1:
        raise ConfigError("[output] snapshot_every must be >= 1")
    gauge_tab = raw.get("gauge", {})
    return RunConfig(
        grid=grid,
        params=params,
        psi0=psi0,
        T=T,
        probes=probes,
        output_dir=out_dir,
        snapshot_every=every,
        plots=bool(out.get("plots", False)),
        seed=seed,
        gauges=parse_gauges(raw),
        fit_snapshots=_get(gauge_tab, "snapshots", "gauge", int, 7),
        ablate=str(gauge_tab.get("ablate", "diffusion")),
        superposition_terms=terms,
        raw=raw,
    )
