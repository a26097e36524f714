"""Snapshot binaries, diagnostics CSV and summary JSON."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dynamics import EvolutionResult
from .geometry import Grid, ManifoldKind, ManifoldSpec

# Header, little-endian: int64 kind code, int64 ndim, int64 N_d[ndim],
# float64 extents[ndim], float64 time.  Body: complex128 samples, row-major
# (interleaved re/im float64).


def write_snapshot(path: str | Path, grid: Grid, time: float, psi: np.ndarray) -> None:
    psi = grid.check(np.asarray(psi, dtype=complex))
    nd = grid.ndim
    header = struct.pack(
        f"<qq{nd}q{nd}dd",
        grid.manifold.kind.code,
        nd,
        *grid.shape,
        *grid.extents,
        float(time),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(psi).astype("<c16").tobytes())


def read_snapshot(path: str | Path, metric=None) -> tuple[Grid, float, np.ndarray]:
    data = Path(path).read_bytes()
    kind_code, nd = struct.unpack_from("<qq", data, 0)
    off = 16
    shape = struct.unpack_from(f"<{nd}q", data, off)
    off += 8 * nd
    extents = struct.unpack_from(f"<{nd}d", data, off)
    off += 8 * nd
    (time,) = struct.unpack_from("<d", data, off)
    off += 8
    kind = ManifoldKind.from_code(kind_code)
    grid = Grid(ManifoldSpec(kind, extents, metric), shape)
    psi = np.frombuffer(data, dtype="<c16", offset=off).reshape(shape).astype(complex)
    return grid, time, psi


def _fmt(x: float) -> str:
    return repr(float(x))


def diagnostics_columns(result: EvolutionResult) -> list[str]:
    cols = ["time", "norm", "min_rho", "ehrenfest_max", "fp_residual"]
    first = result.records[0]
    cols += list(first.expectations)
    cols += [f"ehrenfest[{k}]" for k in first.ehrenfest]
    return cols


def write_diagnostics(path: str | Path, result: EvolutionResult) -> None:
    cols = diagnostics_columns(result)
    lines = [",".join(cols)]
    for r in result.records:
        row = [r.time, r.norm, r.min_rho, r.ehrenfest_max, r.fp_residual]
        row += [r.expectations[k] for k in result.records[0].expectations]
        row += [r.ehrenfest.get(k, 0.0) for k in result.records[0].ehrenfest]
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_diagnostics(path: str | Path) -> dict[str, np.ndarray]:
    arr = np.genfromtxt(path, delimiter=",", names=True, deletechars="")
    return {name: np.atleast_1d(arr[name]) for name in arr.dtype.names}


def summary(result: EvolutionResult) -> dict:
    recs = result.records
    return {
        "steps": len(recs) - 1,
        "dt": result.dt,
        "final_time": recs[-1].time,
        "initial_norm": recs[0].norm,
        "final_norm": recs[-1].norm,
        "norm_drift": result.norm_drift,
        "min_rho": min(r.min_rho for r in recs),
        "max_fp_residual": result.max_fp_residual,
        "max_ehrenfest_residual": result.max_ehrenfest,
        "snapshots": len(result.snapshots),
        "aborted": result.aborted,
    }


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
