"""Plain-text file formats: meshes, designs, polylines, logs and sweeps."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .curves import SphericalCurve
from .mesh import TriMesh

MESH_MAGIC = "ntmesh 1"
DESIGN_MAGIC = "ntdesign 1"
LOG_COLUMNS = ("iter", "Qe", "Qm", "Q", "beta", "max_drho", "area_frac")
SWEEP_COLUMNS = ("ka", "Qe", "Qm", "Q", "selfres")


class FormatError(ValueError):
    pass


def _g17(x: float) -> str:
    return f"{x:.17g}"


def _g12(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.12g}"


def _lines(path) -> list[str]:
    return Path(path).read_text().splitlines()


def write_mesh(path, mesh: TriMesh) -> None:
    out = [MESH_MAGIC, f"{mesh.num_vertices} {mesh.num_triangles}"]
    out += [" ".join(_g17(c) for c in v) for v in mesh.vertices]
    out += [" ".join(str(int(i)) for i in tri) for tri in mesh.triangles]
    Path(path).write_text("\n".join(out) + "\n")


def read_mesh(path) -> TriMesh:
    lines = _lines(path)
    if not lines or lines[0].strip() != MESH_MAGIC:
        raise FormatError(f"{path}: missing '{MESH_MAGIC}' header")
    try:
        nv, nt = (int(x) for x in lines[1].split())
        if len(lines) < 2 + nv + nt:
            raise FormatError(f"{path}: expected {nv} vertices and {nt} triangles")
        verts = np.array([[float(x) for x in ln.split()] for ln in lines[2:2 + nv]])
        tris = np.array([[int(x) for x in ln.split()] for ln in lines[2 + nv:2 + nv + nt]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed mesh file ({exc})") from exc
    if verts.shape != (nv, 3) or tris.shape != (nt, 3):
        raise FormatError(f"{path}: wrong number of columns")
    return TriMesh(verts, tris)


def write_design(path, rho_bar) -> None:
    rho_bar = np.asarray(rho_bar, dtype=float)
    out = [DESIGN_MAGIC, str(len(rho_bar))] + [_g17(x) for x in rho_bar]
    Path(path).write_text("\n".join(out) + "\n")


def read_design(path) -> np.ndarray:
    lines = _lines(path)
    if not lines or lines[0].strip() != DESIGN_MAGIC:
        raise FormatError(f"{path}: missing '{DESIGN_MAGIC}' header")
    try:
        n = int(lines[1])
        vals = np.array([float(x) for x in lines[2:2 + n]])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed design file ({exc})") from exc
    if len(vals) != n:
        raise FormatError(f"{path}: expected {n} values, found {len(vals)}")
    if np.any(~np.isfinite(vals)) or np.any(vals < 0) or np.any(vals > 1):
        raise FormatError(f"{path}: design values must lie in [0, 1]")
    return vals


def write_polyline(path, curve: SphericalCurve) -> None:
    """Header line, a values line, then ``t,x,y,z`` rows per arm."""
    rows = []
    for t, pts in curve.arm_polylines():
        rows += [",".join(_g17(v) for v in (ti, *p)) for ti, p in zip(t, pts)]
    out = ["kind,param,R,samples", f"{curve.kind},{_g17(curve.param)},{_g17(curve.R)},{len(rows)}",
           "t,x,y,z"] + rows
    Path(path).write_text("\n".join(out) + "\n")


def read_polyline(path) -> tuple[dict, np.ndarray]:
    lines = _lines(path)
    if len(lines) < 3 or lines[0] != "kind,param,R,samples" or lines[2] != "t,x,y,z":
        raise FormatError(f"{path}: not a polyline file")
    kind, param, R, n = lines[1].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[3:]]).reshape(-1, 4)
    if len(data) != int(n):
        raise FormatError(f"{path}: expected {n} samples, found {len(data)}")
    return {"kind": kind, "param": float(param), "R": float(R), "samples": int(n)}, data


class ConvergenceLog:
    """CSV writer for iteration records, flushed after every row."""

    def __init__(self, fh: IO[str]):
        self.fh = fh
        self.writer = csv.writer(fh, lineterminator="\n")
        self.writer.writerow(LOG_COLUMNS)
        fh.flush()

    def write(self, rec) -> None:
        self.writer.writerow([rec.iter, _g17(rec.Qe), _g17(rec.Qm), _g17(rec.Q), _g17(rec.beta),
                              "nan" if math.isnan(rec.max_drho) else _g17(rec.max_drho),
                              _g17(rec.area_frac)])
        self.fh.flush()


def read_log(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != LOG_COLUMNS:
        raise FormatError(f"{path}: unexpected log header")
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(LOG_COLUMNS))
    return {c: data[:, i] for i, c in enumerate(LOG_COLUMNS)}


def format_sweep(rows: Iterable) -> str:
    """Sweep table text; failed points carry ``nan`` values and ``error``."""
    out = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        if r.error is not None:
            out.append(f"{_g12(r.ka)},nan,nan,nan,error")
        else:
            out.append(",".join([_g12(r.ka), _g12(r.Qe), _g12(r.Qm), _g12(r.Q), str(int(r.selfres))]))
    return "\n".join(out) + "\n"


def read_sweep(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SWEEP_COLUMNS:
        raise FormatError(f"{path}: unexpected sweep header")
    return [{"ka": float(r[0]), "Qe": float(r[1]), "Qm": float(r[2]), "Q": float(r[3]), "selfres": r[4]}
            for r in rows[1:]]
