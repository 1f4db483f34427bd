"""Plain-text formats: landmark CSV, legacy VTK, trace CSV, metrics JSON.

Everything is written with repr-exact floats so identical runs produce
byte-identical files (wall-clock fields aside).
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .admm import EnergyTrace
from .cases import MetricsReport
from .conformality import det3_batch, distortion_field, jacobian_per_tet
from .errors import LandmarkParseError, OutOfDomainError
from .grid import Grid, TetMesh

_TRACE_COLUMNS = (
    "iteration",
    "energy",
    "aug_lagrangian",
    "primal_residual",
    "mu",
    "f_change",
    "energy_normalized",
)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def load_landmarks(path, domain: np.ndarray | None = None) -> np.ndarray:
    """Parse a landmark CSV: one ``px,py,pz,qx,qy,qz`` line per pair.

    Blank lines and lines starting with '#' are skipped.  With ``domain``
    (a (2, 3) array of box corners) coordinates are affinely normalized to
    the unit cube first.  Raises on malformed lines, and on coordinates
    outside the cube after normalization (listing every offender).
    """
    rows = []
    bad_rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = [p for p in text.replace(",", " ").split() if p]
            if len(parts) != 6:
                raise LandmarkParseError(
                    f"expected 6 comma-separated values, got {len(parts)}", lineno
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise LandmarkParseError(str(exc), lineno) from exc
            rows.append((lineno, vals))

    pairs = np.array([v for _, v in rows], dtype=float).reshape(-1, 2, 3)
    if domain is not None:
        lo, hi = np.asarray(domain, dtype=float)
        if np.any(hi <= lo):
            raise ValueError("domain box must have positive extent on every axis")
        pairs = (pairs - lo) / (hi - lo)
    eps = 1e-12
    for (lineno, _), pair in zip(rows, pairs):
        if (pair < -eps).any() or (pair > 1 + eps).any():
            bad_rows.append(lineno)
    if bad_rows:
        raise OutOfDomainError(
            f"coordinates outside the unit cube on line(s) {bad_rows}"
        )
    return pairs


def save_landmarks(path, pairs: np.ndarray, header: str = "") -> None:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for p, q in np.asarray(pairs, dtype=float):
        lines.append(",".join(_fmt(v) for v in (*p, *q)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_vtk(
    path,
    mesh: TetMesh,
    f: np.ndarray,
    title: str = "deformed lattice",
    points_transform=None,
) -> None:
    """Legacy ASCII unstructured-grid export of a deformed lattice.

    Points are the mapped node positions, cells the tetrahedra; cell data
    carries det(Df) and the normalized distortion, point data the
    displacement vectors.  ``points_transform`` (if given) maps unit-cube
    coordinates back to a user box on output.
    """
    grid = mesh.grid
    points = f.reshape(3, -1).T
    identity = grid.node_positions
    displacement = points - identity
    if points_transform is not None:
        points = points_transform(points)
        displacement = points - points_transform(identity)

    jac = jacobian_per_tet(mesh, f)
    det = det3_batch(jac)
    dist = distortion_field(jac)

    nt = mesh.num_tets
    out = []
    out.append("# vtk DataFile Version 2.0")
    out.append(title)
    out.append("ASCII")
    out.append("DATASET UNSTRUCTURED_GRID")
    out.append(f"POINTS {len(points)} double")
    out.extend(" ".join(_fmt(v) for v in row) for row in points)
    out.append(f"CELLS {nt} {5 * nt}")
    out.extend("4 " + " ".join(str(v) for v in tet) for tet in mesh.tets)
    out.append(f"CELL_TYPES {nt}")
    out.extend("10" for _ in range(nt))
    out.append(f"CELL_DATA {nt}")
    out.append("SCALARS det_jacobian double")
    out.append("LOOKUP_TABLE default")
    out.extend(_fmt(v) for v in det)
    out.append("SCALARS conformality_distortion double")
    out.append("LOOKUP_TABLE default")
    out.extend(_fmt(v) for v in dist)
    out.append(f"POINT_DATA {len(points)}")
    out.append("VECTORS displacement double")
    out.extend(" ".join(_fmt(v) for v in row) for row in displacement)
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_vtk(path) -> dict:
    """Minimal reader for the files produced by :func:`write_vtk`."""
    tokens = Path(path).read_text(encoding="utf-8").splitlines()
    data: dict = {"cell_data": {}, "point_data": {}}
    i = 0

    def expect(prefix: str):
        nonlocal i
        while i < len(tokens) and not tokens[i].startswith(prefix):
            i += 1
        if i == len(tokens):
            raise ValueError(f"missing section {prefix!r} in {path}")
        line = tokens[i]
        i += 1
        return line

    expect("# vtk DataFile")
    data["title"] = tokens[1]
    expect("ASCII")
    expect("DATASET UNSTRUCTURED_GRID")

    npoints = int(expect("POINTS").split()[1])
    pts = np.array(
        [[float(v) for v in tokens[i + r].split()] for r in range(npoints)]
    )
    i += npoints
    data["points"] = pts

    ncells = int(expect("CELLS").split()[1])
    cells = np.array(
        [[int(v) for v in tokens[i + r].split()[1:]] for r in range(ncells)],
        dtype=np.int64,
    )
    i += ncells
    data["cells"] = cells
    expect("CELL_TYPES")
    i += ncells

    expect("CELL_DATA")
    while i < len(tokens):
        line = tokens[i]
        if line.startswith("SCALARS"):
            name = line.split()[1]
            i += 2  # skip LOOKUP_TABLE
            vals = np.array([float(tokens[i + r]) for r in range(ncells)])
            i += ncells
            data["cell_data"][name] = vals
        elif line.startswith("POINT_DATA"):
            i += 1
        elif line.startswith("VECTORS"):
            name = line.split()[1]
            i += 1
            vals = np.array(
                [[float(v) for v in tokens[i + r].split()] for r in range(npoints)]
            )
            i += npoints
            data["point_data"][name] = vals
        else:
            i += 1
    return data


def field_from_vtk(path) -> tuple[Grid, np.ndarray]:
    """Rebuild (grid, map) from an exported file.

    The source lattice is recovered as points minus displacement; it must be
    a unit-cube lattice of some level J.
    """
    data = read_vtk(path)
    points = data["points"]
    disp = data["point_data"].get("displacement")
    if disp is None:
        raise ValueError(f"{path} carries no displacement vectors")
    n = round(len(points) ** (1.0 / 3.0))
    if n**3 != len(points) or n < 3:
        raise ValueError(f"{len(points)} points is not a cubic lattice")
    levels = int(np.log2(n - 1))
    if 2**levels + 1 != n:
        raise ValueError(f"{n} nodes per axis is not dyadic")
    grid = Grid(levels)
    source = points - disp
    if np.abs(source - grid.node_positions).max() > 1e-9:
        raise ValueError("field does not originate from a unit-cube lattice")
    f = np.ascontiguousarray(points.T.reshape(3, n, n, n))
    return grid, f


def write_trace_csv(path, trace: EnergyTrace) -> None:
    lines = [",".join(_TRACE_COLUMNS)]
    for r in trace.records:
        lines.append(
            ",".join(
                [str(r.iteration)]
                + [
                    _fmt(v)
                    for v in (
                        r.energy,
                        r.aug_lagrangian,
                        r.primal_residual,
                        r.mu,
                        r.f_change,
                        r.energy_normalized,
                    )
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_metrics_json(path, report: MetricsReport) -> None:
    Path(path).write_text(
        json.dumps(dataclasses.asdict(report), indent=2) + "\n", encoding="utf-8"
    )


def read_metrics_json(path) -> MetricsReport:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return MetricsReport(**payload)


def write_config_json(path, config: dict) -> None:
    Path(path).write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
