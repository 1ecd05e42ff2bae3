"""Result files: legacy ASCII VTK snapshots, the CSV history and the normalization cache."""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .functionals import Normalization
from .mesh import Mesh
from .optimizer import StepResult

HISTORY_COLUMNS = ("t", "cost", "lambda", "outer_iters", "bisect_iters", "constraint_residual", "converged")
POINT_FIELDS = ("psi", "xi_hat", "theta1", "theta2", "theta3")
CELL_FIELDS = ("chi", "region", "hard_fraction")
VTK_HEXAHEDRON = 12
VTK_QUAD = 9


class OutputError(OSError):
    pass


def _fmt(value) -> str:
    return repr(float(value))


def _ensure_dir(directory: Path) -> Path:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {directory}: {exc}") from exc
    return directory


def vtk_text(mesh: Mesh, point_data: dict[str, np.ndarray], cell_data: dict[str, np.ndarray],
             title: str = "thermotopo snapshot") -> str:
    """Unstructured grid over the active elements, with every mesh node listed."""
    cells = np.flatnonzero(mesh.active)
    coords = mesh.node_coords
    if mesh.dim == 2:
        coords = np.column_stack([coords, np.zeros(len(coords))])
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines += [" ".join(_fmt(c) for c in row) for row in coords]
    corners = mesh.elements[cells]
    per = corners.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (per + 1)}")
    lines += [f"{per} " + " ".join(str(int(n)) for n in row) for row in corners]
    lines.append(f"CELL_TYPES {len(cells)}")
    cell_type = VTK_HEXAHEDRON if mesh.dim == 3 else VTK_QUAD
    lines += [str(cell_type)] * len(cells)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in np.asarray(values, float)]
    if cell_data:
        lines.append(f"CELL_DATA {len(cells)}")
        for name, values in cell_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in np.asarray(values, float)[cells]]
    return "\n".join(lines) + "\n"


def snapshot_fields(result: StepResult, mesh: Mesh):
    point = {"psi": result.psi, "xi_hat": result.xi_hat}
    for name in ("theta1", "theta2", "theta3"):
        if name in result.states:
            point[name] = result.states[name]
    cell = {
        "chi": result.hard.astype(float),
        "region": mesh.region.astype(float),
        "hard_fraction": result.hard_fraction,
    }
    return point, cell


def write_vtk(path, mesh: Mesh, result: StepResult) -> Path:
    path = Path(path)
    _ensure_dir(path.parent)
    point, cell = snapshot_fields(result, mesh)
    try:
        path.write_text(vtk_text(mesh, point, cell, f"thermotopo t={result.t:.6g}"))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def history_row(result: StepResult) -> list[str]:
    return [
        f"{result.t:.12g}",
        f"{result.cost:.12e}",
        f"{result.lam:.12e}",
        str(result.outer_iters),
        str(result.bisect_iters),
        f"{abs(result.constraint_residual):.6e}",
        "1" if result.converged else "0",
    ]


class HistoryWriter:
    """Appends one CSV row per step, flushing after each so partial runs keep their history."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        _ensure_dir(self.path.parent)
        if append and self.path.exists():
            return
        try:
            with self.path.open("w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(HISTORY_COLUMNS)
        except OSError as exc:
            raise OutputError(f"cannot write {self.path}: {exc}") from exc

    def append(self, result: StepResult):
        try:
            with self.path.open("a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(history_row(result))
        except OSError as exc:
            raise OutputError(f"cannot write {self.path}: {exc}") from exc


def read_history(path) -> list[dict[str, float]]:
    with Path(path).open(newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


class SnapshotWriter:
    """Writes the VTK file and history row for each step according to the output settings."""

    def __init__(self, directory, mesh: Mesh, formats=("vtk", "csv"), every: int = 1, prefix: str = "step"):
        self.directory = _ensure_dir(Path(directory))
        self.mesh = mesh
        self.formats = tuple(formats)
        self.every = every
        self.prefix = prefix
        self.count = 0
        self.history = HistoryWriter(self.directory / "history.csv") if "csv" in self.formats else None

    def __call__(self, result: StepResult):
        self.count += 1
        if self.history is not None:
            self.history.append(result)
        if "vtk" in self.formats and self.every and self.count % self.every == 0:
            write_vtk(self.directory / f"{self.prefix}_{self.count:04d}.vtk", self.mesh, result)


def write_snapshot(result: StepResult, mesh: Mesh, directory, formats=("vtk", "csv"), index: int = 1) -> list[Path]:
    """One-off snapshot: VTK file plus a history row appended to ``history.csv``."""
    directory = _ensure_dir(Path(directory))
    written = []
    if "vtk" in formats:
        written.append(write_vtk(directory / f"step_{index:04d}.vtk", mesh, result))
    if "csv" in formats:
        history = HistoryWriter(directory / "history.csv", append=True)
        history.append(result)
        written.append(history.path)
    return written


def save_normalization(path, norm: Normalization, key: dict | None = None):
    payload = {"normalization": dataclasses.asdict(norm), "key": key or {}}
    try:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def load_normalization(path, key: dict | None = None) -> Normalization | None:
    """Cached constants, or None when missing, unreadable or computed for another setup."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        payload = json.loads(path.read_text())
        if key is not None and payload.get("key") != key:
            return None
        return Normalization(**payload["normalization"])
    except (OSError, ValueError, KeyError, TypeError):
        return None
