"""Output emission: legacy-VTK ASCII snapshots and CSV time series.

Floats in VTK files carry 17 significant digits so a reparse reproduces the
arrays exactly; CSV rows use the shortest round-trip decimal.  The pressure
field can be masked to NaN outside the tumour (where the phase sits at the
lower obstacle), matching how the runs are usually displayed.
"""

from __future__ import annotations

import math

import numpy as np

from tgfem import mesh as msh


def _fmt(x):
    return f"{x:.17g}"


def write_vtk_snapshot(path, state, zones=None, mask_pressure=True, title="tgfem snapshot"):
    """Write mesh + phase + pressure as a legacy ASCII unstructured grid."""
    mesh = state.mesh
    phi = state.phi.values
    u = state.u.values
    if zones is None:
        zones = msh.classify_zones(mesh, phi)
    masked = np.where(phi > -1.0, u, np.nan) if mask_pressure else u
    with open(path, "w", encoding="ascii") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(title + "\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.node_count} double\n")
        for x, y in mesh.nodes:
            f.write(f"{_fmt(x)} {_fmt(y)} 0\n")
        tris = mesh.elements
        f.write(f"CELLS {len(tris)} {4 * len(tris)}\n")
        for a, b, c in tris:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {len(tris)}\n")
        for _ in range(len(tris)):
            f.write("5\n")
        f.write(f"POINT_DATA {mesh.node_count}\n")
        f.write("SCALARS phi double 1\nLOOKUP_TABLE default\n")
        for v in phi:
            f.write(_fmt(v) + "\n")
        f.write("SCALARS u double 1\nLOOKUP_TABLE default\n")
        for v in masked:
            f.write(("nan" if math.isnan(v) else _fmt(v)) + "\n")
        f.write(f"CELL_DATA {len(tris)}\n")
        f.write("SCALARS zone int 1\nLOOKUP_TABLE default\n")
        for z in zones:
            f.write(f"{int(z)}\n")


def write_mesh_vtk(path, mesh, zones=None, title="tgfem mesh"):
    """Mesh-only export with the zone labels as cell data."""
    with open(path, "w", encoding="ascii") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(title + "\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.node_count} double\n")
        for x, y in mesh.nodes:
            f.write(f"{_fmt(x)} {_fmt(y)} 0\n")
        tris = mesh.elements
        f.write(f"CELLS {len(tris)} {4 * len(tris)}\n")
        for a, b, c in tris:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {len(tris)}\n")
        for _ in range(len(tris)):
            f.write("5\n")
        if zones is not None:
            f.write(f"CELL_DATA {len(tris)}\n")
            f.write("SCALARS zone int 1\nLOOKUP_TABLE default\n")
            for z in zones:
                f.write(f"{int(z)}\n")


def read_vtk_snapshot(path):
    """Minimal reader for the files this module writes (round-trip checks)."""
    with open(path, "r", encoding="ascii") as f:
        tokens = f.read().split("\n")
    it = iter(tokens)
    points = None
    cells = None
    point_data = {}
    cell_data = {}
    section = None
    n_named = 0
    for line in it:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            points = np.array([[float(v) for v in next(it).split()]
                               for _ in range(n)])
        elif parts[0] == "CELLS":
            n = int(parts[1])
            cells = np.array([[int(v) for v in next(it).split()[1:]]
                              for _ in range(n)], dtype=np.int64)
        elif parts[0] == "POINT_DATA":
            section, n_named = point_data, int(parts[1])
        elif parts[0] == "CELL_DATA":
            section, n_named = cell_data, int(parts[1])
        elif parts[0] == "SCALARS":
            name, kind = parts[1], parts[2]
            next(it)  # LOOKUP_TABLE line
            conv = float if kind == "double" else int
            section[name] = np.array([conv(next(it)) for _ in range(n_named)])
    return points, cells, point_data, cell_data


TIMESERIES_HEADER = ("t", "R_h", "u_min", "u_max", "phi_min", "phi_max",
                     "identity_err", "phase_slack", "vi_res", "n_nodes",
                     "n_elements")


class TimeSeriesWriter:
    """Appends CSV rows with shortest round-trip decimal formatting."""

    def __init__(self, path, header=TIMESERIES_HEADER):
        self.path = path
        self.header = header
        with open(path, "w", encoding="ascii") as f:
            f.write(",".join(header) + "\n")

    def write_row(self, values):
        cells = []
        for v in values:
            if isinstance(v, float):
                cells.append("nan" if math.isnan(v) else repr(v))
            else:
                cells.append(str(v))
        with open(self.path, "a", encoding="ascii") as f:
            f.write(",".join(cells) + "\n")


def write_radial_csv(path, times, r_sim, r_oracle):
    """Per-run comparison table: t, simulated radius, oracle radius, difference."""
    with open(path, "w", encoding="ascii") as f:
        f.write("t,R_h,R_oracle,diff\n")
        for t, a, b in zip(times, r_sim, r_oracle):
            d = a - b
            f.write(",".join("nan" if math.isnan(v) else repr(float(v))
                             for v in (t, a, b, d)) + "\n")


def write_summary_csv(path, columns, rows):
    """Sweep summary in table layout: one row per configuration."""
    with open(path, "w", encoding="ascii") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, float):
                    cells.append("nan" if math.isnan(v) else repr(v))
                else:
                    cells.append(str(v))
            f.write(",".join(cells) + "\n")
