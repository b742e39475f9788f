"""Plain-text mesh format and VTK legacy ASCII export.

Text format, one record per line::

    NODES <n>
    <x> <y> <tag>          # tag: interior | epicardial | body_surface | blood
    TRIANGLES <m>
    <i> <j> <k> [region]   # zero-based node indices, region 0 torso / 1 heart

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import GeometryError
from .mesh import TAG_CODES, TAG_NAMES, CurveMesh, Mesh2D


def write_mesh(mesh: Mesh2D, path) -> Path:
    path = Path(path)
    lines = [f"NODES {mesh.n_nodes}"]
    for (x, y), tag in zip(mesh.nodes, mesh.tags):
        lines.append(f"{x:.17g} {y:.17g} {TAG_NAMES[int(tag)]}")
    lines.append(f"TRIANGLES {mesh.n_elements}")
    for (i, j, k), reg in zip(mesh.triangles, mesh.regions):
        lines.append(f"{i} {j} {k} {reg}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_mesh(path) -> Mesh2D:
    records = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            records.append(line.split())
    try:
        if records[0][0].upper() != "NODES":
            raise GeometryError(f"{path}: expected 'NODES <n>' header")
        n = int(records[0][1])
        node_recs = records[1:1 + n]
        tri_header = records[1 + n]
        if tri_header[0].upper() != "TRIANGLES":
            raise GeometryError(f"{path}: expected 'TRIANGLES <m>' after {n} nodes")
        m = int(tri_header[1])
        tri_recs = records[2 + n:2 + n + m]
    except (IndexError, ValueError) as exc:
        raise GeometryError(f"{path}: malformed mesh file ({exc})") from exc
    if len(node_recs) != n or len(tri_recs) != m:
        raise GeometryError(f"{path}: record count does not match header")
    nodes = np.array([[float(r[0]), float(r[1])] for r in node_recs])
    tags = []
    for i, r in enumerate(node_recs):
        tag = r[2] if len(r) > 2 else "interior"
        if tag not in TAG_CODES:
            raise GeometryError(f"{path}: node {i} has unknown tag {tag!r}")
        tags.append(TAG_CODES[tag])
    tris = np.array([[int(v) for v in r[:3]] for r in tri_recs], dtype=np.int64)
    regions = np.array([int(r[3]) if len(r) > 3 else 0 for r in tri_recs], dtype=np.int64)
    return Mesh2D(nodes, tris, np.array(tags), regions)


def write_vtk(path, mesh, point_data: dict | None = None, title: str = "ecgilab") -> Path:
    """Write a legacy ASCII ``.vtk`` unstructured grid (triangles or a closed polyline)."""
    path = Path(path)
    if isinstance(mesh, CurveMesh):
        pts, cells, cell_type = mesh.points, mesh.segments, 3  # VTK_LINE
    else:
        pts, cells, cell_type = mesh.nodes, mesh.triangles, 5  # VTK_TRIANGLE
    k = cells.shape[1]
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(pts)} double",
    ]
    out += [f"{x:.9g} {y:.9g} 0" for x, y in pts]
    out.append(f"CELLS {len(cells)} {len(cells) * (k + 1)}")
    out += [f"{k} " + " ".join(str(int(v)) for v in c) for c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(cell_type)] * len(cells)
    if point_data:
        out.append(f"POINT_DATA {len(pts)}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out += [f"{v:.9g}" for v in values]
    path.write_text("\n".join(out) + "\n")
    return path
