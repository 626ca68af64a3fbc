"""
Legacy-VTK (ASCII, UNSTRUCTURED_GRID) writer for triangle meshes.
"""
import logging
import os
from typing import Dict, Optional

import numpy as np

from Components.Mesh import TriMesh

logger = logging.getLogger(__name__)

VTK_TRIANGLE = 5


def _fmt(value: float) -> str:
    # +0.0 folds negative zeros so identical fields give identical bytes
    return f"{float(value) + 0.0:.12e}"


def write_vtk(mesh: TriMesh, path, point_vectors: Optional[Dict[str, np.ndarray]] = None,
              point_scalars: Optional[Dict[str, np.ndarray]] = None,
              cell_scalars: Optional[Dict[str, np.ndarray]] = None,
              title: str = "nash-stokes fields") -> str:
    """
    Write fields on ``mesh`` to ``path``.

    Args:
        point_vectors: name -> (n_vertices, 2) arrays
        point_scalars: name -> (n_vertices,) arrays
        cell_scalars: name -> (n_triangles,) arrays; the subdomain label
            index is always written as "subdomain"

    Returns:
        The path written
    """
    point_vectors = point_vectors or {}
    point_scalars = point_scalars or {}
    cell_scalars = dict(cell_scalars or {})
    cell_scalars.setdefault("subdomain", mesh.subdomain_labels)

    for name, values in point_vectors.items():
        if np.shape(values) != (mesh.n_vertices, 2):
            raise ValueError(f"point vector '{name}' must have shape ({mesh.n_vertices}, 2), got {np.shape(values)}")
    for name, values in point_scalars.items():
        if np.shape(values) != (mesh.n_vertices,):
            raise ValueError(f"point scalar '{name}' must have shape ({mesh.n_vertices},), got {np.shape(values)}")
    for name, values in cell_scalars.items():
        if np.shape(values) != (mesh.n_triangles,):
            raise ValueError(f"cell scalar '{name}' must have shape ({mesh.n_triangles},), got {np.shape(values)}")

    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines.extend(f"{_fmt(x)} {_fmt(y)} {_fmt(0.0)}" for x, y in mesh.vertices)
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines.extend([str(VTK_TRIANGLE)] * mesh.n_triangles)

    if point_vectors or point_scalars:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name in sorted(point_vectors):
            lines.append(f"VECTORS {name} double")
            lines.extend(f"{_fmt(u)} {_fmt(v)} {_fmt(0.0)}" for u, v in point_vectors[name])
        for name in sorted(point_scalars):
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(s) for s in point_scalars[name])

    lines.append(f"CELL_DATA {mesh.n_triangles}")
    for name in sorted(cell_scalars):
        lines.append(f"SCALARS {name} int 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(str(int(s)) for s in cell_scalars[name])

    try:
        with open(path, "w", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as e:
        raise OSError(f"Cannot write VTK file {path}: {e}") from e
    logger.info(f"Wrote {os.path.basename(str(path))} ({mesh.n_vertices} points, {mesh.n_triangles} cells)")
    return str(path)


def read_vtk_counts(path) -> Dict[str, int]:
    """Point and cell counts declared in a legacy-VTK file"""
    counts = {}
    with open(path) as handle:
        for line in handle:
            head = line.split()
            if head and head[0] in ("POINTS", "CELLS", "CELL_TYPES"):
                counts[head[0]] = int(head[1])
    return counts
