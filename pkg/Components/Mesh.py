"""
Structured triangulations of rectangles and of the five-rectangle
multi-domain layout, uniform red refinement, and mesh queries.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

WHOLE_DOMAIN = "Omega"
# 1/n lattice tolerance when snapping rectangle coordinates
LATTICE_TOL = 1e-9


class MeshSpecError(ValueError):
    """Raised for geometry descriptions that cannot be meshed"""


class Rectangle(BaseModel):
    """Axis-aligned box with a subdomain label"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    x0: float
    y0: float
    width: float = Field(gt=0)
    height: float = Field(gt=0)

    @property
    def x1(self) -> float:
        return self.x0 + self.width

    @property
    def y1(self) -> float:
        return self.y0 + self.height

    @property
    def area(self) -> float:
        return self.width * self.height


# Four 1x1 boxes joined by a 2 x 0.25 horizontal channel centred on y = 1.
DEFAULT_MULTIDOMAIN = (
    Rectangle(name="Omega1", x0=0.0, y0=1.0, width=1.0, height=1.0),
    Rectangle(name="Omega2", x0=0.0, y0=0.0, width=1.0, height=1.0),
    Rectangle(name="O1", x0=3.0, y0=1.0, width=1.0, height=1.0),
    Rectangle(name="O2", x0=3.0, y0=0.0, width=1.0, height=1.0),
    Rectangle(name="Omega_c", x0=1.0, y0=0.875, width=2.0, height=0.25),
)


class DomainSpec(BaseModel):
    """Geometry description consumed by :func:`generate`"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["unit-square", "rectangle", "multi-domain"] = "unit-square"
    width: float = Field(default=1.0, gt=0)
    height: float = Field(default=1.0, gt=0)
    rectangles: Tuple[Rectangle, ...] = DEFAULT_MULTIDOMAIN
    resolution: int = Field(default=8, ge=1)

    def boxes(self) -> List[Rectangle]:
        if self.kind == "unit-square":
            return [Rectangle(name=WHOLE_DOMAIN, x0=0.0, y0=0.0, width=1.0, height=1.0)]
        if self.kind == "rectangle":
            return [Rectangle(name=WHOLE_DOMAIN, x0=0.0, y0=0.0,
                              width=self.width, height=self.height)]
        return list(self.rectangles)

    def area(self) -> float:
        return sum(box.area for box in self.boxes())

    def labels(self) -> List[str]:
        return [box.name for box in self.boxes()]


def _edge_topology(triangles: np.ndarray):
    # local edge k is opposite local vertex k
    local = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    return edges, inverse.reshape(-1, 3), counts


def _freeze(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Conforming triangulation with per-vertex boundary flags and
    per-triangle subdomain labels (indices into ``label_names``).
    """
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex_flags: np.ndarray
    subdomain_labels: np.ndarray
    label_names: Tuple[str, ...]

    @classmethod
    def from_arrays(cls, vertices, triangles, subdomain_labels=None,
                    label_names=(WHOLE_DOMAIN,)) -> "TriMesh":
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if subdomain_labels is None:
            subdomain_labels = np.zeros(len(triangles), dtype=np.int64)
        subdomain_labels = np.asarray(subdomain_labels, dtype=np.int64)
        if len(subdomain_labels) != len(triangles):
            raise MeshSpecError("subdomain_labels must carry one label per triangle")

        edges, _, counts = _edge_topology(triangles)
        flags = np.zeros(len(vertices), dtype=bool)
        flags[edges[counts == 1].ravel()] = True

        mesh = cls(_freeze(vertices), _freeze(triangles), _freeze(flags),
                   _freeze(subdomain_labels), tuple(label_names))
        if np.any(mesh.signed_areas <= 0.0):
            raise MeshSpecError("triangles must be counter-clockwise with positive area")
        if np.any(counts > 2):
            raise MeshSpecError("non-conforming triangulation: an edge is shared by more than two triangles")
        return mesh

    def __repr__(self):
        return f"TriMesh({self.n_vertices} vertices, {self.n_triangles} triangles, labels={self.label_names})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _topology(self):
        return _edge_topology(self.triangles)

    @property
    def edges(self) -> np.ndarray:
        return self._topology[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        return self._topology[1]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._topology[2]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edge_flags(self) -> np.ndarray:
        return self.edge_counts == 1

    @cached_property
    def corners(self) -> np.ndarray:
        """(M, 3, 2) vertex coordinates per triangle"""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.corners
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return lengths.max(axis=1)

    @property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    def label_index(self, name: str) -> int:
        try:
            return self.label_names.index(name)
        except ValueError:
            raise MeshSpecError(f"unknown subdomain label '{name}', mesh has {list(self.label_names)}") from None

    def cells_in(self, labels: Optional[Iterable[str]]) -> np.ndarray:
        """Triangle indices carrying one of ``labels`` (all triangles for None)"""
        if labels is None:
            return np.arange(self.n_triangles)
        wanted = [self.label_index(name) for name in labels]
        return np.flatnonzero(np.isin(self.subdomain_labels, wanted))

    def submesh(self, labels: Iterable[str]) -> Tuple["TriMesh", np.ndarray, np.ndarray]:
        """
        Extract the triangles carrying ``labels`` as a standalone mesh.

        Returns:
            (submesh, parent triangle indices, parent vertex indices)
        """
        cells = self.cells_in(labels)
        if len(cells) == 0:
            raise MeshSpecError(f"no triangles carry labels {list(labels)}")
        used, local = np.unique(self.triangles[cells], return_inverse=True)
        sub = TriMesh.from_arrays(
            self.vertices[used], local.reshape(-1, 3),
            self.subdomain_labels[cells], self.label_names,
        )
        return sub, cells, used


def _validate_boxes(boxes: Sequence[Rectangle], n: int) -> None:
    for box in boxes:
        for value in (box.x0, box.y0, box.width, box.height):
            if abs(value * n - round(value * n)) > LATTICE_TOL:
                raise MeshSpecError(
                    f"rectangle '{box.name}' does not align with the 1/{n} lattice; "
                    f"choose a resolution for which every coordinate times n is an integer"
                )
    names = [box.name for box in boxes]
    if len(set(names)) != len(names):
        raise MeshSpecError(f"duplicate rectangle names in {names}")

    graph = nx.Graph()
    graph.add_nodes_from(names)
    for a, b in combinations(boxes, 2):
        dx = min(a.x1, b.x1) - max(a.x0, b.x0)
        dy = min(a.y1, b.y1) - max(a.y0, b.y0)
        if dx > LATTICE_TOL and dy > LATTICE_TOL:
            raise MeshSpecError(f"rectangles '{a.name}' and '{b.name}' overlap")
        touch_x = dy > LATTICE_TOL and abs(dx) <= LATTICE_TOL
        touch_y = dx > LATTICE_TOL and abs(dy) <= LATTICE_TOL
        if touch_x or touch_y:
            graph.add_edge(a.name, b.name)
    if not nx.is_connected(graph):
        parts = [sorted(part) for part in nx.connected_components(graph)]
        raise MeshSpecError(f"multi-domain layout is disconnected: {parts}")


def validate_domain(spec: DomainSpec) -> None:
    """Raise MeshSpecError if ``spec`` cannot be meshed at its resolution"""
    _validate_boxes(spec.boxes(), spec.resolution)


def generate(spec: DomainSpec) -> TriMesh:
    """
    Structured mesh of the domain: every box is cut into an n_x-by-n_y grid
    of cells, each split along its (0,0)-(1,1) diagonal. Boxes share the
    global 1/n lattice, so coincident lattice points merge and the union is
    conforming.
    """
    n = spec.resolution
    boxes = spec.boxes()
    validate_domain(spec)

    index = {}
    coords = []
    triangles = []
    labels = []
    for label, box in enumerate(boxes):
        i0, j0 = round(box.x0 * n), round(box.y0 * n)
        nx_, ny_ = round(box.width * n), round(box.height * n)
        ids = np.empty((nx_ + 1, ny_ + 1), dtype=np.int64)
        for i in range(nx_ + 1):
            for j in range(ny_ + 1):
                key = (i0 + i, j0 + j)
                if key not in index:
                    index[key] = len(coords)
                    coords.append((key[0] / n, key[1] / n))
                ids[i, j] = index[key]
        for i in range(nx_):
            for j in range(ny_):
                v00, v10 = ids[i, j], ids[i + 1, j]
                v01, v11 = ids[i, j + 1], ids[i + 1, j + 1]
                triangles.append((v00, v10, v11))
                triangles.append((v00, v11, v01))
                labels.extend((label, label))

    mesh = TriMesh.from_arrays(coords, triangles, labels, tuple(box.name for box in boxes))
    logger.info(f"Generated {spec.kind} mesh (n={n}): {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return mesh


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement: every triangle splits into 4 similar children"""
    nv = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    mid = nv + mesh.triangle_edges
    a, b, c = mesh.triangles.T
    m_bc, m_ca, m_ab = mid.T
    children = np.stack([
        np.stack([a, m_ab, m_ca], axis=1),
        np.stack([m_ab, b, m_bc], axis=1),
        np.stack([m_ca, m_bc, c], axis=1),
        np.stack([m_ab, m_bc, m_ca], axis=1),
    ], axis=1).reshape(-1, 3)
    return TriMesh.from_arrays(
        np.vstack([mesh.vertices, midpoints]), children,
        np.repeat(mesh.subdomain_labels, 4), mesh.label_names,
    )


def mesh_size(mesh: TriMesh) -> Tuple[float, float]:
    """(h, h_min): largest and smallest triangle diameter"""
    return float(mesh.diameters.max()), float(mesh.diameters.min())


def quasi_uniformity(mesh: TriMesh) -> float:
    h, h_min = mesh_size(mesh)
    return h / h_min


def mesh_summary(mesh: TriMesh) -> dict:
    h, h_min = mesh_size(mesh)
    return {
        "vertices": mesh.n_vertices,
        "triangles": mesh.n_triangles,
        "h": h,
        "h_min": h_min,
        "labels": list(mesh.label_names),
    }


def is_refinement(coarse: TriMesh, fine: TriMesh) -> bool:
    """True when ``fine`` is one red refinement of ``coarse`` (vertex sets nested)"""
    if fine.n_triangles != 4 * coarse.n_triangles:
        return False
    key = lambda v: {tuple(row) for row in np.round(v, 12)}
    return key(coarse.vertices) <= key(fine.vertices)


def export_mesh(mesh: TriMesh, path) -> None:
    """
    Plain-text node/element file:

        <n_vertices> <n_triangles>
        <i> <x> <y> <boundary 0|1>          (one line per vertex)
        <i> <v0> <v1> <v2> <label name>     (one line per triangle)
    """
    with open(path, "w") as handle:
        handle.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for i, ((x, y), flag) in enumerate(zip(mesh.vertices, mesh.boundary_vertex_flags)):
            handle.write(f"{i} {x:.16e} {y:.16e} {int(flag)}\n")
        for i, (tri, label) in enumerate(zip(mesh.triangles, mesh.subdomain_labels)):
            handle.write(f"{i} {tri[0]} {tri[1]} {tri[2]} {mesh.label_names[label]}\n")
    logger.info(f"Wrote mesh to {path}")
