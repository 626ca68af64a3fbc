"""
Desired velocity built from a stream function on one labelled subdomain:
-lap psi = 1 in the subdomain, psi = 0 on its boundary, y_d = (d_y psi, -d_x psi)
there and zero elsewhere.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from Components.FiniteElements import (FEFunction, FESpace, build_space, dirichlet_dofs, load_vector,
                                       stiffness_matrix, tabulate)
from Components.Mesh import TriMesh
from Components.Quadrature import ASSEMBLY_RULE, QuadratureRule

logger = logging.getLogger(__name__)

# evaluation at the three corners of each triangle
_CORNERS = QuadratureRule(name="corners", points=np.eye(3), weights=np.full(3, 1.0 / 6.0), degree=1)


@dataclass(eq=False)
class StreamfunctionTarget:
    """Velocity target sampled cellwise on the parent mesh"""
    mesh: TriMesh
    label: str
    cells: np.ndarray
    psi: FEFunction

    def _positions(self, cells: np.ndarray) -> np.ndarray:
        position = np.full(self.mesh.n_triangles, -1, dtype=np.int64)
        position[self.cells] = np.arange(len(self.cells))
        return position[cells]

    def sample(self, cells: np.ndarray, rule: QuadratureRule) -> np.ndarray:
        """(len(cells), q, 2) values of (d_y psi, -d_x psi), zero outside the label"""
        out = np.zeros((len(cells), rule.size, 2))
        position = self._positions(np.asarray(cells))
        inside = position >= 0
        if np.any(inside):
            grad = self.psi.sample_gradient(position[inside], rule)[:, :, 0, :]
            out[inside, :, 0] = grad[..., 1]
            out[inside, :, 1] = -grad[..., 0]
        return out

    def vertex_values(self) -> np.ndarray:
        """(n_vertices, 2) corner values averaged over the labelled triangles"""
        values = self.sample(self.cells, _CORNERS)
        out = np.zeros((self.mesh.n_vertices, 2))
        counts = np.zeros(self.mesh.n_vertices)
        triangles = self.mesh.triangles[self.cells]
        for k in range(3):
            np.add.at(out, triangles[:, k], values[:, k, :])
            np.add.at(counts, triangles[:, k], 1.0)
        return out / np.maximum(counts, 1.0)[:, None]

    @property
    def max_psi(self) -> float:
        return float(self.psi.coeffs.max())


def build_streamfunction_target(mesh: TriMesh, label: str = "O1") -> StreamfunctionTarget:
    """
    Solve the Poisson problem for psi with P2 elements on the ``label`` submesh.

    Raises:
        MeshSpecError: label missing from the mesh
    """
    sub, cells, _ = mesh.submesh([label])
    space = build_space(sub, "P2-scalar")
    K = stiffness_matrix(space).tocsr()
    b = load_vector(space, lambda points: np.ones(points.shape[:-1]))

    fixed = dirichlet_dofs(space)
    free = np.setdiff1d(np.arange(space.dim), fixed)
    psi = np.zeros(space.dim)
    psi[free] = spla.spsolve(K[free][:, free].tocsc(), b[free])

    logger.info(f"Stream function on '{label}': {len(cells)} triangles, max psi {psi.max():.6e}")
    return StreamfunctionTarget(mesh=mesh, label=label, cells=cells, psi=FEFunction(space, psi))


def weak_divergence(target: StreamfunctionTarget, pressure: FESpace, rule: QuadratureRule = ASSEMBLY_RULE) -> np.ndarray:
    """integral of y_d . grad q_j for every pressure basis function q_j"""
    cells = target.cells
    tab = tabulate(pressure, cells, rule)
    values = target.sample(cells, rule)
    local = np.einsum("mq,mqd,mqjd->mj", tab.weights, values, tab.gradients)
    out = np.zeros(pressure.dim)
    np.add.at(out, pressure.local_dofs(cells), local)
    return out
