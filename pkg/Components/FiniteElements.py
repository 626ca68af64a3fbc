"""
Lagrange finite element spaces on TriMesh and the bilinear forms of the
Stokes control problem.

Spaces:
    P2-vector   velocity, adjoint velocity
    P1-scalar   pressure, adjoint pressure
    P0-vector / P1-vector   controls (on the player's control cells)
    P2-scalar   stream functions

Vector dofs are component blocked: dof (c, a) lives at c * scalar_dim + a.
P2 scalar dofs on the full mesh are numbered vertices first then edges,
so vertex i -> i and edge e -> n_vertices + e.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Literal, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from Components.Mesh import TriMesh
from Components.Quadrature import ASSEMBLY_RULE, ERROR_RULE, QuadratureRule, physical_points

logger = logging.getLogger(__name__)

Family = Literal["P0-vector", "P1-scalar", "P1-vector", "P2-scalar", "P2-vector"]

_DEGREE = {"P0": 0, "P1": 1, "P2": 2}


@dataclass(frozen=True, eq=False)
class FESpace:
    mesh: TriMesh
    family: str
    cells: np.ndarray
    dof_map: np.ndarray
    global_ids: np.ndarray
    n_components: int

    @property
    def degree(self) -> int:
        return _DEGREE[self.family.split("-")[0]]

    @property
    def scalar_dim(self) -> int:
        return len(self.global_ids)

    @property
    def dim(self) -> int:
        return self.n_components * self.scalar_dim

    @property
    def n_local(self) -> int:
        return self.dof_map.shape[1]

    @property
    def cell_position(self) -> np.ndarray:
        position = np.full(self.mesh.n_triangles, -1, dtype=np.int64)
        position[self.cells] = np.arange(len(self.cells))
        return position

    def local_dofs(self, cells: np.ndarray) -> np.ndarray:
        position = self.cell_position[cells]
        if np.any(position < 0):
            raise ValueError(f"{self.family} space is not defined on every requested cell")
        return self.dof_map[position]

    def __repr__(self):
        return f"FESpace({self.family}, dim={self.dim}, cells={len(self.cells)})"


def build_space(mesh: TriMesh, family: Family, cells: Optional[np.ndarray] = None) -> FESpace:
    """
    Args:
        mesh: triangulation
        family: element family, e.g. "P2-vector"
        cells: triangle indices the space lives on (default: all)
    """
    kind, _, shape = family.partition("-")
    if kind not in _DEGREE or shape not in ("scalar", "vector"):
        raise ValueError(f"unknown element family '{family}'")
    cells = np.arange(mesh.n_triangles) if cells is None else np.sort(np.asarray(cells, dtype=np.int64))
    if len(cells) == 0:
        raise ValueError(f"cannot build a {family} space on an empty cell set")

    if kind == "P0":
        global_map = cells[:, None]
    elif kind == "P1":
        global_map = mesh.triangles[cells]
    else:
        global_map = np.hstack([mesh.triangles, mesh.n_vertices + mesh.triangle_edges])[cells]

    global_ids, local = np.unique(global_map, return_inverse=True)
    return FESpace(
        mesh=mesh,
        family=family,
        cells=cells,
        dof_map=local.reshape(global_map.shape),
        global_ids=global_ids,
        n_components=2 if shape == "vector" else 1,
    )


def reference_basis(degree: int, rule: QuadratureRule):
    """
    Basis values and barycentric derivatives at the rule points.

    Returns:
        values (q, n_local), dlam (q, n_local, 3)
    """
    lam = rule.points
    q = len(lam)
    if degree == 0:
        return np.ones((q, 1)), np.zeros((q, 1, 3))
    if degree == 1:
        return lam.copy(), np.broadcast_to(np.eye(3), (q, 3, 3)).copy()

    values = np.empty((q, 6))
    dlam = np.zeros((q, 6, 3))
    for i in range(3):
        values[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        dlam[:, i, i] = 4.0 * lam[:, i] - 1.0
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        values[:, 3 + k] = 4.0 * lam[:, a] * lam[:, b]
        dlam[:, 3 + k, a] = 4.0 * lam[:, b]
        dlam[:, 3 + k, b] = 4.0 * lam[:, a]
    return values, dlam


def barycentric_gradients(corners: np.ndarray):
    """
    Args:
        corners: (M, 3, 2)

    Returns:
        grad_lambda (M, 3, 2), det (M,) with det = 2 * area
    """
    x, y = corners[..., 0], corners[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grad = np.empty(corners.shape)
    grad[:, 0, 0] = y[:, 1] - y[:, 2]
    grad[:, 0, 1] = x[:, 2] - x[:, 1]
    grad[:, 1, 0] = y[:, 2] - y[:, 0]
    grad[:, 1, 1] = x[:, 0] - x[:, 2]
    grad[:, 2, 0] = y[:, 0] - y[:, 1]
    grad[:, 2, 1] = x[:, 1] - x[:, 0]
    return grad / det[:, None, None], det


@dataclass
class Tabulation:
    values: np.ndarray      # (q, n_local)
    gradients: np.ndarray   # (M, q, n_local, 2)
    weights: np.ndarray     # (M, q)


def tabulate(space: FESpace, cells: np.ndarray, rule: QuadratureRule) -> Tabulation:
    values, dlam = reference_basis(space.degree, rule)
    grad_lambda, det = barycentric_gradients(space.mesh.corners[cells])
    gradients = np.einsum("qik,mkd->mqid", dlam, grad_lambda)
    weights = rule.weights[None, :] * det[:, None]
    return Tabulation(values, gradients, weights)


def _scatter(rows: np.ndarray, cols: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def _block_diag(matrix: sp.spmatrix, n: int) -> sp.csr_matrix:
    return sp.block_diag([matrix] * n, format="csr")


def mass_matrix(space: FESpace, cells=None, rule=ASSEMBLY_RULE) -> sp.csr_matrix:
    """Scalar mass matrix of ``space`` (component blocked for vector spaces)"""
    cells = space.cells if cells is None else cells
    tab = tabulate(space, cells, rule)
    local = np.einsum("mq,qa,qb->mab", tab.weights, tab.values, tab.values)
    dofs = space.local_dofs(cells)
    scalar = _scatter(dofs, dofs, local, (space.scalar_dim, space.scalar_dim))
    return _block_diag(scalar, space.n_components)


def stiffness_matrix(space: FESpace, cells=None, rule=ASSEMBLY_RULE) -> sp.csr_matrix:
    cells = space.cells if cells is None else cells
    tab = tabulate(space, cells, rule)
    local = np.einsum("mq,mqad,mqbd->mab", tab.weights, tab.gradients, tab.gradients)
    dofs = space.local_dofs(cells)
    scalar = _scatter(dofs, dofs, local, (space.scalar_dim, space.scalar_dim))
    return _block_diag(scalar, space.n_components)


def divergence_matrix(velocity: FESpace, pressure: FESpace, rule=ASSEMBLY_RULE) -> sp.csr_matrix:
    """B[j, (c, a)] = -integral psi_j * d_c phi_a"""
    cells = velocity.cells
    tab_v = tabulate(velocity, cells, rule)
    tab_p = tabulate(pressure, cells, rule)
    rows = pressure.local_dofs(cells)
    cols = velocity.local_dofs(cells)
    blocks = []
    for c in range(2):
        local = -np.einsum("mq,qj,mqa->mja", tab_v.weights, tab_p.values, tab_v.gradients[..., c])
        blocks.append(_scatter(rows, cols, local, (pressure.scalar_dim, velocity.scalar_dim)))
    return sp.hstack(blocks, format="csr")


def coupling_matrix(velocity: FESpace, control: FESpace, rule=ASSEMBLY_RULE) -> sp.csr_matrix:
    """C[(c, a), (c, b)] = integral over the control cells of phi_a * chi_b"""
    cells = control.cells
    tab_v = tabulate(velocity, cells, rule)
    tab_c = tabulate(control, cells, rule)
    local = np.einsum("mq,qa,qb->mab", tab_v.weights, tab_v.values, tab_c.values)
    scalar = _scatter(velocity.local_dofs(cells), control.local_dofs(cells), local,
                      (velocity.scalar_dim, control.scalar_dim))
    return _block_diag(scalar, 2)


def mean_vector(pressure: FESpace, rule=ASSEMBLY_RULE) -> np.ndarray:
    """m[j] = integral of psi_j"""
    tab = tabulate(pressure, pressure.cells, rule)
    local = np.einsum("mq,qj->mj", tab.weights, tab.values)
    out = np.zeros(pressure.scalar_dim)
    np.add.at(out, pressure.local_dofs(pressure.cells), local)
    return out


@dataclass(eq=False)
class AssembledForms:
    """Sparse matrices of the discrete state/adjoint/control problem"""
    velocity: FESpace
    pressure: FESpace
    controls: tuple
    nu: float
    A: sp.csr_matrix
    B: sp.csr_matrix
    M_vel: sp.csr_matrix
    M_p: sp.csr_matrix
    m_p: np.ndarray
    M_ctl: tuple
    C: tuple

    @property
    def mesh(self) -> TriMesh:
        return self.velocity.mesh


def assemble(velocity: FESpace, pressure: FESpace, controls: Sequence[FESpace], nu: float) -> AssembledForms:
    """
    Args:
        velocity: P2-vector space on the whole mesh
        pressure: P1-scalar space on the whole mesh
        controls: one vector control space per player
        nu: viscosity (> 0)
    """
    if nu <= 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    if velocity.family != "P2-vector" or pressure.family != "P1-scalar":
        raise ValueError("state spaces must be the P2-vector / P1-scalar Taylor-Hood pair")
    for space in (pressure, *controls):
        if space.mesh is not velocity.mesh:
            raise ValueError("all spaces must be built on the same mesh")
    for space in controls:
        if space.n_components != 2:
            raise ValueError(f"control space must be vector valued, got {space.family}")

    forms = AssembledForms(
        velocity=velocity,
        pressure=pressure,
        controls=tuple(controls),
        nu=float(nu),
        A=nu * stiffness_matrix(velocity),
        B=divergence_matrix(velocity, pressure),
        M_vel=mass_matrix(velocity),
        M_p=mass_matrix(pressure),
        m_p=mean_vector(pressure),
        M_ctl=tuple(mass_matrix(space) for space in controls),
        C=tuple(coupling_matrix(velocity, space) for space in controls),
    )
    logger.debug(f"Assembled forms: velocity dim {velocity.dim}, pressure dim {pressure.dim}, "
                 f"controls {[space.dim for space in controls]}")
    return forms


Source = Union[None, Callable[[np.ndarray], np.ndarray], "FEFunction"]


def evaluate(source, mesh: TriMesh, cells: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """
    Values of ``source`` at the rule points of ``cells``.

    ``source`` is either an object with ``sample(cells, rule)`` or a callable
    mapping (..., 2) points to (..., n_components) values.
    """
    if hasattr(source, "sample"):
        return source.sample(cells, rule)
    values = np.asarray(source(physical_points(mesh.corners[cells], rule)), dtype=float)
    if values.ndim == 2:
        values = values[..., None]
    return values


def load_vector(space: FESpace, source, cells=None, rule=ASSEMBLY_RULE) -> np.ndarray:
    """b[(c, a)] = integral of source_c * phi_a"""
    out = np.zeros(space.dim)
    if source is None:
        return out
    cells = space.cells if cells is None else cells
    tab = tabulate(space, cells, rule)
    values = evaluate(source, space.mesh, cells, rule)
    if values.shape[-1] != space.n_components:
        raise ValueError(f"source has {values.shape[-1]} components, {space.family} expects {space.n_components}")
    dofs = space.local_dofs(cells)
    for c in range(space.n_components):
        local = np.einsum("mq,qa,mq->ma", tab.weights, tab.values, values[..., c])
        np.add.at(out, c * space.scalar_dim + dofs, local)
    return out


@dataclass(eq=False)
class FEFunction:
    """Coefficient vector on a space; samples to zero outside the space's cells"""
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got {self.coeffs.shape}")

    def _components(self) -> np.ndarray:
        return self.coeffs.reshape(self.space.n_components, self.space.scalar_dim)

    def sample(self, cells: np.ndarray, rule: QuadratureRule) -> np.ndarray:
        """(len(cells), q, n_components)"""
        out = np.zeros((len(cells), rule.size, self.space.n_components))
        position = self.space.cell_position[cells]
        inside = position >= 0
        if not np.any(inside):
            return out
        values, _ = reference_basis(self.space.degree, rule)
        local = self._components()[:, self.space.dof_map[position[inside]]]
        out[inside] = np.einsum("qa,cma->mqc", values, local)
        return out

    def sample_gradient(self, cells: np.ndarray, rule: QuadratureRule) -> np.ndarray:
        """(len(cells), q, n_components, 2)"""
        out = np.zeros((len(cells), rule.size, self.space.n_components, 2))
        position = self.space.cell_position[cells]
        inside = position >= 0
        if not np.any(inside):
            return out
        tab = tabulate(self.space, cells[inside], rule)
        local = self._components()[:, self.space.dof_map[position[inside]]]
        out[inside] = np.einsum("mqad,cma->mqcd", tab.gradients, local)
        return out

    def vertex_values(self) -> np.ndarray:
        """(n_vertices, n_components) nodal values, zero at vertices outside the space"""
        mesh = self.space.mesh
        out = np.zeros((mesh.n_vertices, self.space.n_components))
        if self.space.degree == 0:
            counts = np.zeros(mesh.n_vertices)
            tri = mesh.triangles[self.space.cells]
            for k in range(3):
                np.add.at(out, tri[:, k], self._components().T)
                np.add.at(counts, tri[:, k], 1.0)
            return out / np.maximum(counts, 1.0)[:, None]
        values = self._components().T
        is_vertex = self.space.global_ids < mesh.n_vertices
        out[self.space.global_ids[is_vertex]] = values[is_vertex]
        return out


def squared_norm(source, mesh: TriMesh, cells=None, rule=ERROR_RULE) -> float:
    """integral of |source|^2 over ``cells`` (default: whole mesh)"""
    if source is None:
        return 0.0
    cells = np.arange(mesh.n_triangles) if cells is None else cells
    _, det = barycentric_gradients(mesh.corners[cells])
    values = evaluate(source, mesh, cells, rule)
    return float(np.einsum("mq,mqc,mqc->", rule.weights[None, :] * det[:, None], values, values))


def l2_project(source, space: FESpace, rule=ERROR_RULE) -> np.ndarray:
    """L2 projection onto ``space`` restricted to its own cells"""
    rhs = load_vector(space, source, rule=rule)
    return spla.spsolve(mass_matrix(space).tocsc(), rhs)


def dof_coordinates(space: FESpace) -> np.ndarray:
    """(scalar_dim, 2) nodal points: vertices, edge midpoints, or centroids for P0"""
    mesh = space.mesh
    ids = space.global_ids
    if space.degree == 0:
        return mesh.centroids[ids]
    coords = np.empty((len(ids), 2))
    is_vertex = ids < mesh.n_vertices
    coords[is_vertex] = mesh.vertices[ids[is_vertex]]
    edges = mesh.edges[ids[~is_vertex] - mesh.n_vertices]
    coords[~is_vertex] = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    return coords


def interpolate(source: Callable[[np.ndarray], np.ndarray], space: FESpace) -> np.ndarray:
    """Nodal interpolant coefficients of a point-evaluable source"""
    values = np.asarray(source(dof_coordinates(space)), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return values.T.reshape(-1).copy()


def dirichlet_dofs(space: FESpace) -> np.ndarray:
    """Vector dofs on the boundary of the mesh (homogeneous Dirichlet set)"""
    mesh = space.mesh
    if space.degree != 2:
        raise ValueError("Dirichlet dofs are defined for P2 spaces")
    boundary_global = np.concatenate([
        np.flatnonzero(mesh.boundary_vertex_flags),
        mesh.n_vertices + np.flatnonzero(mesh.boundary_edge_flags),
    ])
    scalar = np.flatnonzero(np.isin(space.global_ids, boundary_global))
    return np.concatenate([c * space.scalar_dim + scalar for c in range(space.n_components)])


@dataclass(eq=False)
class DirichletView:
    """Forms restricted to the free (interior) velocity dofs"""
    forms: AssembledForms
    fixed: np.ndarray
    free: np.ndarray
    A_ff: sp.csr_matrix = field(init=False)
    B_f: sp.csr_matrix = field(init=False)
    M_ff: sp.csr_matrix = field(init=False)
    C_f: tuple = field(init=False)

    def __post_init__(self):
        f = self.free
        self.A_ff = self.forms.A[f][:, f].tocsr()
        self.B_f = self.forms.B[:, f].tocsr()
        self.M_ff = self.forms.M_vel[f][:, f].tocsr()
        self.C_f = tuple(C[f].tocsr() for C in self.forms.C)

    @property
    def n_free(self) -> int:
        return len(self.free)

    def restrict(self, vector: np.ndarray) -> np.ndarray:
        return vector[self.free]

    def extend(self, free_values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.forms.velocity.dim)
        out[self.free] = free_values
        return out


def apply_dirichlet(forms: AssembledForms) -> DirichletView:
    fixed = dirichlet_dofs(forms.velocity)
    free = np.setdiff1d(np.arange(forms.velocity.dim), fixed)
    return DirichletView(forms=forms, fixed=fixed, free=free)


def inf_sup_constant(forms: AssembledForms) -> float:
    """
    Discrete inf-sup constant of the velocity/pressure pair with the
    H1-seminorm on velocities and the L2 norm on mean-free pressures.
    Dense: meant for small meshes.
    """
    view = apply_dirichlet(forms)
    laplacian = (view.A_ff / forms.nu).tocsc()
    lu = spla.splu(laplacian)
    Bt = view.B_f.T.toarray()
    schur = view.B_f @ lu.solve(Bt)
    schur = 0.5 * (schur + schur.T)
    eigenvalues = scipy.linalg.eigh(schur, forms.M_p.toarray(), eigvals_only=True)
    # the constant pressure mode spans the kernel
    beta_squared = max(eigenvalues[1], 0.0)
    return float(np.sqrt(beta_squared))


def build_forms(mesh: TriMesh, nu: float, control_cells: Sequence[np.ndarray], control_degree: int = 1) -> AssembledForms:
    """Build the Taylor-Hood pair and one control space per player, then assemble"""
    family = "P1-vector" if control_degree == 1 else "P0-vector"
    velocity = build_space(mesh, "P2-vector")
    pressure = build_space(mesh, "P1-scalar")
    controls = [build_space(mesh, family, cells) for cells in control_cells]
    return assemble(velocity, pressure, controls, nu)
