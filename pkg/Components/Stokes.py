"""
Constrained Stokes solves for state and adjoint problems.

One bordered saddle matrix

    [[A_ff, B_f^T, 0  ],
     [B_f,  0,     m_p],
     [0,    m_p^T, 0  ]]

is factorized per mesh and reused for every state and adjoint solve;
the last row pins the pressure mean to zero.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from Components.FiniteElements import AssembledForms, FEFunction, apply_dirichlet, load_vector

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
DIVERGENCE_TOL = 1e-10
MEAN_TOL = 1e-10


class SolverError(RuntimeError):
    """Factorization failure or violated solve invariant"""


@dataclass(eq=False)
class FlowField:
    """Velocity (P2 vector, full length), pressure (P1) and mean multiplier"""
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float = 0.0

    def __add__(self, other: "FlowField") -> "FlowField":
        return FlowField(self.velocity + other.velocity, self.pressure + other.pressure,
                         self.multiplier + other.multiplier)


class StokesProblem:
    """
    Factorized Stokes operator on one mesh.

    Args:
        forms: assembled forms; forms.nu is the viscosity
    """

    def __init__(self, forms: AssembledForms):
        if forms.nu <= 0:
            raise ValueError(f"viscosity must be positive, got {forms.nu}")
        self.forms = forms
        self.view = apply_dirichlet(forms)
        self.nu = forms.nu

        n_free = self.view.n_free
        n_p = forms.pressure.dim
        m_p = sp.csr_matrix(forms.m_p.reshape(-1, 1))
        self.matrix = sp.bmat([
            [self.view.A_ff, self.view.B_f.T, None],
            [self.view.B_f, None, m_p],
            [None, m_p.T, None],
        ], format="csc")
        self._sizes = (n_free, n_p)

        try:
            self._lu = spla.splu(self.matrix)
            self._control_lu = tuple(spla.splu(M.tocsc()) for M in forms.M_ctl)
        except RuntimeError as e:
            raise SolverError(f"Stokes saddle matrix is singular ({self.matrix.shape[0]} unknowns): {e}") from e

        logger.debug(f"Factorized Stokes system: {n_free} free velocity dofs, {n_p} pressure dofs")

    @property
    def n_players(self) -> int:
        return len(self.forms.C)

    def field_load(self, source) -> np.ndarray:
        """
        Load vector of a velocity-space forcing.

        Args:
            source: None, a velocity coefficient vector, an FEFunction,
                or a callable / sampler of (..., 2) values
        """
        if source is None:
            return np.zeros(self.forms.velocity.dim)
        if isinstance(source, np.ndarray):
            if source.shape != (self.forms.velocity.dim,):
                raise ValueError(f"velocity field needs {self.forms.velocity.dim} coefficients, got {source.shape}")
            return self.forms.M_vel @ source
        if isinstance(source, FEFunction) and source.space is self.forms.velocity:
            return self.forms.M_vel @ source.coeffs
        return load_vector(self.forms.velocity, source)

    def control_load(self, i: int, u) -> np.ndarray:
        C = self.forms.C[self._index(i)]
        if u is None:
            return np.zeros(C.shape[0])
        u = np.asarray(u, dtype=float)
        if u.shape != (C.shape[1],):
            raise ValueError(f"player {i} control needs {C.shape[1]} coefficients, got {u.shape}")
        return C @ u

    def _index(self, i: int) -> int:
        if i not in range(1, self.n_players + 1):
            raise ValueError(f"player index must be in 1..{self.n_players}, got {i}")
        return i - 1

    def solve(self, load: np.ndarray) -> FlowField:
        """Solve with a full-length velocity load; boundary rows are dropped"""
        n_free, n_p = self._sizes
        rhs = np.zeros(self.matrix.shape[0])
        rhs[:n_free] = self.view.restrict(load)
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return FlowField(np.zeros(self.forms.velocity.dim), np.zeros(n_p), 0.0)

        x = self._lu.solve(rhs)
        x += self._lu.solve(rhs - self.matrix @ x)

        residual = np.linalg.norm(rhs - self.matrix @ x) / rhs_norm
        if residual > RESIDUAL_TOL:
            raise SolverError(f"Stokes solve residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")

        y_free, p, multiplier = x[:n_free], x[n_free:n_free + n_p], x[-1]
        # gradient forcing gives y = 0, so the load norm bounds the scale from below
        scale = max(np.linalg.norm(y_free), rhs_norm)
        divergence = np.abs(self.view.B_f @ y_free).max(initial=0.0)
        if divergence > DIVERGENCE_TOL * scale:
            raise SolverError(f"discrete divergence {divergence:.3e} exceeds {DIVERGENCE_TOL:.0e} * {scale:.3e}")
        mean = abs(self.forms.m_p @ p)
        # absolute while the integral of |p| stays below 1
        if mean > MEAN_TOL * max(1.0, float(np.abs(self.forms.m_p) @ np.abs(p))):
            raise SolverError(f"pressure mean {mean:.3e} is not zero")

        return FlowField(self.view.extend(y_free), p, float(multiplier))

    def control_mass_solve(self, i: int, rhs: np.ndarray) -> np.ndarray:
        return self._control_lu[self._index(i)].solve(rhs)

    def energy_gap(self, field: FlowField, load: np.ndarray) -> float:
        """|a(y, y) - (load, y)| relative to a(y, y)"""
        energy = field.velocity @ (self.forms.A @ field.velocity)
        work = load @ field.velocity
        return abs(energy - work) / max(abs(energy), np.finfo(float).tiny)


def solve_state(problem: StokesProblem, f=None, u1=None, u2=None) -> FlowField:
    """State (y, p) for source f and controls u1, u2"""
    load = problem.field_load(f) + problem.control_load(1, u1) + problem.control_load(2, u2)
    return problem.solve(load)


def solve_adjoint(problem: StokesProblem, residual=None, load=None) -> FlowField:
    """
    Adjoint (phi, r) for a tracking residual.

    Args:
        residual: velocity-space field (coefficients, FEFunction or callable)
        load: extra load vector added to the residual's load, e.g. minus a
            target's load
    """
    total = problem.field_load(residual)
    if load is not None:
        total = total + load
    return problem.solve(total)


def apply_Si(problem: StokesProblem, i: int, v) -> np.ndarray:
    """Velocity of the state driven by control v in player i's slot"""
    return problem.solve(problem.control_load(i, v)).velocity


def apply_Si_star(problem: StokesProblem, i: int, w: np.ndarray) -> np.ndarray:
    """L2 representation in control space i of the adjoint of apply_Si, applied to w"""
    adjoint = solve_adjoint(problem, np.asarray(w, dtype=float))
    return restrict_adjoint(problem, i, adjoint.velocity)


def restrict_adjoint(problem: StokesProblem, i: int, phi: np.ndarray) -> np.ndarray:
    """Control-space projection of an adjoint velocity on player i's subdomain"""
    C = problem.forms.C[problem._index(i)]
    return problem.control_mass_solve(i, C.T @ phi)
