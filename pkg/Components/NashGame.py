"""
Two-player Nash game for distributed control of Stokes flow.

Player i chooses a control u_i on its subdomain to minimise

    J_i(u1, u2) = 1/2 |y(u1, u2) - y_i,d|^2 + alpha_i / 2 |u_i|^2

where y is the Stokes velocity driven by f + u1 + u2. The equilibrium is
computed by a damped fixed-point map, an optimal-step gradient method,
conjugate gradients on the reduced control operator, or (on coarse meshes)
a dense solve of the full coupled optimality system.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from Components.FiniteElements import FEFunction, build_forms, squared_norm
from Components.Mesh import TriMesh
from Components.Stokes import FlowField, StokesProblem, restrict_adjoint

logger = logging.getLogger(__name__)

DENSE_ORACLE_LIMIT = 5000
# residual growth factor treated as divergence
BLOWUP_FACTOR = 1e8


class NashSolverError(RuntimeError):
    """Equilibrium solver failure; ``history`` holds the residual trail"""

    def __init__(self, message: str, history: Optional[Sequence[Tuple[float, float]]] = None):
        super().__init__(message)
        self.history = list(history or [])


def worker_count(default: int = 2) -> int:
    """Worker cap from NASH_STOKES_THREADS"""
    value = os.getenv("NASH_STOKES_THREADS")
    if not value:
        return default
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning(f"Ignoring NASH_STOKES_THREADS={value!r}: not an integer")
        return default


@dataclass
class PlayerSpec:
    """
    Args:
        alpha: control cost weight (> 0)
        target: desired velocity (callable, sampler, or None for zero)
        subdomain: labels of the control region, None for the whole domain
    """
    alpha: float
    target: Any = None
    subdomain: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class GameSpec:
    nu: float
    players: Tuple[PlayerSpec, PlayerSpec]
    source: Any = None
    control_degree: int = 1

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if len(self.players) != 2:
            raise ValueError(f"the game has exactly two players, got {len(self.players)}")
        if self.control_degree not in (0, 1):
            raise ValueError(f"control_degree must be 0 or 1, got {self.control_degree}")


class SolverOptions(BaseModel):
    method: Literal["fixed-point", "gradient", "reduced-cg", "dense-oracle"] = "reduced-cg"
    tol: float = Field(default=1e-9, gt=0)
    max_iter: int = Field(default=10000, ge=1)
    theta: float = Field(default=1.0, gt=0, le=1)
    sequential: bool = False


@dataclass
class SolverDiagnostics:
    method: str
    iterations: int = 0
    residual_history: List[Tuple[float, float]] = field(default_factory=list)
    converged: bool = False
    cost_history: List[Tuple[float, float]] = field(default_factory=list)
    potential_history: List[float] = field(default_factory=list)

    @property
    def final_residual(self) -> float:
        return max(self.residual_history[-1]) if self.residual_history else math.inf


@dataclass(eq=False)
class EquilibriumBundle:
    state: FlowField
    controls: Tuple[np.ndarray, np.ndarray]
    adjoints: Tuple[FlowField, FlowField]
    diagnostics: SolverDiagnostics


class NashGame:
    """
    Discretized game on one mesh: forms, factorized Stokes operator and
    precomputed data loads.

    Args:
        mesh: triangulation
        spec: game data
        workers: threads for the two per-iteration adjoint solves
    """

    def __init__(self, mesh: TriMesh, spec: GameSpec, workers: Optional[int] = None):
        self.mesh = mesh
        self.spec = spec
        self.workers = worker_count() if workers is None else max(1, workers)
        self.control_cells = tuple(mesh.cells_in(player.subdomain) for player in spec.players)
        self.forms = build_forms(mesh, spec.nu, self.control_cells, spec.control_degree)
        self.problem = StokesProblem(self.forms)
        self.alphas = tuple(float(player.alpha) for player in spec.players)
        self.source_load = self.problem.field_load(spec.source)
        self.target_loads = tuple(self.problem.field_load(player.target) for player in spec.players)
        self.target_norms = tuple(squared_norm(player.target, mesh) for player in spec.players)
        # S_i^* y_i,d
        self.target_adjoints = tuple(restrict_adjoint(self.problem, i, self.problem.solve(load).velocity)
                                     for i, load in enumerate(self.target_loads, 1))
        logger.info(f"Game ready: {self.forms.velocity.dim} velocity dofs, "
                    f"controls {self.control_dims}, alphas {self.alphas}")

    @property
    def control_dims(self) -> Tuple[int, int]:
        return tuple(space.dim for space in self.forms.controls)

    def zero_controls(self) -> Tuple[np.ndarray, np.ndarray]:
        return tuple(np.zeros(n) for n in self.control_dims)

    def control_function(self, i: int, u: np.ndarray) -> FEFunction:
        return FEFunction(self.forms.controls[i - 1], u)

    def control_norm(self, i: int, u: np.ndarray) -> float:
        return float(np.sqrt(max(u @ (self.forms.M_ctl[i - 1] @ u), 0.0)))

    def control_inner(self, i: int, a: np.ndarray, b: np.ndarray) -> float:
        return float(a @ (self.forms.M_ctl[i - 1] @ b))

    def velocity_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(a @ (self.forms.M_vel @ b))

    def state(self, u1, u2) -> FlowField:
        load = self.source_load + self.problem.control_load(1, u1) + self.problem.control_load(2, u2)
        return self.problem.solve(load)

    def adjoint(self, i: int, state: FlowField) -> FlowField:
        """Adjoint driven by the tracking residual y - y_i,d"""
        return self.problem.solve(self.forms.M_vel @ state.velocity - self.target_loads[i - 1])

    def adjoints(self, state: FlowField) -> Tuple[FlowField, FlowField]:
        if self.workers < 2:
            return self.adjoint(1, state), self.adjoint(2, state)
        with ThreadPoolExecutor(max_workers=2) as pool:
            futures = [pool.submit(self.adjoint, i, state) for i in (1, 2)]
            return tuple(future.result() for future in futures)

    def tracking(self, i: int, state: FlowField) -> float:
        y = state.velocity
        value = 0.5 * (self.velocity_inner(y, y) - 2.0 * y @ self.target_loads[i - 1] + self.target_norms[i - 1])
        return float(value)

    def cost_from_state(self, i: int, state: FlowField, u: np.ndarray) -> float:
        return self.tracking(i, state) + 0.5 * self.alphas[i - 1] * self.control_norm(i, u) ** 2

    def gradient_from_adjoint(self, i: int, u: np.ndarray, adjoint: FlowField) -> np.ndarray:
        return self.alphas[i - 1] * u + restrict_adjoint(self.problem, i, adjoint.velocity)

    def potential(self, state: FlowField, controls) -> float:
        """
        Exact potential of the game: 1/2 |y|^2 - sum_i (u_i, S_i^* y_i,d) + sum_i alpha_i/2 |u_i|^2.
        Its partial gradient in u_i is player i's own cost gradient.
        """
        y = state.velocity
        value = 0.5 * self.velocity_inner(y, y)
        for i, (u, z) in enumerate(zip(controls, self.target_adjoints), 1):
            value += 0.5 * self.alphas[i - 1] * self.control_norm(i, u) ** 2 - self.control_inner(i, u, z)
        return float(value)

    def residuals(self, gradients) -> Tuple[float, float]:
        return tuple(self.control_norm(i, g) for i, g in zip((1, 2), gradients))

    def bundle(self, controls, diagnostics: SolverDiagnostics) -> EquilibriumBundle:
        state = self.state(*controls)
        return EquilibriumBundle(state, tuple(controls), self.adjoints(state), diagnostics)


def evaluate_cost(game: NashGame, i: int, u1, u2) -> float:
    """J_i at (u1, u2); one state solve"""
    controls = (np.asarray(u1, dtype=float), np.asarray(u2, dtype=float))
    return game.cost_from_state(i, game.state(*controls), controls[i - 1])


def gradient(game: NashGame, i: int, u1, u2) -> np.ndarray:
    """L2 gradient of J_i with respect to u_i; one state and one adjoint solve"""
    controls = (np.asarray(u1, dtype=float), np.asarray(u2, dtype=float))
    state = game.state(*controls)
    return game.gradient_from_adjoint(i, controls[i - 1], game.adjoint(i, state))


def optimal_step(game: NashGame, i: int, g: np.ndarray) -> float:
    """Exact minimiser of J_i along -g_i: |g|^2 / (|S_i g|^2 + alpha_i |g|^2)"""
    g_norm2 = game.control_norm(i, g) ** 2
    if g_norm2 == 0.0:
        return 0.0
    w = game.problem.solve(game.problem.control_load(i, g)).velocity
    return g_norm2 / (game.velocity_inner(w, w) + game.alphas[i - 1] * g_norm2)


def _check_progress(history, method: str) -> None:
    latest = max(history[-1])
    first = max(history[0])
    if not np.isfinite(latest) or (first > 0 and latest > BLOWUP_FACTOR * first):
        raise NashSolverError(
            f"{method} diverged after {len(history)} iterations: residual {first:.3e} -> {latest:.3e}",
            history,
        )


def _not_converged(method: str, opts: SolverOptions, history) -> NashSolverError:
    tail = ", ".join(f"{max(r):.3e}" for r in history[-5:])
    return NashSolverError(
        f"{method} did not reach tol {opts.tol:.1e} within {opts.max_iter} iterations; last residuals: {tail}",
        history,
    )


def solve_fixed_point(game: NashGame, opts: SolverOptions) -> EquilibriumBundle:
    """
    Damped fixed point u_i <- (1 - theta) u_i - theta / alpha_i * P_i phi_i,
    with phi_i the adjoint of y - y_i,d at the current controls.
    """
    controls = list(game.zero_controls())
    diagnostics = SolverDiagnostics(method="fixed-point")
    history = diagnostics.residual_history

    for n in range(opts.max_iter):
        state = game.state(*controls)
        adjoints = game.adjoints(state)
        gradients = [game.gradient_from_adjoint(i, controls[i - 1], adjoints[i - 1]) for i in (1, 2)]
        history.append(game.residuals(gradients))
        diagnostics.cost_history.append(tuple(game.cost_from_state(i, state, controls[i - 1]) for i in (1, 2)))
        logger.debug(f"fixed-point it {n}: residuals {history[-1][0]:.3e}, {history[-1][1]:.3e}")

        if max(history[-1]) <= opts.tol:
            diagnostics.iterations = n + 1
            diagnostics.converged = True
            return EquilibriumBundle(state, tuple(controls), adjoints, diagnostics)
        _check_progress(history, "fixed-point")

        for i in (1, 2):
            controls[i - 1] = controls[i - 1] - opts.theta / game.alphas[i - 1] * gradients[i - 1]

    raise _not_converged("fixed-point", opts, history)


def solve_gradient(game: NashGame, opts: SolverOptions) -> EquilibriumBundle:
    """
    Optimal-step gradient method. Players update simultaneously, or one after
    the other when ``opts.sequential`` is set.
    """
    controls = list(game.zero_controls())
    diagnostics = SolverDiagnostics(method="gradient")
    history = diagnostics.residual_history

    for n in range(opts.max_iter):
        state = game.state(*controls)
        adjoints = game.adjoints(state)
        gradients = [game.gradient_from_adjoint(i, controls[i - 1], adjoints[i - 1]) for i in (1, 2)]
        history.append(game.residuals(gradients))
        diagnostics.cost_history.append(tuple(game.cost_from_state(i, state, controls[i - 1]) for i in (1, 2)))
        diagnostics.potential_history.append(game.potential(state, controls))
        logger.debug(f"gradient it {n}: residuals {history[-1][0]:.3e}, {history[-1][1]:.3e}")

        if max(history[-1]) <= opts.tol:
            diagnostics.iterations = n + 1
            diagnostics.converged = True
            return EquilibriumBundle(state, tuple(controls), adjoints, diagnostics)
        _check_progress(history, "gradient")

        if opts.sequential:
            controls[0] = controls[0] - optimal_step(game, 1, gradients[0]) * gradients[0]
            g2 = gradient(game, 2, *controls)
            controls[1] = controls[1] - optimal_step(game, 2, g2) * g2
        else:
            steps = [optimal_step(game, i, gradients[i - 1]) for i in (1, 2)]
            for i in (1, 2):
                controls[i - 1] = controls[i - 1] - steps[i - 1] * gradients[i - 1]

    raise _not_converged("gradient", opts, history)


def apply_reduced_operator(game: NashGame, v1: np.ndarray, v2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """R v: one state-type and one adjoint solve shared by both players"""
    y = game.problem.solve(game.problem.control_load(1, v1) + game.problem.control_load(2, v2)).velocity
    phi = game.problem.solve(game.forms.M_vel @ y).velocity
    return tuple(restrict_adjoint(game.problem, i, phi) + game.alphas[i - 1] * v
                 for i, v in zip((1, 2), (v1, v2)))


def reduced_rhs(game: NashGame) -> Tuple[np.ndarray, np.ndarray]:
    y0 = game.problem.solve(game.source_load)
    return tuple(-restrict_adjoint(game.problem, i, game.adjoint(i, y0).velocity) for i in (1, 2))


def solve_reduced_cg(game: NashGame, opts: SolverOptions, max_restarts: int = 3) -> EquilibriumBundle:
    """Conjugate gradients on R u = z in the L2 control inner product"""
    diagnostics = SolverDiagnostics(method="reduced-cg")
    history = diagnostics.residual_history
    inner = lambda a, b: game.control_inner(1, a[0], b[0]) + game.control_inner(2, a[1], b[1])

    z = reduced_rhs(game)
    u = list(game.zero_controls())
    applications = 0

    for restart in range(max_restarts + 1):
        Ru = apply_reduced_operator(game, *u) if restart else game.zero_controls()
        r = [z[k] - Ru[k] for k in range(2)]
        p = [rk.copy() for rk in r]
        rr = inner(r, r)
        while True:
            history.append(tuple(game.control_norm(i, r[i - 1]) for i in (1, 2)))
            if max(history[-1]) <= opts.tol or applications >= opts.max_iter:
                break
            Rp = apply_reduced_operator(game, *p)
            applications += 1
            curvature = inner(p, Rp)
            if not curvature > 0:
                raise NashSolverError(
                    f"reduced operator lost positive definiteness (curvature {curvature:.3e}); "
                    f"this indicates an assembly or solver fault",
                    history,
                )
            step = rr / curvature
            u = [u[k] + step * p[k] for k in range(2)]
            r = [r[k] - step * Rp[k] for k in range(2)]
            rr_new = inner(r, r)
            p = [r[k] + (rr_new / rr) * p[k] for k in range(2)]
            rr = rr_new
            logger.debug(f"reduced-cg it {applications}: residuals {history[-1][0]:.3e}, {history[-1][1]:.3e}")

        bundle = game.bundle(u, diagnostics)
        true_residuals = optimality_residuals(game, bundle)
        if max(true_residuals) <= opts.tol:
            diagnostics.iterations = applications
            diagnostics.converged = True
            return bundle
        if applications >= opts.max_iter:
            break
        logger.debug(f"reduced-cg restart {restart + 1}: true residuals {true_residuals}")

    raise _not_converged("reduced-cg", opts, history)


def _pack(view, flow: FlowField) -> np.ndarray:
    return np.concatenate([view.restrict(flow.velocity), flow.pressure, [flow.multiplier]])


def _saddle_vector(game: NashGame, velocity_load: np.ndarray) -> np.ndarray:
    out = np.zeros(game.problem.matrix.shape[0])
    out[:game.problem.view.n_free] = game.problem.view.restrict(velocity_load)
    return out


def _dense_blocks(game: NashGame):
    """Saddle matrix K, mass lift L (velocity rows only), and control couplings"""
    view = game.problem.view
    n_saddle = game.problem.matrix.shape[0]
    n_free = view.n_free
    K = game.problem.matrix.toarray()
    L = np.zeros((n_saddle, n_saddle))
    L[:n_free, :n_free] = view.M_ff.toarray()
    couplings = []
    for C_f in view.C_f:
        block = np.zeros((n_saddle, C_f.shape[1]))
        block[:n_free] = C_f.toarray()
        couplings.append(block)
    return K, L, couplings


def solve_dense_oracle(game: NashGame, opts: Optional[SolverOptions] = None) -> EquilibriumBundle:
    """
    Direct solve of the monolithic system

        K y            - C1 u1    - C2 u2    = f
       -L y  + K phi1                         = -b1
       -L y           + K phi2                = -b2
              C1^T phi1         + a1 M1 u1    = 0
                       C2^T phi2          + a2 M2 u2 = 0

    Coarse meshes only.
    """
    view = game.problem.view
    n_saddle = game.problem.matrix.shape[0]
    n_free = view.n_free
    nc1, nc2 = game.control_dims
    total = 3 * n_saddle + nc1 + nc2
    if total > DENSE_ORACLE_LIMIT:
        raise NashSolverError(f"dense oracle needs {total} unknowns, limit is {DENSE_ORACLE_LIMIT}; use a coarser mesh")

    K, L, (C1, C2) = _dense_blocks(game)
    M1, M2 = (M.toarray() for M in game.forms.M_ctl)
    Z = np.zeros
    matrix = np.block([
        [K, Z((n_saddle, n_saddle)), Z((n_saddle, n_saddle)), -C1, -C2],
        [-L, K, Z((n_saddle, n_saddle)), Z((n_saddle, nc1)), Z((n_saddle, nc2))],
        [-L, Z((n_saddle, n_saddle)), K, Z((n_saddle, nc1)), Z((n_saddle, nc2))],
        [Z((nc1, n_saddle)), C1.T, Z((nc1, n_saddle)), game.alphas[0] * M1, Z((nc1, nc2))],
        [Z((nc2, n_saddle)), Z((nc2, n_saddle)), C2.T, Z((nc2, nc1)), game.alphas[1] * M2],
    ])
    rhs = np.concatenate([
        _saddle_vector(game, game.source_load),
        -_saddle_vector(game, game.target_loads[0]),
        -_saddle_vector(game, game.target_loads[1]),
        np.zeros(nc1 + nc2),
    ])
    try:
        x = scipy.linalg.solve(matrix, rhs)
    except scipy.linalg.LinAlgError as e:
        raise NashSolverError(f"monolithic optimality matrix is singular ({total} unknowns): {e}") from e

    def unpack(chunk):
        return FlowField(view.extend(chunk[:n_free]), chunk[n_free:-1].copy(), float(chunk[-1]))

    state = unpack(x[:n_saddle])
    adjoints = (unpack(x[n_saddle:2 * n_saddle]), unpack(x[2 * n_saddle:3 * n_saddle]))
    controls = (x[3 * n_saddle:3 * n_saddle + nc1].copy(), x[3 * n_saddle + nc1:].copy())

    diagnostics = SolverDiagnostics(method="dense-oracle", iterations=1, converged=True)
    bundle = EquilibriumBundle(state, controls, adjoints, diagnostics)
    diagnostics.residual_history.append(optimality_residuals(game, bundle))
    logger.info(f"Dense oracle solved {total} unknowns")
    return bundle


def optimality_residuals(game: NashGame, bundle: EquilibriumBundle) -> Tuple[float, float]:
    """L2 norms of alpha_i u_i + P_i phi_i for both players"""
    return game.residuals([
        game.gradient_from_adjoint(i, bundle.controls[i - 1], bundle.adjoints[i - 1]) for i in (1, 2)
    ])


def optimality_system_residuals(game: NashGame, bundle: EquilibriumBundle) -> dict:
    """
    Relative residual of each block row of the discrete optimality system
    (state, both adjoints, both optimality conditions) for ``bundle``.
    """
    problem = game.problem
    view = problem.view
    K = problem.matrix
    tiny = np.finfo(float).tiny

    def relative(lhs_terms, rhs):
        residual = sum(lhs_terms) - rhs
        scale = max(max(np.linalg.norm(t) for t in lhs_terms), np.linalg.norm(rhs), tiny)
        return float(np.linalg.norm(residual) / scale)

    y = _pack(view, bundle.state)
    u1, u2 = bundle.controls
    rows = {
        "state": relative(
            [K @ y, -_saddle_vector(game, problem.control_load(1, u1)),
             -_saddle_vector(game, problem.control_load(2, u2))],
            _saddle_vector(game, game.source_load),
        ),
    }
    for i in (1, 2):
        phi = _pack(view, bundle.adjoints[i - 1])
        rows[f"adjoint{i}"] = relative(
            [K @ phi, -_saddle_vector(game, game.forms.M_vel @ bundle.state.velocity)],
            -_saddle_vector(game, game.target_loads[i - 1]),
        )
        C_f = view.C_f[i - 1]
        u = bundle.controls[i - 1]
        rows[f"optimality{i}"] = relative(
            [C_f.T @ view.restrict(bundle.adjoints[i - 1].velocity),
             game.alphas[i - 1] * (game.forms.M_ctl[i - 1] @ u)],
            np.zeros_like(u),
        )
    return rows


SOLVERS = {
    "fixed-point": solve_fixed_point,
    "gradient": solve_gradient,
    "reduced-cg": solve_reduced_cg,
    "dense-oracle": solve_dense_oracle,
}


def solve(game: NashGame, opts: Optional[SolverOptions] = None) -> EquilibriumBundle:
    """Compute the equilibrium with the method named in ``opts``"""
    opts = opts or SolverOptions()
    bundle = SOLVERS[opts.method](game, opts)
    logger.info(f"{opts.method}: {bundle.diagnostics.iterations} iterations, "
                f"final residual {bundle.diagnostics.final_residual:.3e}")
    return bundle
