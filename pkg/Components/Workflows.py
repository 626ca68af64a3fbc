"""
Batch workflows behind the CLI verbs: solve, converge, compare and the
multi-domain example. Each writes solution.vtk, report.csv and
metadata.json into its output directory.
"""
import logging
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional

import numpy as np

from Components.FiniteElements import FEFunction, barycentric_gradients
from Components.Mesh import TriMesh, export_mesh, generate, mesh_summary, quasi_uniformity, refine
from Components.NashGame import EquilibriumBundle, GameSpec, NashGame, PlayerSpec, solve, worker_count
from Components.Quadrature import ERROR_RULE
from Components.RunConfig import RunConfig
from Components.StreamFunction import build_streamfunction_target
from Components.Verification import (LOWER_BOUND_RATES, RATE_BAND, ManufacturedBundle, make_manufactured,
                                     run_convergence)
from Components.export import (write_error_report, write_gap_report, write_metadata,
                               write_residual_history, write_vtk)

logger = logging.getLogger(__name__)


@dataclass
class WorkflowResult:
    kind: str
    output_dir: str
    artifacts: List[str] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)


def manufactured_for(config: RunConfig) -> Optional[ManufacturedBundle]:
    needed = config.physics.source == "manufactured" or any(p.target.kind == "manufactured" for p in config.players)
    if not needed:
        return None
    return make_manufactured(config.physics.viscosity, config.players[0].alpha, config.players[1].alpha)


def build_game_spec(config: RunConfig, mesh: TriMesh, manufactured: Optional[ManufacturedBundle] = None) -> GameSpec:
    players = []
    for i, player in enumerate(config.players):
        if player.target.kind == "manufactured":
            target = manufactured.targets[i]
        elif player.target.kind == "streamfunction-O1":
            target = build_streamfunction_target(mesh, player.target.label)
        else:
            target = None
        players.append(PlayerSpec(alpha=player.alpha, target=target, subdomain=player.labels()))
    source = manufactured.f if config.physics.source == "manufactured" else None
    return GameSpec(nu=config.physics.viscosity, players=tuple(players), source=source,
                    control_degree=config.solver.control_degree)


def _target_vertex_values(target, mesh: TriMesh) -> np.ndarray:
    if target is None:
        return np.zeros((mesh.n_vertices, 2))
    if hasattr(target, "vertex_values"):
        return target.vertex_values()
    return np.asarray(target(mesh.vertices), dtype=float)


def write_solution(game: NashGame, bundle: EquilibriumBundle, path: str) -> str:
    """Vertex values of every field of ``bundle`` as legacy VTK"""
    forms = game.forms
    V, Q = forms.velocity, forms.pressure
    vectors = {
        "velocity": FEFunction(V, bundle.state.velocity).vertex_values(),
        "adjoint_velocity_1": FEFunction(V, bundle.adjoints[0].velocity).vertex_values(),
        "adjoint_velocity_2": FEFunction(V, bundle.adjoints[1].velocity).vertex_values(),
        "control_1": game.control_function(1, bundle.controls[0]).vertex_values(),
        "control_2": game.control_function(2, bundle.controls[1]).vertex_values(),
        "target_1": _target_vertex_values(game.spec.players[0].target, game.mesh),
        "target_2": _target_vertex_values(game.spec.players[1].target, game.mesh),
    }
    scalars = {
        "pressure": FEFunction(Q, bundle.state.pressure).vertex_values()[:, 0],
        "adjoint_pressure_1": FEFunction(Q, bundle.adjoints[0].pressure).vertex_values()[:, 0],
        "adjoint_pressure_2": FEFunction(Q, bundle.adjoints[1].pressure).vertex_values()[:, 0],
    }
    return write_vtk(game.mesh, path, point_vectors=vectors, point_scalars=scalars,
                     title=f"nash-stokes {bundle.diagnostics.method}")


def subdomain_norms(game: NashGame, velocity: np.ndarray) -> Dict[str, float]:
    """L2 norm of a velocity field on every labelled subdomain"""
    mesh = game.mesh
    y = FEFunction(game.forms.velocity, velocity)
    out = {}
    for name in mesh.label_names:
        cells = mesh.cells_in([name])
        _, det = barycentric_gradients(mesh.corners[cells])
        values = y.sample(cells, ERROR_RULE)
        out[name] = float(np.sqrt(np.einsum("mq,mqc,mqc->", ERROR_RULE.weights[None, :] * det[:, None], values, values)))
    return out


def _mesh_metadata(mesh: TriMesh) -> Dict:
    summary = mesh_summary(mesh)
    summary["quasi_uniformity"] = quasi_uniformity(mesh)
    return summary


def _base_metadata(config: RunConfig) -> Dict:
    return {
        "workflow": config.workflow.kind,
        "method": config.solver.method,
        "tol": config.solver.tol,
        "max_iter": config.solver.max_iter,
        "theta": config.solver.theta,
        "levels": config.workflow.levels,
        "config": config.model_dump(mode="json", exclude={"workflow": {"output_dir"}}),
    }


def _diagnostics_metadata(bundle: EquilibriumBundle) -> Dict:
    d = bundle.diagnostics
    return {
        "method": d.method,
        "iterations": d.iterations,
        "converged": d.converged,
        "final_residual": d.final_residual,
    }


def run_solve(config: RunConfig, output_dir: str) -> WorkflowResult:
    n = config.workflow.levels[-1]
    if len(config.workflow.levels) > 1:
        logger.warning(f"solve uses a single mesh; taking the finest level n={n}")
    mesh = generate(config.domain_at(n))
    game = NashGame(mesh, build_game_spec(config, mesh, manufactured_for(config)))
    bundle = solve(game, config.solver.options())

    result = WorkflowResult("solve", output_dir)
    result.artifacts.append(write_solution(game, bundle, os.path.join(output_dir, "solution.vtk")))
    result.artifacts.append(write_residual_history(bundle.diagnostics.residual_history,
                                                   os.path.join(output_dir, "report.csv")))
    metadata = _base_metadata(config)
    metadata.update(mesh=_mesh_metadata(mesh), solution=_diagnostics_metadata(bundle),
                    subdomain_velocity_L2=subdomain_norms(game, bundle.state.velocity))
    result.artifacts.append(write_metadata(metadata, os.path.join(output_dir, "metadata.json")))
    result.summary = metadata["solution"]
    return result


def run_converge(config: RunConfig, output_dir: str) -> WorkflowResult:
    levels = config.workflow.levels
    meshes = [generate(config.domain_at(levels[0]))]
    for _ in levels[1:]:
        meshes.append(refine(meshes[-1]))

    manufactured = manufactured_for(config)
    report = run_convergence(manufactured, meshes, config.solver.options(),
                             control_degree=config.solver.control_degree,
                             progress=logger.getEffectiveLevel() <= logging.INFO)

    result = WorkflowResult("converge", output_dir)
    result.artifacts.append(write_error_report(report, os.path.join(output_dir, "report.csv")))

    game, bundle = report.finest
    result.artifacts.append(write_solution(game, bundle, os.path.join(output_dir, "solution.vtk")))

    rates = report.check_rates()
    for column, (observed, expected, ok) in rates.items():
        if not ok:
            bound = f">= {expected - RATE_BAND}" if column in LOWER_BOUND_RATES else f"{expected} +/- {RATE_BAND}"
            result.warnings.append(f"{column}: EOC {observed:.3f} outside {bound}")
    pre_asymptotic = report.pre_asymptotic_rates()
    for j, verdict in enumerate(pre_asymptotic):
        off = [c for c, (_, _, ok) in verdict.items() if not ok]
        logger.info(f"Pre-asymptotic pair {j}: {len(off)} columns off ({', '.join(off) or 'none'}), not checked")
    if not report.stability_bounded():
        result.warnings.append("discrete solution norms grew more than 10x under refinement")

    metadata = _base_metadata(config)
    metadata.update(
        meshes=[_mesh_metadata(m) for m in meshes],
        rates={c: {"observed": o, "expected": e, "ok": ok} for c, (o, e, ok) in rates.items()},
        pre_asymptotic_rates=[{c: {"observed": o, "expected": e, "ok": ok} for c, (o, e, ok) in v.items()}
                              for v in pre_asymptotic],
        stability=[row.stability for row in report.rows],
        iterations=[row.iterations for row in report.rows],
    )
    result.artifacts.append(write_metadata(metadata, os.path.join(output_dir, "metadata.json")))
    result.summary = {"rates_ok": all(ok for _, _, ok in rates.values()), "levels": levels}
    return result


def control_gaps(game: NashGame, a: EquilibriumBundle, b: EquilibriumBundle):
    """Relative L2 gaps between the controls of two bundles, per player"""
    gaps = []
    for i in (1, 2):
        diff = game.control_norm(i, a.controls[i - 1] - b.controls[i - 1])
        scale = max(game.control_norm(i, a.controls[i - 1]), game.control_norm(i, b.controls[i - 1]))
        gaps.append(diff / scale if scale > 0 else diff)
    return tuple(gaps)


def run_compare(config: RunConfig, output_dir: str) -> WorkflowResult:
    n = config.workflow.levels[-1]
    mesh = generate(config.domain_at(n))
    game = NashGame(mesh, build_game_spec(config, mesh, manufactured_for(config)))

    bundles = {}
    for method in config.workflow.methods:
        opts = config.solver.options().model_copy(update={"method": method})
        bundles[method] = solve(game, opts)

    gaps = {(a, b): control_gaps(game, bundles[a], bundles[b])
            for a, b in combinations(config.workflow.methods, 2)}

    result = WorkflowResult("compare", output_dir)
    result.artifacts.append(write_gap_report(gaps, os.path.join(output_dir, "report.csv")))
    first = config.workflow.methods[0]
    result.artifacts.append(write_solution(game, bundles[first], os.path.join(output_dir, "solution.vtk")))
    metadata = _base_metadata(config)
    metadata.update(mesh=_mesh_metadata(mesh),
                    solutions={m: _diagnostics_metadata(b) for m, b in bundles.items()},
                    max_gap=max((max(g) for g in gaps.values()), default=0.0))
    result.artifacts.append(write_metadata(metadata, os.path.join(output_dir, "metadata.json")))
    result.summary = {"max_gap": metadata["max_gap"]}
    return result


def run_example_multidomain(config: RunConfig, output_dir: str) -> WorkflowResult:
    """
    Solve the configured multi-domain game once and write one output
    directory per Reynolds tag. The tags, a and mu are recorded only.
    """
    n = config.workflow.levels[-1]
    mesh = generate(config.domain_at(n))
    game = NashGame(mesh, build_game_spec(config, mesh))
    bundle = solve(game, config.solver.options())
    norms = subdomain_norms(game, bundle.state.velocity)

    result = WorkflowResult("example-multidomain", output_dir)
    for reynolds in config.metadata.reynolds:
        run_dir = os.path.join(output_dir, f"re_{reynolds}")
        os.makedirs(run_dir, exist_ok=True)
        result.artifacts.append(write_solution(game, bundle, os.path.join(run_dir, "solution.vtk")))
        result.artifacts.append(write_residual_history(bundle.diagnostics.residual_history,
                                                       os.path.join(run_dir, "report.csv")))
        export_mesh(mesh, os.path.join(run_dir, "mesh.txt"))
        result.artifacts.append(os.path.join(run_dir, "mesh.txt"))
        metadata = _base_metadata(config)
        metadata.update(reynolds=reynolds, a=config.metadata.a, mu=config.metadata.mu,
                        mesh=_mesh_metadata(mesh), solution=_diagnostics_metadata(bundle),
                        subdomain_velocity_L2=norms)
        result.artifacts.append(write_metadata(metadata, os.path.join(run_dir, "metadata.json")))
    result.summary = dict(_diagnostics_metadata(bundle), reynolds=config.metadata.reynolds)
    return result


WORKFLOWS = {
    "solve": run_solve,
    "converge": run_converge,
    "compare": run_compare,
    "example-multidomain": run_example_multidomain,
}


def run(config: RunConfig) -> WorkflowResult:
    """Execute the configured workflow; solver failures propagate"""
    output_dir = config.workflow.output_dir
    os.makedirs(output_dir, exist_ok=True)
    logger.info(f"Running {config.workflow.kind} into {output_dir} with {worker_count()} worker(s)")
    return WORKFLOWS[config.workflow.kind](config, output_dir)
