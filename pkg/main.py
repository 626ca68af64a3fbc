import argparse
import logging
import sys

import coloredlogs
from dotenv import load_dotenv

from Components.Mesh import MeshSpecError
from Components.NashGame import NashSolverError
from Components.RunConfig import ConfigError, load_config
from Components.Stokes import SolverError
from Components.Workflows import run

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_INVALID_CONFIG = 2

VERBS = ['solve', 'converge', 'compare', 'example-multidomain']
METHODS = ['fixed-point', 'gradient', 'reduced-cg', 'dense-oracle']

logger = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(
        description='Nash equilibrium of two-player distributed control of Stokes flow')
    parser.add_argument('verb', choices=VERBS, help='Workflow to run')
    parser.add_argument('--config', help='YAML run configuration (defaults are used when omitted)')
    parser.add_argument('--out', help='Output directory (overrides workflow.output_dir)')
    parser.add_argument('--method', choices=METHODS, help='Equilibrium solver (overrides solver.method)')
    parser.add_argument('--tol', type=float, help='Optimality residual tolerance')
    parser.add_argument('--max-iter', type=int, help='Iteration cap for the iterative methods')
    parser.add_argument('--theta', type=float, help='Fixed-point damping in (0, 1]')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v', action='store_true', help='Log solver iterations')
    verbosity.add_argument('--quiet', '-q', action='store_true', help='Only log warnings and errors')
    return parser


def setup_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    coloredlogs.install(level=level, fmt='%(asctime)s %(name)s %(levelname)s %(message)s')
    return level


def print_trail(history, limit=10):
    if not history:
        return
    print(f"Residual trail (last {min(limit, len(history))} of {len(history)}):")
    for n, (r1, r2) in list(enumerate(history))[-limit:]:
        print(f"  it {n:5d}: player 1 {r1:.3e}   player 2 {r2:.3e}")


def main(argv=None):
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = setup_logging(args.verbose, args.quiet)

    overrides = {
        'workflow.kind': args.verb,
        'workflow.output_dir': args.out,
        'solver.method': args.method,
        'solver.tol': args.tol,
        'solver.max_iter': args.max_iter,
        'solver.theta': args.theta,
    }

    try:
        config = load_config(args.config, overrides)
    except ConfigError as e:
        print(f"❌ {e}")
        return EXIT_INVALID_CONFIG

    if level <= logging.INFO:
        print(f"\n{'='*60}")
        print(f"WORKFLOW: {config.workflow.kind}")
        print(f"{'='*60}")
        print(f"Domain: {config.domain.kind}   levels: {config.workflow.levels}")
        print(f"Method: {config.solver.method}   tol: {config.solver.tol:.1e}")
        print(f"Output: {config.workflow.output_dir}")
        print(f"{'='*60}\n")

    try:
        result = run(config)
    except NashSolverError as e:
        print(f"❌ Solver failed: {e}")
        print_trail(e.history)
        return EXIT_SOLVER_FAILURE
    except SolverError as e:
        print(f"❌ Stokes solve failed: {e}")
        return EXIT_SOLVER_FAILURE
    except MeshSpecError as e:
        print(f"❌ Invalid geometry: {e}")
        return EXIT_INVALID_CONFIG
    except OSError as e:
        print(f"❌ Could not write results: {e}")
        return EXIT_SOLVER_FAILURE

    if level <= logging.INFO:
        print(f"\n{'='*60}")
        print(f"✓ {result.kind} finished: {len(result.artifacts)} files in {result.output_dir}")
        print(f"{'='*60}")
        for path in result.artifacts:
            print(f"  {path}")
        for key, value in result.summary.items():
            print(f"  {key}: {value}")
    for warning in result.warnings:
        print(f"⚠️ {warning}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
