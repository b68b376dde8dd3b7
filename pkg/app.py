"""
NEFEM flow solver - main application entry point.

Space-time stabilized finite elements for compressible flow with
NURBS-enhanced boundary elements. Runs benchmark cases (supersonic
cylinder, transonic NACA 0012) and the mesh and geometry diagnostics.

Usage:
    python app.py run cases/cylinder.cfg
    python app.py check-mesh meshes/square.mesh
    python app.py sample-curve geometry/cylinder.nurbs 1 16
    python app.py study cases/cylinder.cfg 64 128 256
    python app.py generate-mesh cylinder 64 out.mesh --curves out.nurbs
    python app.py dump-quadrature out.mesh out.nurbs points.csv
"""
import argparse
import logging
import os
import sys

from config.settings import LOG_LEVEL, NEFEM_DETERMINISTIC, NEFEM_THREADS, validate_config

# BLAS thread pools read these once, when numpy is first imported
_BLAS_THREADS = 1 if NEFEM_DETERMINISTIC else NEFEM_THREADS
for _variable in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_variable, str(_BLAS_THREADS))

from handlers.callbacks import EXIT_CONFIG, EXIT_OK, error_handler  # noqa: E402
from handlers.commands import (  # noqa: E402
    check_mesh,
    convergence_study,
    dump_quadrature,
    generate_mesh,
    run,
    sample_curve,
)

# Configure logging
logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=getattr(logging, LOG_LEVEL, logging.INFO)
)
logger = logging.getLogger(__name__)


def _run(args) -> int:
    run(args.config, args.output)
    return EXIT_OK


def _check_mesh(args) -> int:
    report = check_mesh(args.mesh, args.curves)
    return EXIT_OK if report.ok else EXIT_CONFIG


def _sample_curve(args) -> int:
    rows = sample_curve(args.curves, args.curve_id, args.n, args.output)
    if args.output is None:
        print("xi,x,y,nx,ny")
        for row in rows:
            print(",".join(f"{v:.12e}" for v in row))
    return EXIT_OK


def _study(args) -> int:
    convergence_study(args.config, args.grids, args.output)
    return EXIT_OK


def _generate_mesh(args) -> int:
    generate_mesh(args.generator, args.wall_edges, args.mesh, args.curves, args.layers, args.far_radius)
    return EXIT_OK


def _dump_quadrature(args) -> int:
    count = dump_quadrature(args.mesh, args.curves, args.output, args.mode)
    logger.info(f"✅ {count} quadrature points written to {args.output}")
    return EXIT_OK


def build_application() -> argparse.ArgumentParser:
    """
    Build the command-line parser with one subcommand per handler.

    Returns:
        ArgumentParser whose parsed namespace carries the handler in `func`
    """
    parser = argparse.ArgumentParser(prog="nefem", description="NURBS-enhanced space-time flow solver")
    commands = parser.add_subparsers(dest="command", required=True)

    cmd = commands.add_parser("run", help="march a case to steady state")
    cmd.add_argument("config")
    cmd.add_argument("--output", default=None, help="override output.directory")
    cmd.set_defaults(func=_run)

    cmd = commands.add_parser("check-mesh", help="validate a mesh against its wall curves")
    cmd.add_argument("mesh")
    cmd.add_argument("curves", nargs="?", default=None)
    cmd.set_defaults(func=_check_mesh)

    cmd = commands.add_parser("sample-curve", help="print n+1 uniform samples of a curve with normals")
    cmd.add_argument("curves")
    cmd.add_argument("curve_id", type=int)
    cmd.add_argument("n", type=int)
    cmd.add_argument("--output", default=None, help="CSV file instead of stdout")
    cmd.set_defaults(func=_sample_curve)

    cmd = commands.add_parser("study", help="grid convergence of C_D in NEFEM and SFEM modes")
    cmd.add_argument("config")
    cmd.add_argument("grids", nargs="+", help="wall-edge counts or mesh files")
    cmd.add_argument("--output", default=None)
    cmd.set_defaults(func=_study)

    cmd = commands.add_parser("generate-mesh", help="write a benchmark O-grid")
    cmd.add_argument("generator", choices=("cylinder", "naca0012"))
    cmd.add_argument("wall_edges", type=int)
    cmd.add_argument("mesh")
    cmd.add_argument("--curves", default=None, help="also write the wall curve")
    cmd.add_argument("--layers", type=int, default=None)
    cmd.add_argument("--far-radius", dest="far_radius", type=float, default=None)
    cmd.set_defaults(func=_generate_mesh)

    cmd = commands.add_parser("dump-quadrature", help="write physical quadrature points as CSV")
    cmd.add_argument("mesh")
    cmd.add_argument("curves")
    cmd.add_argument("output")
    cmd.add_argument("--mode", choices=("NEFEM", "SFEM"), default="NEFEM")
    cmd.set_defaults(func=_dump_quadrature)

    return parser


def main(argv=None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_application().parse_args(argv)
    logger.info("🌀 Starting NEFEM flow solver...")
    logger.info("=" * 50)
    try:
        validate_config()
        if NEFEM_THREADS > 1 and NEFEM_DETERMINISTIC:
            logger.warning("⚠️ NEFEM_DETERMINISTIC is set: BLAS runs on one thread")
        logger.info(f"🚀 {args.command.upper()}")
        logger.info("=" * 50)
        return args.func(args)
    except Exception as e:
        return error_handler(e)


if __name__ == "__main__":
    sys.exit(main())
