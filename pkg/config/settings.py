"""
Configuration settings for the NEFEM flow solver.
Global defaults, environment-variable overrides and their validation.
Per-case values live in case files (see config/case.py).
"""
import os
import logging

logger = logging.getLogger(__name__)


# ========== RUNTIME CONFIGURATION ==========
# Threads handed to the BLAS backend; app.py exports it before numpy loads
NEFEM_THREADS = int(os.environ.get("NEFEM_THREADS", "1"))

# Serial, order-fixed reductions everywhere (byte-identical outputs)
NEFEM_DETERMINISTIC = os.environ.get("NEFEM_DETERMINISTIC", "1").lower() in ("1", "true", "yes", "on")

LOG_LEVEL = os.environ.get("NEFEM_LOG_LEVEL", "INFO").upper()

# ========== QUADRATURE ==========
STANDARD_QUADRATURE_ORDER = 3  # 6-point rule, exact for degree 4
NEFEM_QUADRATURE_POINTS = 5  # n x n collapsed Gauss rule on curved elements
EDGE_QUADRATURE_POINTS = 8  # Gauss points per curved wall edge

# ========== NEWTON / KRYLOV ==========
NEWTON_TOL = 1e-8  # relative to the first residual of the slab
NEWTON_ABS_TOL = 1e-12
MAX_NEWTON = 20
LINE_SEARCH_STEPS = 8

GMRES_RESTART = 60
GMRES_TOL = 1e-6
GMRES_MAX_ITER = 500

# Complex-step size for the element tangent
COMPLEX_STEP = 1e-30

# Quadrature points evaluated at once during assembly (memory bound)
ASSEMBLY_CHUNK_POINTS = int(os.environ.get("NEFEM_ASSEMBLY_CHUNK", "60000"))

# ========== TIME MARCHING ==========
STEADY_TOL = 1e-8  # relative top-layer change between slabs
MAX_SLABS = 200
DT_RAMP = 1.0  # dt multiplier applied after each converged slab
DT_MAX_FACTOR = 1.0  # ceiling for ramped dt, in units of the initial dt
MAX_DT_HALVINGS = 3

# ========== STABILIZATION ==========
DC_CLAMP_FACTOR = 1.0
DC_EPSILON = 1e-12

# ========== OUTPUT ==========
OUTPUT_DIRECTORY = os.environ.get("NEFEM_OUTPUT", "output")
OUTPUT_CADENCE = 10  # field snapshots every K slabs plus the final one


def validate_config():
    """Validate the global defaults and environment overrides."""
    if NEFEM_THREADS < 1:
        raise RuntimeError(f"❌ NEFEM_THREADS must be at least 1, got {NEFEM_THREADS}")
    if ASSEMBLY_CHUNK_POINTS < 1:
        raise RuntimeError(f"❌ NEFEM_ASSEMBLY_CHUNK must be positive, got {ASSEMBLY_CHUNK_POINTS}")
    if LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise RuntimeError(f"❌ Unknown NEFEM_LOG_LEVEL {LOG_LEVEL}")

    logger.info(f"✅ Configuration validated (threads={NEFEM_THREADS}, deterministic={NEFEM_DETERMINISTIC})")
    return True
