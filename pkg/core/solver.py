"""
Newton-Krylov solution of each space-time slab and the slab-marching loop.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from config.settings import (
    DT_MAX_FACTOR,
    DT_RAMP,
    GMRES_MAX_ITER,
    GMRES_RESTART,
    GMRES_TOL,
    LINE_SEARCH_STEPS,
    MAX_DT_HALVINGS,
    MAX_NEWTON,
    MAX_SLABS,
    NEWTON_ABS_TOL,
    NEWTON_TOL,
    OUTPUT_CADENCE,
    STEADY_TOL,
)
from core.assembly import Discretization, SpaceTimeSlab, apply_dirichlet, assemble, build_slab, compute_taus
from core.errors import DomainError, InvalidStateError, LinearSolverError, NewtonError, SlabFailure
from core.physics import N_DOF

logger = logging.getLogger(__name__)

LINEAR_SOLVERS = ("gmres", "direct")


@dataclass
class SolverConfig:
    """Newton, Krylov and marching parameters (case keys `solver.<field>`)."""

    newton_tol: float = NEWTON_TOL
    newton_abs_tol: float = NEWTON_ABS_TOL
    max_newton: int = MAX_NEWTON
    line_search_steps: int = LINE_SEARCH_STEPS
    linear_solver: str = "gmres"
    gmres_restart: int = GMRES_RESTART
    gmres_tol: float = GMRES_TOL
    gmres_max_iter: int = GMRES_MAX_ITER
    fallback_direct: bool = True
    dt: float = 0.1
    dt_ramp: float = DT_RAMP
    dt_max_factor: float = DT_MAX_FACTOR
    max_dt_halvings: int = MAX_DT_HALVINGS
    max_slabs: int = MAX_SLABS
    steady_tol: float = STEADY_TOL  # 0 disables the steady-state stop
    cadence: int = OUTPUT_CADENCE

    def __post_init__(self):
        for name in ("newton_tol", "newton_abs_tol", "gmres_tol", "dt", "dt_ramp", "dt_max_factor"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"solver.{name} must be positive, got {getattr(self, name)}")
        for name in ("max_newton", "gmres_restart", "gmres_max_iter", "cadence"):
            if getattr(self, name) < 1:
                raise DomainError(f"solver.{name} must be at least 1, got {getattr(self, name)}")
        if min(self.max_slabs, self.max_dt_halvings, self.line_search_steps, self.steady_tol) < 0:
            raise DomainError("solver.max_slabs, max_dt_halvings, line_search_steps and steady_tol must be nonnegative")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise DomainError(f"solver.linear_solver must be one of {LINEAR_SOLVERS}, got {self.linear_solver}")


def block_jacobi(matrix: sp.spmatrix, block: int = N_DOF) -> spla.LinearOperator:
    """Inverse of the nodal diagonal blocks as a preconditioner."""
    matrix = sp.csr_matrix(matrix)
    n = matrix.shape[0]
    if n % block:
        raise DomainError(f"matrix size {n} is not a multiple of the block size {block}")
    n_blocks = n // block
    base = block * np.arange(n_blocks)
    blocks = np.zeros((n_blocks, block, block))
    for r in range(block):
        for c in range(block):
            diagonal = matrix.diagonal(c - r)
            blocks[:, r, c] = diagonal[base + min(r, c)]
    try:
        inverse = np.linalg.inv(blocks)
    except np.linalg.LinAlgError:
        logger.debug("singular diagonal block, using pseudo-inverses")
        inverse = np.linalg.pinv(blocks)

    def apply(x):
        x = np.asarray(x).reshape(n_blocks, block)
        return np.einsum("nrc,nc->nr", inverse, x).ravel()

    return spla.LinearOperator((n, n), matvec=apply, dtype=float)


def linear_solve(matrix: sp.spmatrix, rhs: np.ndarray, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """
    Solve matrix @ x = rhs with preconditioned restarted GMRES or a sparse direct solver.

    Raises:
        LinearSolverError: on non-finite input, breakdown or stagnation
    """
    rhs = np.asarray(rhs, dtype=float)
    matrix = sp.csr_matrix(matrix)
    if not np.all(np.isfinite(rhs)) or not np.all(np.isfinite(matrix.data)):
        raise LinearSolverError("non-finite entries in the linear system", float("nan"))
    b_norm = float(np.linalg.norm(rhs))
    if b_norm == 0.0:
        return np.zeros_like(rhs)

    if cfg.linear_solver == "direct":
        return _direct_solve(matrix, rhs, b_norm)

    iterations = []
    x, info = spla.gmres(
        matrix, rhs,
        rtol=cfg.gmres_tol,
        restart=cfg.gmres_restart,
        maxiter=max(1, math.ceil(cfg.gmres_max_iter / cfg.gmres_restart)),
        M=block_jacobi(matrix),
        callback=iterations.append,
        callback_type="pr_norm",
    )
    achieved = float(np.linalg.norm(rhs - matrix @ x)) / b_norm
    logger.debug(f"gmres: {len(iterations)} iterations, relative residual {achieved:.3e}")
    if info == 0 and np.all(np.isfinite(x)):
        return x
    if cfg.fallback_direct:
        logger.warning(f"⚠️ GMRES stagnated at {achieved:.3e} after {len(iterations)} iterations, using direct solve")
        return _direct_solve(matrix, rhs, b_norm)
    raise LinearSolverError(f"GMRES did not converge (info={info})", achieved)


def _direct_solve(matrix: sp.csr_matrix, rhs: np.ndarray, b_norm: float) -> np.ndarray:
    try:
        x = spla.spsolve(matrix.tocsc(), rhs)
    except RuntimeError as e:
        raise LinearSolverError(f"sparse factorization failed: {e}", float("nan"))
    if not np.all(np.isfinite(x)):
        raise LinearSolverError("singular matrix in direct solve", float("nan"))
    return x


@dataclass
class NewtonResult:
    U: np.ndarray
    iterations: int
    residuals: List[float]

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


def _residual_norm(slab: SpaceTimeSlab, U: np.ndarray) -> float:
    return apply_dirichlet(slab, assemble(slab, U, with_tangent=False), U).residual_norm


def newton_solve(slab: SpaceTimeSlab, U0: np.ndarray, cfg: SolverConfig = SolverConfig(),
                 slab_index: int = 0) -> NewtonResult:
    """
    Newton iteration on one slab with frozen stabilization parameters per step.

    Steps are halved until the constrained residual norm does not grow;
    states with nonpositive density or pressure count as rejected steps.

    Raises:
        NewtonError: max_newton exceeded or line search exhausted
        LinearSolverError: propagated from linear_solve
    """
    U = np.array(U0, dtype=float).reshape(2, slab.n_nodes, N_DOF)
    residuals = []
    threshold = None
    for it in range(cfg.max_newton + 1):
        taus = compute_taus(slab, U)
        system = apply_dirichlet(slab, assemble(slab, U, taus), U)
        norm = system.residual_norm
        residuals.append(norm)
        logger.info(f"slab {slab_index} newton {it} ||R|| {norm:.6e}")
        if threshold is None:
            threshold = max(cfg.newton_tol * norm, cfg.newton_abs_tol)
        if norm <= threshold:
            return NewtonResult(U, it, residuals)
        if it == cfg.max_newton:
            break

        delta = system.to_global(linear_solve(system.matrix, system.rhs, cfg)).reshape(U.shape)
        step = 1.0
        for _ in range(cfg.line_search_steps + 1):
            trial = U + step * delta
            try:
                trial_norm = _residual_norm(slab, trial)
            except InvalidStateError as e:
                logger.debug(f"step {step:g} rejected: {e}")
                trial_norm = np.inf
            if trial_norm <= norm:
                break
            step *= 0.5
        else:
            raise NewtonError(f"slab {slab_index}: line search failed at newton iteration {it}, ||R|| {norm:.3e}")
        if step < 1.0:
            logger.debug(f"slab {slab_index} newton {it}: step length {step:g}")
        U = trial

    raise NewtonError(
        f"slab {slab_index}: no convergence in {cfg.max_newton} newton iterations "
        f"(||R|| {residuals[-1]:.3e}, target {threshold:.3e})"
    )


@dataclass
class SlabRecord:
    slab: int
    time: float
    dt: float
    newton_iterations: int
    residual: float
    change: float
    quantities: Dict[str, float] = field(default_factory=dict)


@dataclass
class RunState:
    """Marching state: current top-layer solution and one history record per completed slab."""

    slab: int
    time: float
    U: np.ndarray
    history: List[SlabRecord] = field(default_factory=list)
    steady: bool = False
    dt_halvings: int = 0

    @property
    def total_newton(self) -> int:
        return sum(rec.newton_iterations for rec in self.history)


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = float(np.linalg.norm(old))
    return float(np.linalg.norm(new - old)) / (scale if scale > 0.0 else 1.0)


def march(disc: Discretization, cfg: SolverConfig = SolverConfig(), U0: Optional[np.ndarray] = None,
          monitor: Optional[Callable[[np.ndarray], Dict[str, float]]] = None,
          on_slab: Optional[Callable[[RunState], None]] = None) -> RunState:
    """
    March slabs from U0 (free stream everywhere by default) to steady state or max_slabs.

    Args:
        disc: Spatial discretization with boundary conditions
        cfg: Solver configuration
        U0: Initial nodal state (n_nodes, 4)
        monitor: Computes wall quantities from the top layer after each slab
        on_slab: Called every `cfg.cadence` slabs with the current state

    Raises:
        SlabFailure: a slab failed after max_dt_halvings halvings; carries the last good state
    """
    if U0 is None:
        if disc.freestream is None:
            raise DomainError("an initial state or a free stream is required")
        U0 = np.tile(disc.freestream.state, (disc.n_nodes, 1))
    state = RunState(slab=0, time=0.0, U=np.array(U0, dtype=float))
    dt = cfg.dt
    dt_max = cfg.dt * cfg.dt_max_factor
    logger.info(f"🚀 Marching up to {cfg.max_slabs} slabs, dt={dt:g}, {disc.n_nodes} nodes")

    for k in range(1, cfg.max_slabs + 1):
        for attempt in range(cfg.max_dt_halvings + 1):
            slab = build_slab(disc, state.time, dt, state.U)
            try:
                result = newton_solve(slab, slab.initial_guess(), cfg, slab_index=k)
                break
            except (NewtonError, LinearSolverError, InvalidStateError) as e:
                if attempt == cfg.max_dt_halvings:
                    raise SlabFailure(f"slab {k} failed after {attempt} dt halvings: {e}", state)
                dt *= 0.5
                state.dt_halvings += 1
                logger.warning(f"⚠️ slab {k} failed ({e}); retrying with dt={dt:g}")

        top = result.U[1].copy()
        change = relative_change(top, state.U)
        state.U = top
        state.slab = k
        state.time = slab.t_next
        record = SlabRecord(k, state.time, dt, result.iterations, result.final_residual, change)
        if monitor is not None:
            record.quantities = dict(monitor(top))
        state.history.append(record)
        logger.info(f"✅ slab {k} t={state.time:.6g} newton={result.iterations} change={change:.3e}")

        if on_slab is not None and k % cfg.cadence == 0:
            on_slab(state)
        if cfg.steady_tol > 0.0 and change < cfg.steady_tol:
            state.steady = True
            logger.info(f"🏁 Steady state after {k} slabs (change {change:.3e} < {cfg.steady_tol:g})")
            break
        dt = min(dt * cfg.dt_ramp, dt_max)

    return state
