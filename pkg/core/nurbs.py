"""
NURBS boundary curves.
Storage, Cox-de Boor evaluation, analytic derivatives, normals,
closest-point projection and least-squares profile fitting.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from core.errors import DomainError, FittingError, GeometryError, ProjectionError

logger = logging.getLogger(__name__)

# Coarse scan used to seed closest_point when no initial guess is given.
PROJECTION_SCAN_SAMPLES = 256
PROJECTION_MAX_ITERATIONS = 50
# Termination tolerance of the parameter-correcting fit
FIT_TOLERANCE = 1e-14


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Clamped, nondecreasing knot vector on [0, 1]."""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 0:
            raise GeometryError(f"degree must be nonnegative, got {p}")
        if knots.ndim != 1 or len(knots) < 2 * (p + 1):
            raise GeometryError(f"knot vector too short for degree {p}")
        if np.any(np.diff(knots) < 0.0):
            raise GeometryError("knots must be nondecreasing")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise GeometryError("knot vector must span [0, 1]")
        if np.count_nonzero(knots == 0.0) != p + 1 or np.count_nonzero(knots == 1.0) != p + 1:
            raise GeometryError(f"end knots must be repeated exactly {p + 1} times (clamped)")

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @classmethod
    def clamped_uniform(cls, degree: int, n_ctrl: int) -> "KnotVector":
        """Clamped knot vector with uniformly spaced interior knots."""
        n_interior = n_ctrl - degree - 1
        interior = np.arange(1, n_interior + 1) / (n_interior + 1)
        knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
        return cls(knots, degree)


def find_span(kv: KnotVector, xi: float) -> int:
    """
    Locate the knot span containing a parameter.

    Args:
        kv: Knot vector
        xi: Parameter in [0, 1]

    Returns:
        Index i with knots[i] <= xi < knots[i+1]; at xi = 1 the last
        nonempty span is returned.
    """
    if not 0.0 <= xi <= 1.0:
        raise DomainError(f"parameter {xi!r} outside [0, 1]")
    knots = kv.knots
    n = kv.n_basis - 1
    if xi >= knots[n + 1]:
        return n
    if xi <= knots[kv.degree]:
        return kv.degree
    low, high = kv.degree, n + 1
    mid = (low + high) // 2
    while xi < knots[mid] or xi >= knots[mid + 1]:
        if xi < knots[mid]:
            high = mid
        else:
            low = mid
        mid = (low + high) // 2
    return mid


def basis_derivatives(kv: KnotVector, span: int, xi: float, n_ders: int) -> np.ndarray:
    """
    Nonvanishing B-spline basis functions and their derivatives.

    Returns:
        Array (n_ders+1, p+1); row k holds the k-th derivatives of
        N_{span-p..span}.
    """
    p = kv.degree
    knots = kv.knots
    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = xi - knots[span + 1 - j]
        right[j] = knots[span + j] - xi
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n_ders + 1, p + 1))
    ders[0, :] = ndu[:, p]
    # derivatives above the degree vanish
    top = min(n_ders, p)
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, top + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    factor = float(p)
    for k in range(1, top + 1):
        ders[k, :] *= factor
        factor *= p - k
    return ders


@dataclass(frozen=True, eq=False)
class NurbsCurve:
    """Planar NURBS curve; immutable after construction."""

    control_points: np.ndarray
    weights: np.ndarray
    knot_vector: KnotVector
    curve_id: int = 0
    _homogeneous: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        points = np.asarray(self.control_points, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "control_points", points)
        object.__setattr__(self, "weights", weights)
        if points.ndim != 2 or points.shape[1] != 2:
            raise GeometryError("control points must be an (n, 2) array")
        if weights.shape != (len(points),):
            raise GeometryError("one weight per control point required")
        if np.any(weights <= 0.0):
            raise GeometryError("all weights must be strictly positive")
        if self.knot_vector.n_basis != len(points):
            raise GeometryError(
                f"knot count {len(self.knot_vector.knots)} does not match "
                f"{len(points)} control points of degree {self.degree}"
            )
        homogeneous = np.column_stack([points * weights[:, None], weights])
        object.__setattr__(self, "_homogeneous", homogeneous)

    @property
    def degree(self) -> int:
        return self.knot_vector.degree

    @property
    def n_ctrl(self) -> int:
        return len(self.control_points)

    @property
    def is_closed(self) -> bool:
        return bool(np.allclose(self.control_points[0], self.control_points[-1], rtol=0.0, atol=1e-14))

    def span(self, xi: float) -> int:
        return find_span(self.knot_vector, xi)

    def rational_basis(self, xi: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Rational basis values R_i^p(xi) and their control-point indices.

        Returns:
            Tuple of (p+1 values, p+1 indices)
        """
        span = self.span(xi)
        p = self.degree
        n = basis_derivatives(self.knot_vector, span, xi, 0)[0]
        idx = np.arange(span - p, span + 1)
        weighted = n * self.weights[idx]
        total = weighted.sum()
        if total <= 0.0:
            raise GeometryError(f"degenerate weight sum at xi={xi}")
        return weighted / total, idx

    def _homogeneous_derivatives(self, xi: float, order: int, span: Optional[int]) -> np.ndarray:
        if span is None:
            span = self.span(xi)
        p = self.degree
        ders = basis_derivatives(self.knot_vector, span, xi, order)
        return ders @ self._homogeneous[span - p: span + 1]

    def evaluate(self, xi: float) -> np.ndarray:
        """Point C(xi) = sum R_i^p(xi) B_i."""
        hw = self._homogeneous_derivatives(xi, 0, None)[0]
        return hw[:2] / hw[2]

    def derivative(self, xi: float, order: int = 1, span: Optional[int] = None) -> np.ndarray:
        """
        Analytic first or second derivative of the curve.

        Args:
            xi: Parameter in [0, 1]
            order: 1 or 2
            span: Knot span to evaluate in; gives one-sided limits at breakpoints

        Returns:
            2D derivative vector
        """
        if order not in (1, 2):
            raise DomainError(f"derivative order {order} unsupported (1 or 2 only)")
        h = self._homogeneous_derivatives(xi, order, span)
        a, w = h[:, :2], h[:, 2]
        c = a[0] / w[0]
        d1 = (a[1] - w[1] * c) / w[0]
        if order == 1:
            return d1
        return (a[2] - 2.0 * w[1] * d1 - w[2] * c) / w[0]

    def point_and_tangent(self, xi: float, span: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        h = self._homogeneous_derivatives(xi, 1, span)
        c = h[0, :2] / h[0, 2]
        return c, (h[1, :2] - h[1, 2] * c) / h[0, 2]

    def outward_normal(self, xi: float, span: Optional[int] = None) -> np.ndarray:
        """
        Unit normal pointing out of the fluid.

        The fluid lies to the left of increasing xi, so the normal is the
        unit tangent rotated by -90 degrees.
        """
        t = self.derivative(xi, 1, span)
        length = np.hypot(t[0], t[1])
        if length == 0.0:
            raise GeometryError(f"zero tangent at xi={xi}")
        return np.array([t[1], -t[0]]) / length

    def sample(self, n: int) -> np.ndarray:
        """Points at n+1 uniformly spaced parameters."""
        return np.array([self.evaluate(x) for x in np.linspace(0.0, 1.0, n + 1)])

    def closest_point(self, q: Sequence[float], xi0: Optional[float] = None) -> float:
        """
        Parameter of the curve point closest to q.

        Damped Newton on the squared distance, seeded by a coarse scan
        when no initial guess is given.

        Args:
            q: Query point
            xi0: Optional initial parameter

        Returns:
            xi* with (q - C(xi*)) . C'(xi*) = 0
        """
        q = np.asarray(q, dtype=float)
        if xi0 is None:
            grid = np.linspace(0.0, 1.0, PROJECTION_SCAN_SAMPLES)
            dist = [float(np.sum((self.evaluate(x) - q) ** 2)) for x in grid]
            xi = float(grid[int(np.argmin(dist))])
        else:
            xi = float(np.clip(xi0, 0.0, 1.0))

        c = self.evaluate(xi)
        best_xi, best_d2 = xi, float(np.sum((c - q) ** 2))
        for _ in range(PROJECTION_MAX_ITERATIONS):
            h = self._homogeneous_derivatives(xi, 2, None)
            a, w = h[:, :2], h[:, 2]
            c = a[0] / w[0]
            d1 = (a[1] - w[1] * c) / w[0]
            d2 = (a[2] - 2.0 * w[1] * d1 - w[2] * c) / w[0]
            diff = c - q
            f = float(diff @ d1)
            scale = float(np.hypot(*d1)) * max(float(np.hypot(*diff)), 1.0)
            if abs(f) <= 1e-12 * max(scale, 1.0):
                return xi
            fp = float(d1 @ d1 + diff @ d2)
            step = -f / fp if fp > 0.0 else -f / float(d1 @ d1)
            d2_old = float(diff @ diff)
            accepted = False
            for _ in range(30):
                trial = min(max(xi + step, 0.0), 1.0)
                ct = self.evaluate(trial)
                d2_new = float(np.sum((ct - q) ** 2))
                if d2_new <= d2_old:
                    accepted = True
                    break
                step *= 0.5
            if not accepted or trial == xi:
                # Stationary at an end point or at round-off level.
                if trial in (0.0, 1.0) or abs(step) < 1e-15:
                    return xi
                break
            xi = trial
            if d2_new < best_d2:
                best_xi, best_d2 = xi, d2_new
        raise ProjectionError("closest-point projection did not converge", best_xi, float(np.sqrt(best_d2)))


def make_line(start: Sequence[float], end: Sequence[float], curve_id: int = 0) -> NurbsCurve:
    """Degree-1 straight segment."""
    return NurbsCurve(np.array([start, end], dtype=float), np.ones(2), KnotVector([0.0, 0.0, 1.0, 1.0], 1), curve_id)


def make_circle(center: Sequence[float] = (0.0, 0.0), radius: float = 0.5,
                clockwise: bool = False, curve_id: int = 0) -> NurbsCurve:
    """
    Exact full circle: four rational quadratic arcs with weights (1, sqrt(2)/2, 1).

    Starts and ends at center + (radius, 0). The seam sits at xi = 0.
    """
    cx, cy = center
    corners = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0)]
    pts = np.array([(cx + radius * x, cy + radius * y) for x, y in corners], dtype=float)
    if clockwise:
        pts[:, 1] = 2.0 * cy - pts[:, 1]
    half = np.sqrt(2.0) / 2.0
    weights = np.array([1.0, half, 1.0, half, 1.0, half, 1.0, half, 1.0])
    knots = [0.0, 0.0, 0.0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1.0, 1.0, 1.0]
    return NurbsCurve(pts, weights, KnotVector(knots, 2), curve_id)


@dataclass
class FitResult:
    curve: NurbsCurve
    max_deviation: float
    parameters: np.ndarray


def chord_length_parameters(samples: np.ndarray) -> np.ndarray:
    chords = np.hypot(*np.diff(samples, axis=0).T)
    total = chords.sum()
    if total <= 0.0:
        raise FittingError("samples have zero total chord length")
    params = np.concatenate([[0.0], np.cumsum(chords) / total])
    params[-1] = 1.0
    return params


def basis_rows(kv: KnotVector, params: np.ndarray, n_ders: int = 0) -> np.ndarray:
    """Dense basis matrices, shape (n_ders+1, len(params), n_basis)."""
    p = kv.degree
    rows = np.zeros((n_ders + 1, len(params), kv.n_basis))
    for k, u in enumerate(params):
        span = find_span(kv, float(u))
        rows[:, k, span - p: span + 1] = basis_derivatives(kv, span, float(u), n_ders)
    return rows


def correct_parameters(q: np.ndarray, kv: KnotVector, params: np.ndarray,
                       ctrl: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Newton correction of sample parameters and interior control points.

    End samples keep parameters 0 and 1 and stay interpolated by the end
    control points. Each interior sample contributes the residual
    C(xi_k) - q_k; its parameter slides along the curve so the residual
    approaches the geometric distance.

    Returns:
        Corrected (params, ctrl)
    """
    m = len(q) - 2
    targets = q[1:-1]

    def unpack(z):
        u = params.copy()
        u[1:-1] = np.clip(z[:m], 0.0, 1.0)
        c = ctrl.copy()
        c[1:-1] = z[m:].reshape(-1, 2)
        return u, c

    def residuals(z):
        u, c = unpack(z)
        return (basis_rows(kv, u[1:-1])[0] @ c - targets).ravel()

    def jacobian(z):
        u, c = unpack(z)
        values, slopes = basis_rows(kv, u[1:-1], 1)
        tangents = slopes @ c
        jac = np.zeros((2 * m, len(z)))
        rows = np.arange(m)
        jac[2 * rows, rows] = tangents[:, 0]
        jac[2 * rows + 1, rows] = tangents[:, 1]
        jac[0::2, m::2] = values[:, 1:-1]
        jac[1::2, m + 1::2] = values[:, 1:-1]
        return jac

    z0 = np.concatenate([params[1:-1], ctrl[1:-1].ravel()])
    n_free = z0.size - m
    lower = np.concatenate([np.zeros(m), np.full(n_free, -np.inf)])
    upper = np.concatenate([np.ones(m), np.full(n_free, np.inf)])
    result = least_squares(residuals, z0, jac=jacobian, bounds=(lower, upper), method="trf",
                           x_scale="jac", ftol=FIT_TOLERANCE, xtol=FIT_TOLERANCE, gtol=FIT_TOLERANCE)
    logger.debug(f"Parameter correction: {result.nfev} evaluations, status {result.status}, "
                 f"max residual {np.abs(result.fun).max():.3e}")
    return unpack(result.x)


def fit_profile(samples: Sequence[Sequence[float]], degree: int, n_ctrl: int,
                curve_id: int = 0, parameters: Optional[Sequence[float]] = None,
                refine: bool = True) -> FitResult:
    """
    Least-squares B-spline fit with interpolated end points.

    Clamped uniform interior knots and unit weights. The linear fit on
    chord-length (or given) parameters seeds a joint correction of
    parameters and control points, which drives each residual to the
    sample's distance from the curve.

    Args:
        samples: Ordered 2D points
        degree: Spline degree
        n_ctrl: Number of control points
        parameters: Initial sample parameters; chord-length when omitted
        refine: Correct the parameters after the linear fit

    Returns:
        FitResult with the curve and its maximum distance to the samples
    """
    q = np.asarray(samples, dtype=float)
    if n_ctrl < degree + 1:
        raise FittingError(f"n_ctrl={n_ctrl} must be at least degree+1={degree + 1}")
    if len(q) < n_ctrl:
        raise FittingError(f"{len(q)} samples cannot determine {n_ctrl} control points")

    params = chord_length_parameters(q) if parameters is None else np.array(parameters, dtype=float)
    kv = KnotVector.clamped_uniform(degree, n_ctrl)
    basis = basis_rows(kv, params)[0]

    ctrl = np.zeros((n_ctrl, 2))
    ctrl[0], ctrl[-1] = q[0], q[-1]
    if n_ctrl > 2:
        inner = basis[1:-1, 1:-1]
        rhs = q[1:-1] - np.outer(basis[1:-1, 0], q[0]) - np.outer(basis[1:-1, -1], q[-1])
        solution, _, rank, _ = np.linalg.lstsq(inner, rhs, rcond=None)
        if rank < n_ctrl - 2:
            raise FittingError(f"rank-deficient fit system (rank {rank} < {n_ctrl - 2})")
        ctrl[1:-1] = solution
    if refine and len(q) > 2:
        params, ctrl = correct_parameters(q, kv, params, ctrl)

    curve = NurbsCurve(ctrl, np.ones(n_ctrl), kv, curve_id)
    deviations = []
    for point, u in zip(q, params):
        try:
            xi = curve.closest_point(point, u)
        except ProjectionError as exc:
            xi = exc.best_xi
        deviations.append(float(np.hypot(*(curve.evaluate(xi) - point))))
    max_dev = max(deviations)
    logger.info(f"Fitted degree-{degree} curve with {n_ctrl} control points, max deviation {max_dev:.3e}")
    return FitResult(curve, max_dev, params)
