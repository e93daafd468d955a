"""
Escape Estimation
=================
Upper bounds on the escape rate from orbits, the y_alpha fixed-point path
and Martin-kernel snapshots
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import cone_geometry as cg
import hemi_core as hc
import operator_library as ol
from config import Config
from errors import DomainError, PreconditionError
from stochastic_games import coordinate_descent, karp_cycle_mean

logger = logging.getLogger(__name__)

# A residual may grow by this much (relative) before the contraction is declared broken
CONTRACTION_SLACK = 1e-9


# ============================================
# ORBIT RATES
# ============================================

@dataclass
class RateEstimate:
    upper_from_orbit: float
    upper_from_point: float
    lower_from_certificate: float = float('-inf')
    K: int = 0
    diagnostics: Dict = field(default_factory=dict)

    @property
    def upper(self) -> float:
        return min(self.upper_from_orbit, self.upper_from_point)

    def consistent(self, tol: float = Config.WEAK_DUALITY_TOL) -> bool:
        """Lower bound below both upper bounds, up to tol"""
        if not np.isfinite(self.lower_from_certificate):
            return True
        return (self.lower_from_certificate <= self.upper_from_orbit + tol
                and self.lower_from_certificate <= self.upper_from_point + tol)

    def to_dict(self) -> dict:
        return {
            'upper_from_orbit': self.upper_from_orbit,
            'upper_from_point': self.upper_from_point,
            'lower_from_certificate': self.lower_from_certificate,
            'K': self.K,
            'diagnostics': dict(self.diagnostics),
        }


def orbit_rate(T: ol.Operator, m: hc.HemiMetric, x=None, K: int = None) -> Tuple[RateEstimate, ol.OrbitTrace]:
    """min over k <= K of delta(x, T^k x)/k, plus the smallest one-step displacement seen"""
    K = Config.DEFAULT_HORIZON if K is None else K
    x = m.canonical_point() if x is None else x
    trace = ol.trace_orbit(T, m, x, K)
    estimate = RateEstimate(
        upper_from_orbit=float(trace.running_min[-1]),
        upper_from_point=float(np.min(trace.step_displacements)),
        K=trace.K,
        diagnostics=trace.to_dict(),
    )
    logger.debug(f"orbit_rate[{T.tag}/{m.metric_kind}] K={K}: {estimate.upper_from_orbit:.12g}")
    return estimate, trace


# ============================================
# Y_ALPHA PATH
# ============================================

def default_schedule(levels: int = None) -> List[float]:
    """alpha_j = 1 - 2^-j, j = 1..levels"""
    levels = Config.ALPHA_LEVELS if levels is None else levels
    return [1.0 - 2.0 ** -j for j in range(1, levels + 1)]


@dataclass
class YAlphaPath:
    center: np.ndarray
    alphas: List[float] = field(default_factory=list)
    points: List[np.ndarray] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    displacements: List[float] = field(default_factory=list)
    directions: List[Optional[np.ndarray]] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)
    status: str = 'complete'
    stopped_at: Optional[float] = None
    last_residual: Optional[float] = None

    @property
    def best_index(self) -> Optional[int]:
        if not self.displacements:
            return None
        return int(np.argmin(self.displacements))

    @property
    def min_displacement(self) -> float:
        return min(self.displacements, default=float('inf'))

    @property
    def final_direction(self) -> Optional[np.ndarray]:
        return self.directions[-1] if self.directions else None

    def to_dict(self) -> dict:
        return {
            'alphas': list(self.alphas),
            'residuals': list(self.residuals),
            'displacements': list(self.displacements),
            'iterations': list(self.iterations),
            'min_displacement': self.min_displacement,
            'status': self.status,
            'stopped_at': self.stopped_at,
            'last_residual': self.last_residual,
        }


def _fixed_point(T: ol.Operator, m: hc.HemiMetric, g: hc.GeodesicFamily, y: np.ndarray,
                 alpha: float, stop_tol: float, budget: int) -> Tuple[Optional[np.ndarray], float, int]:
    """Iterate y <- T(r^alpha(y)); returns (y or None if the budget ran out, residual, iterations)"""
    target = stop_tol * (1.0 - alpha)
    prev_residual = float('inf')
    for it in range(1, budget + 1):
        new = ol.apply(T, hc.geodesic_point(g, y, alpha))
        residual = hc.induced_metric(m, new, y)
        if residual > prev_residual * (1.0 + CONTRACTION_SLACK) and prev_residual > target * 1e-3:
            raise PreconditionError(
                f"T o r^{alpha:.6g} is not contracting: residual grew from {prev_residual:.6g} to {residual:.6g} "
                f"at iteration {it}; check that the geodesics are star-shaped and T is non-expansive"
            )
        y, prev_residual = new, residual
        if residual <= target:
            return y, residual, it
    return None, prev_residual, budget


def y_alpha_path(T: ol.Operator, m: hc.HemiMetric, g: hc.GeodesicFamily,
                 schedule: Sequence[float] = None, stop_tol: float = None,
                 budget: int = None) -> YAlphaPath:
    """
    Fixed points y_alpha = T(r^alpha(y_alpha)) along an alpha schedule, warm-started.

    r^alpha(y) = gamma_y(alpha) is an alpha-contraction, so each level converges
    geometrically. The path stops at the first level whose iteration budget runs
    out or whose iterates leave floating range; completed levels are kept.
    """
    schedule = default_schedule() if schedule is None else list(schedule)
    stop_tol = Config.FIXED_POINT_TOL if stop_tol is None else stop_tol
    budget = Config.ALPHA_ITERATION_BUDGET if budget is None else budget
    if g.metric.space_kind != m.space_kind or g.metric.dimension != m.dimension:
        raise DomainError("geodesic family and metric live on different spaces")
    if any(not 0.0 < a < 1.0 for a in schedule):
        raise DomainError("alpha schedule values must lie in (0, 1)")

    path = YAlphaPath(center=np.array(g.center))
    y = np.array(g.center)
    for alpha in schedule:
        try:
            found, residual, used = _fixed_point(T, m, g, y, alpha, stop_tol, budget)
        except DomainError as exc:
            logger.warning(f"⚠️ y_alpha path left the space at alpha={alpha:.6g}: {exc}")
            path.status, path.stopped_at = 'left-domain', alpha
            break
        if found is None:
            logger.warning(f"⚠️ alpha={alpha:.6g}: no fixed point within {budget} iterations "
                           f"(residual {residual:.3g})")
            path.status, path.stopped_at, path.last_residual = 'budget-exhausted', alpha, residual
            break
        y = found
        path.alphas.append(alpha)
        path.points.append(y.copy())
        path.residuals.append(residual)
        path.iterations.append(used)
        path.displacements.append(hc.delta(m, y, ol.apply(T, y)))
        path.directions.append(y / np.linalg.norm(y) if m.is_cone else None)
        path.last_residual = residual
        logger.debug(f"alpha={alpha:.6g}: {used} iterations, displacement {path.displacements[-1]:.12g}")
    return path


# ============================================
# DISPLACEMENT REFINEMENT
# ============================================

def _chart(m: hc.HemiMetric, y: np.ndarray):
    """Coordinates theta for y and the map theta -> point"""
    if m.space_kind == hc.STANDARD_SPACE:
        return np.log(y), np.exp
    if m.space_kind == hc.PSD_SPACE:
        n = m.dimension
        rows, cols = np.triu_indices(n)

        def to_point(theta):
            S = np.zeros((n, n))
            S[rows, cols] = theta
            S = S + np.triu(S, 1).T
            return cg.expm(S)
        return cg.logm(y)[rows, cols], to_point
    return np.array(y, dtype=float), lambda theta: theta


def refine_displacement(T: ol.Operator, m: hc.HemiMetric, y, iterations: int = None,
                        step: float = 0.1) -> Tuple[np.ndarray, float]:
    """Coordinate descent on delta(y, T(y)) in log (cone) or plain coordinates"""
    iterations = Config.LOCAL_SEARCH_ITERATIONS if iterations is None else iterations
    y = m.validate(y)
    theta, to_point = _chart(m, y)

    def displacement(t):
        try:
            p = to_point(t)
            return hc.delta(m, p, ol.apply(T, p))
        except DomainError:
            return float('inf')

    start = displacement(theta)
    theta, value = coordinate_descent(displacement, theta, start, iterations, step)
    return to_point(theta), value


# ============================================
# MARTIN KERNELS
# ============================================

@dataclass(frozen=True, eq=False)
class MartinKernel:
    """[i(y)](v) = delta(basepoint, y) - delta(v, y)"""
    metric: hc.HemiMetric
    basepoint: np.ndarray
    y: np.ndarray
    offset: float

    def __call__(self, v) -> float:
        return self.offset - hc.delta(self.metric, v, self.y)


def martin_kernel_snapshot(m: hc.HemiMetric, basepoint, y) -> MartinKernel:
    base, point = m.validate(basepoint), m.validate(y)
    return MartinKernel(m, base, point, hc.delta(m, base, point))


def pumping_profile(h: cg.ConeMartinFunction, T: ol.Operator, x, rate: float, K: int) -> np.ndarray:
    """h(T^k x) - h(x) - k rate for k = 0..K"""
    x = cg.as_point(x, T.cone_kind).data
    out = np.zeros(K + 1)
    if T.homogeneous and h.variant == 'rfunk':
        # h(e^l y) = h(y) + l for the rfunk variant
        orbit = ol.iterate_normalized(T, x, K)
        _, y0, l0 = next(orbit)
        h0 = h(y0) + l0
        for k, y, l in orbit:
            out[k] = h(y) + l - h0 - k * rate
        return out
    h0, y = h(x), x
    for k in range(1, K + 1):
        y = ol.apply(T, y)
        out[k] = h(y) - h0 - k * rate
    return out


def cone_martin_from_path(path: YAlphaPath, variant: str = 'rfunk') -> Optional[cg.ConeMartinFunction]:
    """The Martin function of the final y_alpha direction, basepoint the path center"""
    u = path.final_direction
    if u is None:
        return None
    kind = cg.STANDARD if u.ndim == 1 else cg.PSD
    return cg.ConeMartinFunction(cg.as_point(u, kind), cg.as_point(path.center, kind), variant)


# ============================================
# LOWER BOUNDS OFF THE CONE
# ============================================

def _top_sequences(T: ol.Operator, x: np.ndarray, K: int) -> Tuple[np.ndarray, np.ndarray]:
    """max and min of T^k x - x for k = 1..K"""
    highs, lows = np.zeros(K), np.zeros(K)
    y = x
    for k in range(1, K + 1):
        y = ol.apply(T, y)
        diff = y - x
        highs[k - 1], lows[k - 1] = np.max(diff), np.min(diff)
    return highs, lows


def additive_lower_bound(T: ol.Operator, m: hc.HemiMetric, x=None, K: int = None) -> Tuple[float, str]:
    """
    Certified lower bound on the escape rate for operators off the cone, with its method.

    Every vector-space operator here is monotone and commutes with adding constants,
    so min(T^k x - x) is superadditive and sup_k min(T^k x - x)/k bounds the slowest
    growth rate from below.
    """
    K = Config.DEFAULT_HORIZON if K is None else K
    if isinstance(T, ol.Identity):
        return 0.0, 'identity'
    if isinstance(T, ol.Translation) and m.metric_kind != 'hemi-norm':
        return T.exact_rate(m), 'exact-translation'
    if isinstance(T, ol.TorusShift):
        # h(x, t) = sign(t_step) t is 1-Lipschitz for torus-line and grows by |t_step| per step
        return abs(T.t_step), 'line-martin'
    if T.space_kind != hc.VECTOR_SPACE or m.metric_kind == 'hemi-norm':
        return float('-inf'), 'none'

    x = m.canonical_point() if x is None else m.validate(x)
    highs, lows = _top_sequences(T, x, K)
    ks = np.arange(1, K + 1)
    slowest = float(np.max(lows / ks))
    if m.metric_kind == 'bottom':
        # rho_bottom = -rho_minus >= -rho_plus >= -inf_k max(T^k x - x)/k
        return -float(np.min(highs / ks)), 'negated-top-orbit'

    value, method = slowest, 'superadditive'
    game = getattr(T, 'game', None)
    if isinstance(T, ol.MaxPlus) or (game is not None and game.one_player and game.deterministic):
        cycle = karp_cycle_mean(game.max_plus_matrix())
        if cycle > value:
            value, method = cycle, 'cycle-mean'
    if m.metric_kind in ('norm-sup', 'norm-l2') and value < 0.0:
        value, method = 0.0, 'nonnegative'
    return value, method
