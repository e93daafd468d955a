"""
Operator Library
================
Non-expansive maps T, their radial extensions, recession maps and orbit traces
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

import cone_geometry as cg
import hemi_core as hc
from config import Config
from errors import DimensionError, DomainError
from stochastic_games import GameSpec, shapley_apply

logger = logging.getLogger(__name__)

ORDER_METRICS = ('rfunk', 'rfunk-plus', 'thompson', 'hilbert')
ADDITIVE_METRICS = ('top', 'bottom', 'norm-sup')
NORM_KINDS = {'sup': 'norm-sup', 'l2': 'norm-l2', 'top': 'top', 'bottom': 'bottom'}

# Second-z check for radial limits, relative
RADIAL_INDEPENDENCE_TOL = 1e-8


# ============================================
# OPERATOR FAMILY
# ============================================

class Operator:
    """Base class of the tagged operator family"""
    tag = 'operator'
    space_kind = hc.VECTOR_SPACE
    dimension = 0
    homogeneous = False
    sub_homogeneous = False

    @property
    def natural_metrics(self) -> Tuple[str, ...]:
        return ()

    @property
    def is_cone(self) -> bool:
        return self.space_kind in (hc.STANDARD_SPACE, hc.PSD_SPACE)

    @property
    def cone_kind(self) -> Optional[str]:
        return {hc.STANDARD_SPACE: cg.STANDARD, hc.PSD_SPACE: cg.PSD}.get(self.space_kind)

    def default_metric(self) -> hc.HemiMetric:
        return hc.HemiMetric(self.space_kind, self.natural_metrics[0], self.dimension)

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def radial_closed_form(self, x: np.ndarray) -> Optional[np.ndarray]:
        """T-hat(x) on the closed cone when a formula exists"""
        return None

    def recession_closed_form(self, u: np.ndarray) -> Optional[np.ndarray]:
        """T-hat_r(u) when a formula exists"""
        if self.homogeneous:
            return self.radial_closed_form(u)
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


def _square(matrix, name: str) -> np.ndarray:
    arr = np.array(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _psd(matrix, name: str) -> np.ndarray:
    arr = _square(matrix, name)
    if np.max(np.abs(arr - arr.T)) > 1e-12 * max(1.0, np.max(np.abs(arr))):
        raise DomainError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(arr)[0] < -cg.PSD_NEGATIVE_TOL * max(np.linalg.norm(arr), 1e-300):
        raise DomainError(f"{name} must be positive semidefinite")
    return arr


class NonnegMatrix(Operator):
    tag = 'nonneg-matrix'
    space_kind = hc.STANDARD_SPACE
    homogeneous = True
    sub_homogeneous = True

    def __init__(self, matrix):
        M = _square(matrix, 'matrix')
        if np.any(M < 0) or not np.all(np.isfinite(M)):
            raise DomainError("matrix entries must be finite and nonnegative")
        zero_rows = np.flatnonzero(~M.any(axis=1))
        if zero_rows.size:
            raise DomainError(f"row {int(zero_rows[0])} is zero, T would leave the interior")
        self.M = M
        self.dimension = M.shape[0]

    @property
    def natural_metrics(self):
        return ORDER_METRICS

    def apply(self, x):
        return self.M @ x

    def radial_closed_form(self, x):
        return self.M @ x

    def to_dict(self):
        return {'type': self.tag, 'matrix': self.M.tolist()}


class MaxPlus(Operator):
    tag = 'max-plus'

    def __init__(self, matrix):
        A = _square(matrix, 'matrix')
        if np.any(np.isnan(A)) or np.any(A == np.inf):
            raise DomainError("max-plus entries are reals or -inf")
        self.game = GameSpec.from_max_plus(A)
        self.A = A
        self.dimension = A.shape[0]

    @property
    def natural_metrics(self):
        return ADDITIVE_METRICS

    def apply(self, x):
        return np.max(self.A + x[None, :], axis=1)

    def to_dict(self):
        return {'type': self.tag, 'matrix': [[v if np.isfinite(v) else '-inf' for v in row]
                                             for row in self.A.tolist()]}


class Shapley(Operator):
    tag = 'shapley'

    def __init__(self, game: GameSpec):
        self.game = game
        self.dimension = game.states

    @property
    def natural_metrics(self):
        return ADDITIVE_METRICS

    def apply(self, x):
        return shapley_apply(self.game, x)

    def to_dict(self):
        return {'type': self.tag, 'game': self.game.to_dict()}


class Riccati(Operator):
    """T(X) = A + M (B + X^-1)^-1 M^T on the PSD cone"""
    tag = 'riccati'
    space_kind = hc.PSD_SPACE
    sub_homogeneous = True

    def __init__(self, A, B, M):
        self.A = _psd(A, 'A')
        self.B = _psd(B, 'B')
        self.M = _square(M, 'M')
        n = self.A.shape[0]
        if self.B.shape != (n, n) or self.M.shape != (n, n):
            raise DimensionError("A, B and M must have the same size")
        self.condition_number = float(np.linalg.cond(self.M))
        if not np.isfinite(self.condition_number) or self.condition_number > 1e12:
            raise DomainError(f"M is numerically singular (condition number {self.condition_number:.3g})")
        w, V = np.linalg.eigh(self.B)
        self.L = V * np.sqrt(np.clip(w, 0.0, None))
        self.dimension = n

    @property
    def natural_metrics(self):
        return ('thompson', 'rfunk-plus')

    def _inner(self, X: np.ndarray) -> np.ndarray:
        # (B + X^-1)^-1 = X - X L (I + L^T X L)^-1 L^T X, valid on the closed cone
        XL = X @ self.L
        core = np.eye(self.dimension) + self.L.T @ XL
        return X - XL @ np.linalg.solve(core, XL.T)

    def apply(self, X):
        out = self.A + self.M @ self._inner(X) @ self.M.T
        return (out + out.T) / 2

    def radial_closed_form(self, X):
        return self.apply(X)

    def recession_closed_form(self, U):
        # gamma^-1 T(gamma U) -> M (U - U^1/2 P U^1/2) M^T, P the projector onto range(U^1/2 L)
        root = cg.sqrtm(U)
        F = root @ self.L
        left, s, _ = np.linalg.svd(F)
        keep = s > 1e-12 * max(s[0] if s.size else 0.0, 1e-300)
        P = left[:, :keep.sum()] @ left[:, :keep.sum()].T
        out = self.M @ (U - root @ P @ root) @ self.M.T
        return (out + out.T) / 2

    def to_dict(self):
        return {'type': self.tag, 'A': self.A.tolist(), 'B': self.B.tolist(), 'M': self.M.tolist()}


class Translation(Operator):
    tag = 'translation'

    def __init__(self, c, norm_kind: str = 'sup'):
        c = np.array(c, dtype=float)
        if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
            raise DomainError("translation vector must be a finite non-empty vector")
        if norm_kind not in NORM_KINDS:
            raise DomainError(f"norm_kind must be one of {sorted(NORM_KINDS)}")
        c.setflags(write=False)
        self.c = c
        self.norm_kind = norm_kind
        self.dimension = c.size

    @property
    def natural_metrics(self):
        primary = NORM_KINDS[self.norm_kind]
        return (primary,) + tuple(k for k in hc.VECTOR_METRICS if k not in (primary, 'hemi-norm'))

    def apply(self, x):
        return x + self.c

    def exact_rate(self, m: hc.HemiMetric) -> float:
        """Translations move every point by p(c)"""
        if m.metric_kind == 'norm-l2':
            return float(np.linalg.norm(self.c))
        return m.hemi_norm()(self.c)

    def to_dict(self):
        return {'type': self.tag, 'c': self.c.tolist(), 'norm': self.norm_kind}


class TorusShift(Operator):
    """(x, t) -> (x + alpha mod 1, t + t_step) on R/Z x R"""
    tag = 'torus-shift'
    space_kind = hc.TORUS_SPACE
    dimension = 2

    def __init__(self, alpha: float, t_step: float = 1.0):
        if not 0.0 < alpha < 0.5:
            raise DomainError(f"alpha={alpha} must lie in (0, 1/2)")
        self.alpha = float(alpha)
        self.t_step = float(t_step)

    @property
    def natural_metrics(self):
        return ('torus-line',)

    def apply(self, p):
        return np.array([(p[0] + self.alpha) % 1.0, p[1] + self.t_step])

    def to_dict(self):
        return {'type': self.tag, 'alpha': self.alpha, 't_step': self.t_step}


class Identity(Operator):
    tag = 'identity'
    homogeneous = True
    sub_homogeneous = True

    def __init__(self, space_kind: str, dimension: int):
        if space_kind not in hc.SPACE_KINDS:
            raise DomainError(f"unknown space kind '{space_kind}'")
        self.space_kind = space_kind
        self.dimension = dimension

    @property
    def natural_metrics(self):
        return tuple(k for k in hc.SPACE_METRICS[self.space_kind] if k not in ('delta-nu', 'hemi-norm'))

    def apply(self, x):
        return np.array(x, dtype=float)

    def radial_closed_form(self, x):
        return np.array(x, dtype=float)

    def to_dict(self):
        return {'type': self.tag, 'space': self.space_kind, 'dimension': self.dimension}


class Composite(Operator):
    """Parts applied in order: T = T_last o ... o T_first"""
    tag = 'composite'

    def __init__(self, parts: Sequence[Operator]):
        if not parts:
            raise DomainError("composite operators need at least one part")
        first = parts[0]
        for part in parts[1:]:
            if part.space_kind != first.space_kind or part.dimension != first.dimension:
                raise DimensionError("composite parts must act on the same space")
        self.parts = list(parts)
        self.space_kind = first.space_kind
        self.dimension = first.dimension
        self.homogeneous = all(p.homogeneous for p in parts)
        self.sub_homogeneous = all(p.sub_homogeneous for p in parts)

    @property
    def natural_metrics(self):
        shared = [k for k in self.parts[0].natural_metrics
                  if all(k in p.natural_metrics for p in self.parts[1:])]
        if not shared:
            raise DomainError("composite parts share no hemi-metric they are non-expansive in")
        return tuple(shared)

    def apply(self, x):
        for part in self.parts:
            x = part.apply(x)
        return x

    def radial_closed_form(self, x):
        for part in self.parts:
            x = part.radial_closed_form(x)
            if x is None:
                return None
        return x

    def to_dict(self):
        return {'type': self.tag, 'parts': [p.to_dict() for p in self.parts]}


# ============================================
# EVALUATION
# ============================================

def apply(T: Operator, x) -> np.ndarray:
    """T(x), with domain checks on input and output"""
    x = np.asarray(x, dtype=float)
    if T.is_cone:
        point = cg.as_point(x, T.cone_kind)
        if point.n != T.dimension:
            raise DimensionError(f"expected dimension {T.dimension}, got {point.n}")
        if not point.is_interior:
            raise DomainError(f"{T.tag} is applied at interior cone points")
        x = point.data
    elif x.shape != (T.dimension,):
        raise DimensionError(f"expected a vector of length {T.dimension}, got shape {x.shape}")
    out = T.apply(x)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"{T.tag} produced non-finite values")
    return out


@dataclass
class LimitResult:
    """Outcome of a radial or recession limit; value is None unless converged"""
    value: Optional[np.ndarray]
    converged: bool
    status: str
    steps: int = 0
    monotone: bool = True
    independence_gap: float = 0.0


def _require_cone(T: Operator, what: str):
    if not T.is_cone:
        raise DomainError(f"{what} needs a cone operator; {T.tag} acts on {T.space_kind}")


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300))


def _eps_limit(T: Operator, x: np.ndarray, z: np.ndarray, steps: int, rtol: float):
    scale = np.linalg.norm(x) or 1.0
    prev = None
    for j in range(1, steps + 1):
        value = T.apply(x + 2.0 ** -j * scale * z)
        if prev is not None and _relative(value, prev) < rtol:
            return value, j
        prev = value
    return None, steps


def radial_extension(T: Operator, x, z=None, steps: int = None, rtol: float = None,
                     method: str = 'auto') -> LimitResult:
    """T-hat(x) = lim_{eps -> 0+} T(x + eps z), x anywhere in the closed cone"""
    _require_cone(T, "radial extension")
    steps = Config.EPS_STEPS if steps is None else steps
    rtol = Config.SCHEDULE_RTOL if rtol is None else rtol
    point = cg.as_point(x, T.cone_kind)
    if point.n != T.dimension:
        raise DimensionError(f"expected dimension {T.dimension}, got {point.n}")

    if method == 'auto':
        closed = T.radial_closed_form(point.data)
        if closed is not None:
            return LimitResult(closed, True, 'closed-form')
    elif method != 'limit':
        raise DomainError(f"unknown radial method '{method}'")

    if point.is_interior and method == 'auto':
        return LimitResult(T.apply(point.data), True, 'interior')

    base = cg.canonical_point(T.cone_kind, T.dimension).data
    z = base if z is None else cg.as_point(z, T.cone_kind).data
    value, used = _eps_limit(T, point.data, z, steps, rtol)
    if value is None:
        logger.warning(f"⚠️ radial limit of {T.tag} did not settle in {steps} steps")
        return LimitResult(None, False, 'not-converged', used)

    # second direction: a skewed interior point
    weights = np.linspace(1.0, 2.0, T.dimension)
    z2 = weights * base if T.cone_kind == cg.STANDARD else np.diag(weights)
    other, _ = _eps_limit(T, point.data, z2, steps, rtol)
    gap = _relative(value, other) if other is not None else float('inf')
    if gap > RADIAL_INDEPENDENCE_TOL:
        logger.warning(f"⚠️ radial limit of {T.tag} depends on the approach direction (gap {gap:.3g})")
        return LimitResult(None, False, 'direction-dependent', used, independence_gap=gap)
    return LimitResult(value, True, 'converged', used, independence_gap=gap)


def recession_map(T: Operator, u, steps: int = None, rtol: float = None,
                  method: str = 'auto') -> LimitResult:
    """T-hat_r(u) = lim_{gamma -> inf} T-hat(gamma u) / gamma"""
    _require_cone(T, "recession map")
    steps = Config.GAMMA_STEPS if steps is None else steps
    rtol = Config.SCHEDULE_RTOL if rtol is None else rtol
    point = cg.as_point(u, T.cone_kind)
    if point.is_zero:
        raise DomainError("recession map at the zero cone point")

    if method == 'auto':
        closed = T.recession_closed_form(point.data)
        if closed is not None:
            return LimitResult(closed, True, 'closed-form')
        if T.homogeneous:
            inner = radial_extension(T, point.data, method=method)
            inner.status = 'homogeneous' if inner.converged else inner.status
            return inner
    elif method != 'limit':
        raise DomainError(f"unknown recession method '{method}'")

    prev = None
    monotone = True
    for j in range(0, steps + 1):
        gamma = 2.0 ** j
        inner = radial_extension(T, gamma * point.data, method=method)
        if not inner.converged:
            return LimitResult(None, False, f"radial-{inner.status}", j, monotone)
        value = inner.value / gamma
        if prev is not None:
            if not _dominated(prev, value):
                monotone = False
            if _relative(value, prev) < rtol:
                if not monotone:
                    logger.warning(f"⚠️ recession net of {T.tag} was not monotone")
                return LimitResult(value, True, 'converged', j, monotone)
        prev = value
    logger.warning(f"⚠️ recession limit of {T.tag} did not settle in {steps} doublings")
    return LimitResult(None, False, 'not-converged', steps, monotone)


def _dominated(prev: np.ndarray, value: np.ndarray) -> bool:
    """value <= (1 + 1e-9) prev in the cone order"""
    if not value.any():
        return True
    if not prev.any():
        return False
    return cg.gauge_M(prev, value) <= 1.0 + 1e-9


# ============================================
# ORBITS
# ============================================

_SCALED_NU = {'rfunk': 'max', 'rfunk-plus': 'max-plus', 'thompson': 'max-abs', 'hilbert': 'spread'}


def scaled_delta(m: hc.HemiMetric, x: np.ndarray, a: float, y: np.ndarray, b: float) -> float:
    """delta(e^a x, e^b y) for the RFunk family without forming e^a x"""
    nu = m.nu_spec if m.metric_kind == 'delta-nu' else _SCALED_NU[m.metric_kind]
    if np.array_equal(x, y) and a == b:
        return 0.0
    return hc.NU_SPECS[nu](cg.log_spectrum(x, y) + (b - a))


def iterate_normalized(T: Operator, x, K: int) -> Iterator[Tuple[int, np.ndarray, float]]:
    """(k, y_k, l_k) with T^k(x) = e^{l_k} y_k and ||y_k|| = 1 (homogeneous cone maps)"""
    if not (T.is_cone and T.homogeneous):
        raise DomainError("normalized iteration needs a positively homogeneous cone operator")
    y = np.asarray(x, dtype=float)
    norm = np.linalg.norm(y)
    y, log_scale = y / norm, float(np.log(norm))
    yield 0, y, log_scale
    for k in range(1, K + 1):
        y = T.apply(y)
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm <= 0.0:
            raise DomainError(f"{T.tag} orbit left the cone", k=k)
        y = y / norm
        log_scale += float(np.log(norm))
        yield k, y, log_scale


@dataclass
class OrbitTrace:
    """delta(T^k x, T^{k+1} x), delta(x, T^k x) and the running min of delta(x, T^k x)/k"""
    start: np.ndarray
    K: int
    step_displacements: np.ndarray
    cumulative: np.ndarray
    running_min: np.ndarray
    last_point: np.ndarray
    log_scale: float = 0.0
    snapshots: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    fixed_point_step: Optional[int] = None
    # first iterate that left the numerical interior; K is then the last good step
    truncated_at: Optional[int] = None

    def subadditivity_excess(self, max_pairs: int = 4_000_000) -> float:
        """max over stored k, l of delta(x,T^{k+l}x) - delta(x,T^k x) - delta(x,T^l x)"""
        u = np.concatenate([[0.0], self.cumulative])
        K = self.K
        stride = max(1, int(np.ceil(K / np.sqrt(max_pairs))))
        ks = np.arange(1, K + 1, stride)
        k, l = np.meshgrid(ks, ks, indexing='ij')
        mask = k + l <= K
        return float(np.max(u[(k + l)[mask]] - u[k[mask]] - u[l[mask]], initial=float('-inf')))

    def step_increase(self) -> float:
        """Largest increase between consecutive per-step displacements"""
        if self.step_displacements.size < 2:
            return 0.0
        return float(np.max(np.diff(self.step_displacements)))

    def to_dict(self) -> dict:
        return {
            'K': self.K,
            'upper_from_orbit': float(self.running_min[-1]),
            'first_step': float(self.step_displacements[0]),
            'last_step': float(self.step_displacements[-1]),
            'min_step': float(np.min(self.step_displacements)),
            'final_cumulative': float(self.cumulative[-1]),
            'subadditivity_excess': self.subadditivity_excess(),
            'step_increase': self.step_increase(),
            'fixed_point_step': self.fixed_point_step,
            'truncated_at': self.truncated_at,
        }


def _snapshot_steps(K: int) -> set:
    steps = {K}
    k = 1
    while k < K:
        steps.add(k)
        k *= 2
    return steps


def trace_orbit(T: Operator, m: hc.HemiMetric, x, K: int,
                fixed_point_tol: float = 1e-10) -> OrbitTrace:
    """Iterate T K times from x, recording the displacement sequences"""
    if K < 1:
        raise DomainError("horizon K must be at least 1")
    if m.space_kind != T.space_kind or m.dimension != T.dimension:
        raise DimensionError(f"metric on {m.space_kind}^{m.dimension} does not match {T.tag}")
    x0 = m.validate(x)
    steps, cumulative = np.zeros(K), np.zeros(K)
    snapshots, keep = [], _snapshot_steps(K)
    fixed_step, truncated_at = None, None
    normalized = T.is_cone and T.homogeneous and m.metric_kind in ORDER_METRICS + ('delta-nu',)

    if normalized:
        orbit = iterate_normalized(T, x0, K)
        _, base, base_log = next(orbit)
        prev, prev_log = base, base_log
        for k, y, log_scale in orbit:
            if not np.all(np.isfinite(y)) or cg.classify(T.cone_kind, y) != cg.INTERIOR:
                raise DomainError(f"{T.tag} orbit left the open cone", k=k)
            steps[k - 1] = scaled_delta(m, prev, prev_log, y, log_scale)
            cumulative[k - 1] = scaled_delta(m, base, base_log, y, log_scale)
            if k in keep:
                snapshots.append((k, y.copy()))
            prev, prev_log = y, log_scale
        last, last_log = prev, prev_log
    else:
        prev = x0
        for k in range(1, K + 1):
            y = T.apply(prev)
            try:
                m.validate(y)
            except DomainError as exc:
                if k == 1:
                    raise DomainError(f"{T.tag} orbit left the space: {exc}", k=k) from exc
                logger.warning(f"⚠️ {T.tag} orbit left the numerical interior at k={k}; trace stops at k={k - 1}")
                truncated_at = k
                break
            steps[k - 1] = hc.delta(m, prev, y)
            cumulative[k - 1] = hc.delta(m, x0, y)
            if fixed_step is None and hc.induced_metric(m, prev, y) < fixed_point_tol:
                fixed_step = k
            if k in keep:
                snapshots.append((k, y.copy()))
            prev = y
        last, last_log = prev, 0.0
        if truncated_at is not None:
            K = truncated_at - 1
            steps, cumulative = steps[:K], cumulative[:K]
            if not snapshots or snapshots[-1][0] != K:
                snapshots.append((K, prev.copy()))

    running = np.minimum.accumulate(cumulative / np.arange(1, K + 1))
    return OrbitTrace(x0, K, steps, cumulative, running, last, last_log, snapshots, fixed_step, truncated_at)
