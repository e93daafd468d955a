"""
Hemi-Metrics
============
Hemi-metrics, hemi-norms, geodesic families and the seeded property samplers
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import cone_geometry as cg
from config import Config
from errors import DimensionError, DomainError

logger = logging.getLogger(__name__)

# ============================================
# CANONICAL NAMES
# ============================================

STANDARD_SPACE = 'standard-cone-interior'
PSD_SPACE = 'psd-cone-interior'
VECTOR_SPACE = 'real-vector-space'
TORUS_SPACE = 'torus-times-line'
SPACE_KINDS = (STANDARD_SPACE, PSD_SPACE, VECTOR_SPACE, TORUS_SPACE)

CONE_METRICS = ('rfunk', 'rfunk-plus', 'thompson', 'hilbert', 'delta-nu')
VECTOR_METRICS = ('norm-sup', 'norm-l2', 'top', 'bottom', 'hemi-norm')
TORUS_METRICS = ('torus-line',)
METRIC_KINDS = CONE_METRICS + VECTOR_METRICS + TORUS_METRICS

SYMMETRIC_METRICS = ('norm-sup', 'norm-l2', 'thompson', 'hilbert', 'torus-line')

# nu applied to the (ascending) log-spectrum of x^-1 y
NU_SPECS: Dict[str, Callable[[np.ndarray], float]] = {
    'max-abs': lambda lam: float(np.max(np.abs(lam))),
    'spread': lambda lam: float(lam[-1] - lam[0]),
    'max': lambda lam: float(lam[-1]),
    'max-plus': lambda lam: max(float(lam[-1]), 0.0),
    'l2': lambda lam: float(np.sqrt(np.sum(lam ** 2))),
}

SPACE_METRICS = {
    STANDARD_SPACE: CONE_METRICS,
    PSD_SPACE: CONE_METRICS,
    VECTOR_SPACE: VECTOR_METRICS,
    TORUS_SPACE: TORUS_METRICS,
}

GEODESIC_KINDS = ('straight-line', 'thompson-straight', 'geometric-mean')
THOMPSON_COEFFICIENT_FORMS = ('nussbaum', 'normalized')


# ============================================
# HEMI-NORMS
# ============================================

HEMI_NORM_KINDS = ('sup', 'top', 'bottom', 'custom-finite-E')


@dataclass(frozen=True, eq=False)
class HemiNorm:
    """p(z) = max over a finite set E of linear forms phi(z)"""
    kind: str
    dimension: int
    E: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in HEMI_NORM_KINDS:
            raise DomainError(f"unknown hemi-norm kind '{self.kind}'")
        if self.dimension < 1:
            raise DimensionError("hemi-norm dimension must be positive")
        if self.kind == 'custom-finite-E':
            if self.E is None:
                raise DomainError("custom hemi-norms need a list of linear forms E")
            E = np.atleast_2d(np.array(self.E, dtype=float))
            if E.shape[1] != self.dimension:
                raise DimensionError(f"forms have length {E.shape[1]}, expected {self.dimension}")
            E.setflags(write=False)
            object.__setattr__(self, 'E', E)
        if not self.separates():
            raise DomainError("hemi-norm does not separate points: p(z)=p(-z)=0 for some z != 0")

    def forms(self) -> np.ndarray:
        """The finite set E, one linear form per row"""
        eye = np.eye(self.dimension)
        if self.kind == 'sup':
            return np.vstack([eye, -eye])
        if self.kind == 'top':
            return eye
        if self.kind == 'bottom':
            return -eye
        return self.E

    def __call__(self, z) -> float:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dimension,):
            raise DimensionError(f"expected a vector of length {self.dimension}, got shape {z.shape}")
        if self.kind == 'sup':
            return float(np.max(np.abs(z)))
        if self.kind == 'top':
            return float(np.max(z))
        if self.kind == 'bottom':
            return float(-np.min(z))
        return float(np.max(self.E @ z))

    def separates(self, samples: int = 64, seed: int = 0) -> bool:
        """Weak separation on +-e_i plus a seeded random sample"""
        rng = np.random.default_rng(seed)
        eye = np.eye(self.dimension)
        probes = np.vstack([eye, -eye, rng.standard_normal((samples, self.dimension))])
        forms = self.forms()
        for z in probes:
            if max(np.max(forms @ z), np.max(forms @ -z)) <= 1e-12 * np.linalg.norm(z):
                return False
        return True

    def dual_norm(self, phi) -> float:
        """||phi||* = sup over p(z) <= 1 of phi(z); only for the sup norm (l1 of phi)"""
        if self.kind != 'sup':
            raise DomainError("dual norms are only computed for the sup norm")
        return float(np.sum(np.abs(phi)))


def torus_distance(a: float, b: float) -> float:
    """Distance on R/Z"""
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


# ============================================
# HEMI-METRICS
# ============================================

@dataclass(frozen=True, eq=False)
class HemiMetric:
    space_kind: str
    metric_kind: str
    dimension: int
    nu_spec: Optional[str] = None
    norm: Optional[HemiNorm] = None

    def __post_init__(self):
        if self.space_kind not in SPACE_KINDS:
            raise DomainError(f"unknown space kind '{self.space_kind}'")
        if self.metric_kind not in SPACE_METRICS[self.space_kind]:
            raise DomainError(f"metric '{self.metric_kind}' is not defined on '{self.space_kind}'")
        if self.dimension < 1:
            raise DimensionError("dimension must be positive")
        if self.space_kind == TORUS_SPACE and self.dimension != 2:
            raise DimensionError("torus-times-line points have exactly two coordinates")
        if self.metric_kind == 'delta-nu' and self.nu_spec not in NU_SPECS:
            raise DomainError(f"delta-nu needs nu_spec in {sorted(NU_SPECS)}, got {self.nu_spec!r}")
        if self.metric_kind == 'hemi-norm':
            if self.norm is None:
                raise DomainError("metric kind 'hemi-norm' needs a HemiNorm")
            if self.norm.dimension != self.dimension:
                raise DimensionError("hemi-norm dimension differs from the metric's")

    @property
    def is_cone(self) -> bool:
        return self.space_kind in (STANDARD_SPACE, PSD_SPACE)

    @property
    def cone_kind(self) -> Optional[str]:
        return {STANDARD_SPACE: cg.STANDARD, PSD_SPACE: cg.PSD}.get(self.space_kind)

    @property
    def is_symmetric(self) -> bool:
        if self.metric_kind == 'delta-nu':
            return self.nu_spec in ('max-abs', 'spread', 'l2')
        if self.metric_kind == 'hemi-norm':
            E = self.norm.forms()
            return all(np.any(np.all(np.isclose(E, -row), axis=1)) for row in E)
        return self.metric_kind in SYMMETRIC_METRICS

    @property
    def is_pseudo(self) -> bool:
        """Hilbert-type metrics vanish on rays"""
        return self.metric_kind == 'hilbert' or (self.metric_kind == 'delta-nu' and self.nu_spec == 'spread')

    def hemi_norm(self) -> HemiNorm:
        """The hemi-norm behind a vector-space metric"""
        if self.metric_kind == 'hemi-norm':
            return self.norm
        kind = {'norm-sup': 'sup', 'top': 'top', 'bottom': 'bottom'}.get(self.metric_kind)
        if kind is None:
            raise DomainError(f"metric '{self.metric_kind}' is not given by a finite hemi-norm")
        return HemiNorm(kind, self.dimension)

    def canonical_point(self) -> np.ndarray:
        if self.space_kind == STANDARD_SPACE:
            return np.ones(self.dimension)
        if self.space_kind == PSD_SPACE:
            return np.eye(self.dimension)
        return np.zeros(self.dimension)

    def validate(self, x) -> np.ndarray:
        """Return x as an array, raising if it is not a point of the space"""
        if self.is_cone:
            point = cg.as_point(x, self.cone_kind)
            if point.n != self.dimension:
                raise DimensionError(f"expected dimension {self.dimension}, got {point.n}")
            if not point.is_interior:
                raise DomainError(f"{self.metric_kind} is evaluated at interior cone points only")
            return point.data
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self.dimension,):
            raise DimensionError(f"expected a vector of length {self.dimension}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("point has non-finite coordinates")
        return arr

    def random_point(self, rng: np.random.Generator, spread: float = None) -> np.ndarray:
        spread = Config.SAMPLE_SPREAD if spread is None else spread
        if self.is_cone:
            return cg.random_interior(self.cone_kind, self.dimension, rng, spread)
        if self.space_kind == TORUS_SPACE:
            return np.array([rng.uniform(0.0, 1.0), rng.normal(scale=spread)])
        return rng.normal(scale=spread, size=self.dimension)

    def __call__(self, x, y) -> float:
        return delta(self, x, y)

    def to_dict(self) -> dict:
        out = {'space': self.space_kind, 'kind': self.metric_kind, 'dimension': self.dimension}
        if self.nu_spec is not None:
            out['nu'] = self.nu_spec
        if self.norm is not None:
            out['forms'] = self.norm.forms().tolist()
        return out


def _rfunk(x: np.ndarray, y: np.ndarray) -> float:
    if x.ndim == 1:
        return float(np.log(np.max(y / x)))
    return float(np.log(cg.gauge_M(x, y)))


def _raw_delta(m: HemiMetric, x: np.ndarray, y: np.ndarray) -> float:
    kind = m.metric_kind
    if kind == 'rfunk':
        return _rfunk(x, y)
    if kind == 'rfunk-plus':
        return max(_rfunk(x, y), 0.0)
    if kind == 'thompson':
        return max(_rfunk(x, y), _rfunk(y, x))
    if kind == 'hilbert':
        return _rfunk(x, y) + _rfunk(y, x)
    if kind == 'delta-nu':
        return NU_SPECS[m.nu_spec](cg.log_spectrum(x, y))
    if kind == 'norm-sup':
        return float(np.max(np.abs(y - x)))
    if kind == 'norm-l2':
        return float(np.linalg.norm(y - x))
    if kind == 'top':
        return float(np.max(y - x))
    if kind == 'bottom':
        return float(np.max(x - y))
    if kind == 'hemi-norm':
        return m.norm(y - x)
    return torus_distance(x[0], y[0]) + abs(y[1] - x[1])


def delta(m: HemiMetric, x, y) -> float:
    """The hemi-metric value delta(x, y)"""
    px, py = m.validate(x), m.validate(y)
    if np.array_equal(px, py):
        return 0.0
    return _raw_delta(m, px, py)


def induced_metric(m: HemiMetric, x, y) -> float:
    """d(x,y) = max(delta(x,y), delta(y,x))"""
    px, py = m.validate(x), m.validate(y)
    if np.array_equal(px, py):
        return 0.0
    return max(_raw_delta(m, px, py), _raw_delta(m, py, px))


# ============================================
# GEODESICS
# ============================================

@dataclass(frozen=True, eq=False)
class GeodesicFamily:
    """Geodesics s -> gamma_y(s) from a common center"""
    center: np.ndarray
    kind: str
    metric: HemiMetric

    def __post_init__(self):
        if self.kind not in GEODESIC_KINDS:
            raise DomainError(f"unknown geodesic kind '{self.kind}'")
        if self.kind != 'straight-line' and not self.metric.is_cone:
            raise DomainError(f"{self.kind} geodesics live on cones")
        if self.metric.space_kind == TORUS_SPACE:
            raise DomainError("the torus-times-line space has no star-shaped geodesic family")
        center = np.array(self.metric.validate(self.center), dtype=float)
        center.setflags(write=False)
        object.__setattr__(self, 'center', center)

    def point(self, y, s: float) -> np.ndarray:
        return geodesic_point(self, y, s)


def thompson_coefficients(alpha: float, beta: float, s: float, form: str) -> Tuple[float, float]:
    """
    Coefficients (a, b) with gamma(s) = a*y + b*center on the Thompson straight line.

    alpha = m(y/center), beta = M(y/center), alpha < beta.
    """
    a = beta ** s - alpha ** s
    b = beta * alpha ** s - alpha * beta ** s
    if form == 'nussbaum':
        denom = beta - alpha
    elif form == 'normalized':
        denom = b + a
    else:
        raise DomainError(f"unknown Thompson coefficient form '{form}'")
    return a / denom, b / denom


def _thompson_point(center: np.ndarray, y: np.ndarray, s: float, form: str) -> np.ndarray:
    beta = cg.gauge_M(center, y)
    alpha = cg.gauge_m(center, y)
    if beta - alpha <= 1e-14 * beta:
        return beta ** s * center
    a, b = thompson_coefficients(alpha, beta, s, form)
    return a * y + b * center


def geodesic_point(g: GeodesicFamily, y, s: float) -> np.ndarray:
    """gamma_y(s) for the family g"""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"geodesic parameter s={s} is outside [0, 1]")
    py = g.metric.validate(y)
    if s == 0.0:
        return np.array(g.center)
    if s == 1.0:
        return np.array(py)

    x = g.center
    if g.kind == 'straight-line':
        return (1.0 - s) * x + s * py
    if g.kind == 'thompson-straight':
        return _thompson_point(x, py, s, resolve_thompson_form()[0])
    if x.ndim == 1:
        return x ** (1.0 - s) * py ** s
    root, inv_root = cg.sqrtm(x), cg.invsqrtm(x)
    out = root @ cg.powm(inv_root @ py @ inv_root, s) @ root
    return (out + out.T) / 2


def _identity_error(m: HemiMetric, path: Callable[[float], np.ndarray], y: np.ndarray,
                    center: np.ndarray, grid: Sequence[float]) -> float:
    full = delta(m, center, y)
    worst = 0.0
    for i, s in enumerate(grid):
        for t in grid[i:]:
            worst = max(worst, abs(delta(m, path(s), path(t)) - (t - s) * full))
    return worst


@lru_cache(maxsize=None)
def resolve_thompson_form() -> Tuple[str, Dict[str, float]]:
    """
    Pick the Thompson straight-line coefficient form that satisfies the geodesic identity.

    Each form is scored on a fixed probe set in R+^3 by its worst error in
    gamma(0), gamma(1) and delta(gamma(s), gamma(t)) = (t - s) delta(center, y).
    """
    m = HemiMetric(STANDARD_SPACE, 'thompson', 3)
    rng = np.random.default_rng(20240917)
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    probes = [(m.random_point(rng), m.random_point(rng)) for _ in range(25)]
    errors = {}
    for form in THOMPSON_COEFFICIENT_FORMS:
        worst = 0.0
        for center, y in probes:
            def path(s, c=center, y=y, f=form):
                return _thompson_point(c, y, s, f)
            worst = max(worst, _identity_error(m, path, y, center, grid))
        errors[form] = worst
    chosen = min(THOMPSON_COEFFICIENT_FORMS, key=lambda f: errors[f])
    logger.debug(f"Thompson straight-line form: {chosen} (errors {errors})")
    return chosen, errors


# ============================================
# SEEDED SAMPLERS
# ============================================

@dataclass(frozen=True)
class SamplePlan:
    """Seeded sampling plan; batches partition the seed space, not the thread pool"""
    seed: int = Config.DEFAULT_SEED
    count: int = Config.DEFAULT_SAMPLES
    tol: float = Config.SAMPLE_TOL
    spread: float = Config.SAMPLE_SPREAD
    batches: int = 8

    def partition(self) -> List[Tuple[np.random.Generator, int]]:
        children = np.random.SeedSequence(self.seed).spawn(self.batches)
        sizes = [self.count // self.batches + (1 if i < self.count % self.batches else 0)
                 for i in range(self.batches)]
        return [(np.random.default_rng(child), size) for child, size in zip(children, sizes)]


def run_batches(plan: SamplePlan, fn: Callable[[np.random.Generator, int], list]) -> list:
    """Run fn on every batch of the plan, concatenating results in batch order"""
    with ThreadPoolExecutor(max_workers=Config.THREADS) as pool:
        parts = list(pool.map(lambda batch: fn(*batch), plan.partition()))
    return [item for part in parts for item in part]


@dataclass
class SampleReport:
    """Outcome of a sampled inequality check"""
    name: str
    samples: int
    tol: float
    max_excess: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self, limit: int = 10) -> dict:
        return {
            'check': self.name,
            'samples': self.samples,
            'tol': self.tol,
            'max_excess': self.max_excess,
            'violation_count': len(self.violations),
            'violations': [_jsonable(v) for v in self.violations[:limit]],
            'passed': self.passed,
        }


def _jsonable(item):
    if isinstance(item, np.ndarray):
        return item.tolist()
    if isinstance(item, (tuple, list)):
        return [_jsonable(v) for v in item]
    return item


def _collect(name: str, plan: SamplePlan, excesses: list) -> SampleReport:
    worst = max((e for e, _ in excesses), default=float('-inf'))
    violations = [payload for e, payload in excesses if e > plan.tol]
    if violations:
        logger.warning(f"⚠️ {name}: {len(violations)} of {plan.count} samples exceed tol {plan.tol}")
    return SampleReport(name, plan.count, plan.tol, worst, violations)


def check_triangle(m: HemiMetric, plan: SamplePlan = SamplePlan()) -> SampleReport:
    """delta(x,z) <= delta(x,y) + delta(y,z) on sampled triples"""
    def batch(rng, size):
        out = []
        for _ in range(size):
            x, y, z = (m.random_point(rng, plan.spread) for _ in range(3))
            excess = delta(m, x, z) - delta(m, x, y) - delta(m, y, z)
            out.append((excess, (x, y, z, excess)))
        return out
    return _collect(f"triangle[{m.metric_kind}]", plan, run_batches(plan, batch))


GEODESIC_ENDPOINT_TOL = 1e-12


def check_geodesic(g: GeodesicFamily, plan: SamplePlan = SamplePlan()) -> SampleReport:
    """Endpoints within 1e-12 and delta(gamma(s),gamma(t)) = (t-s) delta(center,y)"""
    m = g.metric
    first, last = np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0)

    def batch(rng, size):
        out = []
        for _ in range(size):
            y = m.random_point(rng, plan.spread)
            s, t = np.sort(rng.uniform(0.0, 1.0, 2))
            full = delta(m, g.center, y)
            excess = abs(delta(m, geodesic_point(g, y, s), geodesic_point(g, y, t)) - (t - s) * full)
            # endpoints through the formula itself, not the s == 0 / s == 1 shortcuts
            scale = max(1.0, float(np.max(np.abs(y))), float(np.max(np.abs(g.center))))
            drift = max(np.max(np.abs(geodesic_point(g, y, first) - g.center)),
                        np.max(np.abs(geodesic_point(g, y, last) - y))) / scale
            if drift > GEODESIC_ENDPOINT_TOL:
                excess = max(excess, plan.tol + drift)
            out.append((excess, (y, float(s), float(t), excess)))
        return out
    return _collect(f"geodesic[{g.kind}/{m.metric_kind}]", plan, run_batches(plan, batch))


def star_shaped_excess(g: GeodesicFamily, m: HemiMetric, y, z, s: float) -> float:
    """delta(gamma_y(s), gamma_z(s)) - s delta(y, z)"""
    return delta(m, geodesic_point(g, y, s), geodesic_point(g, z, s)) - s * delta(m, y, z)


def check_star_shaped(g: GeodesicFamily, m: HemiMetric,
                      plan: SamplePlan = SamplePlan()) -> SampleReport:
    """Sample delta(gamma_y(s),gamma_z(s)) <= s delta(y,z); report every (y,z,s) above tol"""
    if m.space_kind != g.metric.space_kind or m.dimension != g.metric.dimension:
        raise DimensionError("geodesic family and metric live on different spaces")

    def batch(rng, size):
        out = []
        for _ in range(size):
            y, z = m.random_point(rng, plan.spread), m.random_point(rng, plan.spread)
            s = float(rng.uniform(0.0, 1.0))
            excess = star_shaped_excess(g, m, y, z, s)
            out.append((excess, (y, z, s, excess)))
        return out
    return _collect(f"star-shaped[{g.kind}/{m.metric_kind}]", plan, run_batches(plan, batch))


def check_non_expansive(m: HemiMetric, fn: Callable[[np.ndarray], np.ndarray], name: str = 'T',
                        plan: SamplePlan = SamplePlan()) -> SampleReport:
    """delta(T(x), T(y)) <= delta(x, y) on sampled pairs"""
    def batch(rng, size):
        out = []
        for _ in range(size):
            x, y = m.random_point(rng, plan.spread), m.random_point(rng, plan.spread)
            try:
                excess = delta(m, fn(x), fn(y)) - delta(m, x, y)
            except DomainError as exc:
                logger.debug(f"non-expansive sample skipped: {exc}")
                continue
            out.append((excess, (x, y, excess)))
        return out
    return _collect(f"non-expansive[{name}/{m.metric_kind}]", plan, run_batches(plan, batch))
