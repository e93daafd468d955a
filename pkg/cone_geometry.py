"""
Cone Geometry
=============
Order and gauge computations on the standard cone R+^n and the PSD cone S_n+
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from config import Config
from errors import DimensionError, DomainError

logger = logging.getLogger(__name__)

STANDARD = 'standard'
PSD = 'psd'
CONE_KINDS = (STANDARD, PSD)

INTERIOR = 'interior'
BOUNDARY = 'boundary'
ZERO = 'zero'

# Negative coordinates above -NEGATIVE_CLAMP are rounding noise and get clamped
NEGATIVE_CLAMP = 1e-12
# PSD points may have eigenvalues down to -PSD_NEGATIVE_TOL * ||X||
PSD_NEGATIVE_TOL = 1e-10


# ============================================
# SYMMETRIC MATRIX FUNCTIONS
# ============================================

def _eig_apply(X: np.ndarray, fn) -> np.ndarray:
    w, V = np.linalg.eigh(X)
    out = (V * fn(w)) @ V.T
    return (out + out.T) / 2


def sqrtm(X: np.ndarray) -> np.ndarray:
    """Square root of a PSD matrix"""
    return _eig_apply(X, lambda w: np.sqrt(np.clip(w, 0.0, None)))


def invsqrtm(X: np.ndarray) -> np.ndarray:
    """Inverse square root of a positive definite matrix"""
    return _eig_apply(X, lambda w: 1.0 / np.sqrt(w))


def powm(X: np.ndarray, p: float) -> np.ndarray:
    """Real power of a positive definite matrix"""
    return _eig_apply(X, lambda w: np.power(w, p))


def logm(X: np.ndarray) -> np.ndarray:
    return _eig_apply(X, np.log)


def expm(S: np.ndarray) -> np.ndarray:
    return _eig_apply(S, np.exp)


def pinv_sqrtm(X: np.ndarray, cutoff: float = None):
    """
    Square root of the Moore-Penrose inverse of a PSD matrix.

    Returns (root, null_basis) where null_basis spans the eigenvectors whose
    eigenvalues fall below cutoff * lambda_max.
    """
    cutoff = Config.PINV_CUTOFF if cutoff is None else cutoff
    w, V = np.linalg.eigh(X)
    keep = w > cutoff * max(w[-1], 0.0)
    Vk = V[:, keep]
    root = (Vk / np.sqrt(w[keep])) @ Vk.T
    return (root + root.T) / 2, V[:, ~keep]


def log_spectrum(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """log of the spectrum of x^-1 y (coordinate ratios on the standard cone), ascending"""
    if x.ndim == 1:
        return np.sort(np.log(y / x))
    return np.log(linalg.eigh(y, x, eigvals_only=True))


# ============================================
# CONE POINTS
# ============================================

@dataclass(frozen=True, eq=False)
class ConePoint:
    """An element of R+^n (vector) or S_n+ (symmetric matrix)"""
    cone_kind: str
    data: np.ndarray
    classification: str
    n: int

    @property
    def is_interior(self) -> bool:
        return self.classification == INTERIOR

    @property
    def is_zero(self) -> bool:
        return self.classification == ZERO

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def scaled(self, c: float) -> 'ConePoint':
        return make_point(self.cone_kind, c * self.data)

    def normalized(self) -> 'ConePoint':
        if self.is_zero:
            raise DomainError("cannot normalize the zero cone point")
        return self.scaled(1.0 / self.norm())

    def to_list(self):
        return self.data.tolist()


def classify(kind: str, data: np.ndarray, threshold: float = None) -> str:
    threshold = Config.INTERIOR_THRESHOLD if threshold is None else threshold
    spectrum = data if kind == STANDARD else np.linalg.eigvalsh(data)
    top = float(np.max(spectrum)) if spectrum.size else 0.0
    if top <= 0.0:
        return ZERO
    if float(np.min(spectrum)) > threshold * top:
        return INTERIOR
    return BOUNDARY


def make_point(kind: str, data) -> ConePoint:
    """Validate, clamp and classify a cone point"""
    if kind not in CONE_KINDS:
        raise DomainError(f"unknown cone kind '{kind}'")
    arr = np.array(data, dtype=float)

    if kind == STANDARD:
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError(f"standard cone points are non-empty vectors, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("cone point has non-finite coordinates")
        if np.any(arr < -NEGATIVE_CLAMP):
            raise DomainError(f"negative coordinate {arr.min():.3g} is outside R+^{arr.size}")
        arr = np.clip(arr, 0.0, None)
        n = arr.size
    else:
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise DimensionError(f"PSD cone points are square matrices, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("cone point has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(arr))))
        if np.max(np.abs(arr - arr.T)) > NEGATIVE_CLAMP * scale:
            raise DomainError("matrix is not symmetric")
        arr = (arr + arr.T) / 2
        w = np.linalg.eigvalsh(arr)
        if w[0] < -PSD_NEGATIVE_TOL * max(np.linalg.norm(arr), 1e-300):
            raise DomainError(f"matrix has negative eigenvalue {w[0]:.3g}")
        n = arr.shape[0]

    arr.setflags(write=False)
    return ConePoint(kind, arr, classify(kind, arr), n)


def as_point(x: Union[ConePoint, Sequence, np.ndarray], kind: Optional[str] = None) -> ConePoint:
    if isinstance(x, ConePoint):
        if kind is not None and x.cone_kind != kind:
            raise DomainError(f"expected a {kind} cone point, got {x.cone_kind}")
        return x
    arr = np.asarray(x, dtype=float)
    if kind is None:
        kind = STANDARD if arr.ndim == 1 else PSD
    return make_point(kind, arr)


def canonical_point(kind: str, n: int) -> ConePoint:
    """The all-ones vector or the identity matrix"""
    return make_point(kind, np.ones(n) if kind == STANDARD else np.eye(n))


def random_interior(kind: str, n: int, rng: np.random.Generator,
                    spread: float = None) -> np.ndarray:
    """Random interior point with log-eigenvalues uniform in [-spread, spread]"""
    spread = Config.SAMPLE_SPREAD if spread is None else spread
    logs = rng.uniform(-spread, spread, n)
    if kind == STANDARD:
        return np.exp(logs)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    X = (Q * np.exp(logs)) @ Q.T
    return (X + X.T) / 2


def cone_leq(x: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> bool:
    """x <= y in the cone order, up to tol relative to the larger point"""
    scale = max(np.max(np.abs(x)), np.max(np.abs(y)), 1e-300)
    diff = y - x
    low = diff.min() if diff.ndim == 1 else np.linalg.eigvalsh(diff)[0]
    return bool(low >= -tol * scale)


# ============================================
# GAUGES
# ============================================

def _pair(x, y):
    px = x.data if isinstance(x, ConePoint) else np.asarray(x, dtype=float)
    py = y.data if isinstance(y, ConePoint) else np.asarray(y, dtype=float)
    if px.shape != py.shape:
        raise DimensionError(f"shape mismatch {px.shape} vs {py.shape}")
    return px, py


def gauge_M(x, y) -> float:
    """M(y/x): least lambda with lambda*x >= y; inf when nothing dominates"""
    px, py = _pair(x, y)
    if not px.any() or not py.any():
        raise DomainError("gauge of the zero cone point")

    if px.ndim == 1:
        support = px > 0
        if np.any(py[~support] > 0):
            return float('inf')
        return float(np.max(py[support] / px[support]))

    root, null = pinv_sqrtm(px)
    if null.shape[1]:
        leak = np.linalg.norm(null.T @ py @ null)
        if leak > Config.PINV_CUTOFF * np.linalg.norm(py):
            return float('inf')
    return float(np.linalg.eigvalsh(root @ py @ root)[-1])


def gauge_m(x, z) -> float:
    """m(z/x): largest lambda with z >= lambda*x; 0 when none is positive"""
    top = gauge_M(z, x)
    if np.isinf(top):
        return 0.0
    return 1.0 / top


# ============================================
# EXTREME RAYS
# ============================================

@dataclass(frozen=True, eq=False)
class ExtremeRay:
    """Representative of an extreme ray: e_i on R+^n, unit v (for v v^T) on S_n+"""
    cone_kind: str
    vector: np.ndarray
    index: Optional[int] = None

    def evaluate(self, y) -> float:
        """<w, y>"""
        data = y.data if isinstance(y, ConePoint) else np.asarray(y, dtype=float)
        if self.cone_kind == STANDARD:
            return float(data[self.index])
        return float(self.vector @ data @ self.vector)

    def projector(self) -> np.ndarray:
        return np.outer(self.vector, self.vector)

    def to_dict(self) -> dict:
        if self.cone_kind == STANDARD:
            return {'cone': STANDARD, 'index': self.index}
        return {'cone': PSD, 'vector': self.vector.tolist()}


def _canonical_unit(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    nonzero = np.flatnonzero(np.abs(v) > 1e-12)
    if nonzero.size and v[nonzero[0]] < 0:
        v = -v
    return v


def _eigenspace_representative(W: np.ndarray, top: bool) -> np.ndarray:
    """Deterministic unit vector of the extreme eigenspace of W"""
    w, V = np.linalg.eigh(W)
    target = w[-1] if top else w[0]
    scale = max(abs(w[0]), abs(w[-1]), 1e-300)
    block = V[:, np.abs(w - target) <= 1e-12 * scale]
    if block.shape[1] == 1:
        return block[:, 0]
    # Tie: project e_1, e_2, ... onto the eigenspace and take the first that survives
    for i in range(W.shape[0]):
        candidate = block @ block[i, :]
        if np.linalg.norm(candidate) > 1e-8:
            return candidate
    return block[:, 0]


def _extreme_ray(x, y, top: bool) -> ExtremeRay:
    px, py = _pair(x, y)
    kind = STANDARD if px.ndim == 1 else PSD
    if classify(kind, px) != INTERIOR:
        raise DomainError("extreme-ray maximizers need an interior base point")
    if not py.any():
        raise DomainError("extreme ray for the zero cone point")

    if kind == STANDARD:
        ratios = py / px
        i = int(np.argmax(ratios) if top else np.argmin(ratios))
        e = np.zeros(px.size)
        e[i] = 1.0
        return ExtremeRay(STANDARD, e, i)

    root = invsqrtm(px)
    v = _eigenspace_representative(root @ py @ root, top)
    return ExtremeRay(PSD, _canonical_unit(root @ v))


def maximizing_extreme_ray(x, y) -> ExtremeRay:
    """Extreme ray w with <w,y>/<w,x> = M(y/x)"""
    return _extreme_ray(x, y, top=True)


def minimizing_extreme_ray(x, y) -> ExtremeRay:
    """Extreme ray w with <w,y>/<w,x> = m(y/x)"""
    return _extreme_ray(x, y, top=False)


def ray_ratio(w: ExtremeRay, x, y) -> float:
    """<w,y>/<w,x>, or nan when <w,x> is numerically zero"""
    wx = w.evaluate(x)
    px, py = _pair(x, y)
    if abs(wx) <= 1e-12 * np.linalg.norm(px):
        return float('nan')
    return w.evaluate(y) / wx


def random_extreme_ray(kind: str, n: int, rng: np.random.Generator) -> ExtremeRay:
    if kind == STANDARD:
        i = int(rng.integers(n))
        e = np.zeros(n)
        e[i] = 1.0
        return ExtremeRay(STANDARD, e, i)
    return ExtremeRay(PSD, _canonical_unit(rng.standard_normal(n)))


# ============================================
# MARTIN FUNCTIONS
# ============================================

MARTIN_VARIANTS = ('rfunk', 'rfunk-plus')


def _funk(variant: str, x, u) -> float:
    value = np.log(gauge_M(x, u))
    return max(value, 0.0) if variant == 'rfunk-plus' else float(value)


@dataclass(frozen=True, eq=False)
class ConeMartinFunction:
    """h(x) = -delta(x,u) + delta(basepoint,u) for the RFunk family"""
    u: ConePoint
    basepoint: ConePoint
    variant: str = 'rfunk'
    offset: float = field(init=False)

    def __post_init__(self):
        if self.variant not in MARTIN_VARIANTS:
            raise DomainError(f"unknown Martin variant '{self.variant}'")
        if self.u.is_zero:
            raise DomainError("Martin functions need a nonzero u")
        if not self.basepoint.is_interior:
            raise DomainError("Martin basepoint must be interior")
        if self.u.cone_kind != self.basepoint.cone_kind or self.u.n != self.basepoint.n:
            raise DimensionError("u and basepoint live in different cones")
        object.__setattr__(self, 'offset', _funk(self.variant, self.basepoint, self.u))

    @property
    def is_horofunction(self) -> bool:
        return self.variant == 'rfunk' and not self.u.is_interior

    @property
    def kind(self) -> str:
        if self.u.is_interior:
            return 'internal'
        return 'horofunction' if self.variant == 'rfunk' else 'boundary'

    def __call__(self, x) -> float:
        return martin_value(self, x)


def martin_value(h: ConeMartinFunction, x) -> float:
    point = as_point(x, h.u.cone_kind)
    if not point.is_interior:
        raise DomainError("Martin functions are evaluated at interior points")
    return -_funk(h.variant, point, h.u) + h.offset


def duality_sandwich(x, z, rays: Sequence[ExtremeRay]) -> float:
    """
    Worst violation of m(z/x) <= <w,z>/<w,x> <= M(z/x) over the given rays.

    Rays with <w,x> numerically zero are skipped. Returns 0 when none violate.
    """
    low, high = gauge_m(x, z), gauge_M(x, z)
    worst = 0.0
    for w in rays:
        ratio = ray_ratio(w, x, z)
        if np.isnan(ratio):
            continue
        scale = max(1.0, abs(high))
        worst = max(worst, (low - ratio) / scale, (ratio - high) / scale)
    return worst
