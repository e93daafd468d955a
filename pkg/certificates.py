"""
Certificates
============
Primal (T(y) <= mu y) and dual (T-hat_r(u) >= mu u) maximin certificates,
extreme-ray pumping and Kohlberg-Neyman evaluation forms
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

import cone_geometry as cg
import hemi_core as hc
import operator_library as ol
from config import Config
from errors import DomainError

logger = logging.getLogger(__name__)

# Recession power iteration steps used to generate extra dual candidates
POWER_STEPS = 50

# Coordinates (eigenvalues) below this fraction of the largest are zeroed in boundary candidates
BOUNDARY_CLEAN = 1e-8


class Status(str, Enum):
    VERIFIED = 'verified'
    FALSIFIED = 'falsified'
    INCONCLUSIVE = 'inconclusive'


def _log(mu: float) -> float:
    return float(np.log(mu)) if mu > 0 else float('-inf')


# ============================================
# PRIMAL
# ============================================

@dataclass
class PrimalCertificate:
    y: np.ndarray
    mu: float
    status: Status
    gauge: float
    reason: str = ''

    @property
    def verified(self) -> bool:
        return self.status == Status.VERIFIED

    @property
    def slack(self) -> float:
        return self.mu - self.gauge

    @property
    def log_bound(self) -> float:
        return _log(self.mu)

    def to_dict(self) -> dict:
        return {
            'kind': 'primal',
            'y': self.y.tolist(),
            'mu': self.mu,
            'log_mu': self.log_bound,
            'gauge': self.gauge,
            'slack': self.slack,
            'status': self.status.value,
            'reason': self.reason,
        }


def verify_primal(T: ol.Operator, y, mu: float, tol: float = None) -> PrimalCertificate:
    """Verified iff M(T(y)/y) <= mu (1 + tol)"""
    tol = Config.CERT_TOL if tol is None else tol
    if not mu > 0:
        raise DomainError(f"primal certificates need mu > 0, got {mu}")
    if not T.is_cone:
        raise DomainError(f"primal certificates need a cone operator; {T.tag} acts on {T.space_kind}")
    point = cg.as_point(y, T.cone_kind)
    image = ol.apply(T, point.data)
    gauge = cg.gauge_M(point.data, image)
    if gauge <= mu * (1.0 + tol):
        return PrimalCertificate(point.data, mu, Status.VERIFIED, gauge)
    return PrimalCertificate(point.data, mu, Status.FALSIFIED, gauge,
                             f"M(T(y)/y) = {gauge:.17g} exceeds mu = {mu:.17g}")


def search_primal(T: ol.Operator, candidates: Sequence[np.ndarray], tol: float = None) -> Optional[PrimalCertificate]:
    """Smallest verified mu = M(T(y)/y) over interior candidates"""
    best = None
    for y in candidates:
        point = cg.as_point(y, T.cone_kind)
        if not point.is_interior:
            continue
        try:
            mu = cg.gauge_M(point.data, ol.apply(T, point.data))
        except DomainError:
            continue
        if np.isfinite(mu) and mu > 0 and (best is None or mu < best.mu):
            best = verify_primal(T, point.data, mu, tol)
    return best


# ============================================
# DUAL
# ============================================

@dataclass
class DualCertificate:
    u: np.ndarray
    mu: float
    status: Status
    gauge: float = 0.0
    reason: str = ''
    recession_status: str = ''
    pumping: List[float] = field(default_factory=list)
    on_boundary: bool = False
    martin_kind: str = ''

    @property
    def verified(self) -> bool:
        return self.status == Status.VERIFIED

    @property
    def log_bound(self) -> float:
        return _log(self.mu)

    def to_dict(self) -> dict:
        return {
            'kind': 'dual',
            'u': self.u.tolist(),
            'mu': self.mu,
            'log_mu': self.log_bound,
            'gauge': self.gauge,
            'status': self.status.value,
            'reason': self.reason,
            'recession': self.recession_status,
            'pumping_log_gauges': list(self.pumping),
            'on_boundary': self.on_boundary,
            'martin_kind': self.martin_kind,
        }


def _martin_kind(T: ol.Operator, u: cg.ConePoint) -> str:
    base = cg.canonical_point(T.cone_kind, T.dimension)
    return cg.ConeMartinFunction(u, base, 'rfunk').kind


def _pumping(T: ol.Operator, u: np.ndarray, mu: float, steps: int, tol: float):
    """log m(T-hat_r^k(u)/u) against k log mu for k <= steps; (logs, failure reason or '')"""
    log_mu = _log(mu)
    w, log_scale, logs = u, 0.0, []
    for k in range(1, steps + 1):
        rec = ol.recession_map(T, w)
        if not rec.converged:
            return logs, f"recession map did not settle at pumping step {k} ({rec.status})"
        norm = np.linalg.norm(rec.value)
        if norm <= 0:
            return logs, f"recession orbit reached 0 at pumping step {k}"
        w, log_scale = rec.value / norm, log_scale + float(np.log(norm))
        value = log_scale + _log(cg.gauge_m(u, w))
        logs.append(value)
        if value < k * log_mu - tol * k * max(1.0, abs(log_mu)):
            return logs, f"pumping fails at k={k}: {value:.17g} < {k * log_mu:.17g}"
    return logs, ''


def verify_dual(T: ol.Operator, u, mu: float, tol: float = None, pumping_steps: int = None) -> DualCertificate:
    """Verified iff m(T-hat_r(u)/u) >= mu (1 - tol) and the k-step pumping check holds"""
    tol = Config.CERT_TOL if tol is None else tol
    pumping_steps = Config.PUMPING_STEPS if pumping_steps is None else pumping_steps
    if not mu > 0:
        raise DomainError(f"dual certificates need mu > 0, got {mu}")
    if not T.is_cone:
        raise DomainError(f"dual certificates need a cone operator; {T.tag} acts on {T.space_kind}")
    point = cg.as_point(u, T.cone_kind)
    if point.is_zero:
        raise DomainError("dual certificates need a nonzero u")
    unit = point.data / point.norm()
    info = dict(on_boundary=not point.is_interior, martin_kind=_martin_kind(T, point))

    rec = ol.recession_map(T, unit)
    if not rec.converged:
        return DualCertificate(point.data, mu, Status.INCONCLUSIVE, reason=f"recession map: {rec.status}",
                               recession_status=rec.status, **info)
    gauge = cg.gauge_m(unit, rec.value) if rec.value.any() else 0.0
    if gauge < mu * (1.0 - tol):
        return DualCertificate(point.data, mu, Status.FALSIFIED, gauge,
                               f"m(T_r(u)/u) = {gauge:.17g} is below mu = {mu:.17g}", rec.status, **info)

    logs, failure = _pumping(T, unit, mu, pumping_steps, tol)
    if failure:
        logger.warning(f"⚠️ dual certificate one-step check passed but {failure}")
        return DualCertificate(point.data, mu, Status.INCONCLUSIVE, gauge, failure, rec.status, logs, **info)
    return DualCertificate(point.data, mu, Status.VERIFIED, gauge, '', rec.status, logs, **info)


def _boundary_cleaned(kind: str, u: np.ndarray) -> Optional[np.ndarray]:
    """u with tiny coordinates (eigenvalues) zeroed, or None when nothing changes"""
    if kind == cg.STANDARD:
        cut = u < BOUNDARY_CLEAN * np.max(u)
        if not cut.any():
            return None
        out = np.where(cut, 0.0, u)
        return out / np.linalg.norm(out)
    w, V = np.linalg.eigh(u)
    cut = w < BOUNDARY_CLEAN * w[-1]
    if not cut.any():
        return None
    out = (V * np.where(cut, 0.0, w)) @ V.T
    out = (out + out.T) / 2
    return out / np.linalg.norm(out)


def _power_candidate(T: ol.Operator, u: np.ndarray) -> Optional[np.ndarray]:
    for _ in range(POWER_STEPS):
        rec = ol.recession_map(T, u)
        if not rec.converged or not rec.value.any():
            return None
        u = rec.value / np.linalg.norm(rec.value)
    return u


def dual_candidates(T: ol.Operator, seeds: Sequence = (), trace: ol.OrbitTrace = None,
                    directions: Sequence = ()) -> List[np.ndarray]:
    """Unit-norm candidates: orbit snapshots, y_alpha directions, seeds, boundary-cleaned and power-iterated"""
    raw = []
    if trace is not None:
        raw.extend(point for _, point in trace.snapshots)
    raw.extend(d for d in directions if d is not None)
    raw.extend(seeds)
    raw.append(cg.canonical_point(T.cone_kind, T.dimension).data)

    base = []
    for u in raw:
        point = cg.as_point(u, T.cone_kind)
        if not point.is_zero:
            base.append(point.data / point.norm())
    extra = [c for c in (_boundary_cleaned(T.cone_kind, u) for u in base) if c is not None]
    for start in (base[-1], base[0]):
        power = _power_candidate(T, start)
        if power is not None:
            extra.append(power)
    return base + extra


def _candidate_mu(T: ol.Operator, u: np.ndarray) -> float:
    try:
        rec = ol.recession_map(T, u)
    except DomainError:
        return 0.0
    if not rec.converged or not rec.value.any():
        return 0.0
    return cg.gauge_m(u, rec.value)


def search_dual(T: ol.Operator, seeds: Sequence = (), trace: ol.OrbitTrace = None,
                directions: Sequence = ()) -> DualCertificate:
    """Best verified mu = m(T-hat_r(u)/u) over the candidate set; ties go to the lowest index"""
    if not T.is_cone:
        return DualCertificate(np.zeros(T.dimension), 0.0, Status.INCONCLUSIVE,
                               reason=f"{T.tag} is not a cone operator: trivial bound, use game or form certificates")
    candidates = dual_candidates(T, seeds, trace, directions)
    with ThreadPoolExecutor(max_workers=Config.THREADS) as pool:
        mus = list(pool.map(lambda u: _candidate_mu(T, u), candidates))
    logger.debug(f"search_dual[{T.tag}]: {len(candidates)} candidates, best mu {max(mus, default=0.0):.12g}")

    order = [i for i in np.argsort(-np.array(mus), kind='stable') if mus[i] > 0]
    for i in order:
        cert = verify_dual(T, candidates[i], mus[i])
        if cert.verified:
            return cert
    return DualCertificate(candidates[0] if candidates else np.zeros(T.dimension), 0.0, Status.INCONCLUSIVE,
                           reason="no candidate gives a positive verified mu: trivial bound")


def weak_duality_gap(primal: PrimalCertificate, dual: DualCertificate) -> float:
    """log mu_dual - log mu_primal; must not exceed the weak-duality tolerance"""
    return dual.log_bound - primal.log_bound


# ============================================
# EVALUATION FORMS
# ============================================

@dataclass
class EvalFormCertificate:
    kind: str
    payload: dict
    rate: float
    horizon: int
    status: Status
    worst_margin: float
    tol: float
    reason: str = ''

    @property
    def verified(self) -> bool:
        return self.status == Status.VERIFIED

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'payload': self.payload,
            'rate': self.rate,
            'horizon': self.horizon,
            'status': self.status.value,
            'worst_margin': self.worst_margin,
            'tol': self.tol,
            'reason': self.reason,
        }


FORM_NORMS = ('sup', 'top', 'bottom', 'custom')


def _orbit(T: ol.Operator, x: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K + 1, x.size))
    out[0] = x
    for k in range(1, K + 1):
        out[k] = ol.apply(T, out[k - 1])
    return out


def _form_payload(norm_kind: str, phi: np.ndarray, index: int) -> dict:
    if norm_kind == 'top':
        return {'omega': index, 'form': phi.tolist()}
    return {'form': phi.tolist(), 'index': index}


def kohlberg_neyman_form(T: ol.Operator, norm_kind: str, x, rate: float, K: int,
                         forms=None, tol: float = None) -> EvalFormCertificate:
    """
    Search the extreme dual forms for phi(T^k x) >= phi(x) + k rate, k <= K.

    sup: +e_1..+e_n then -e_1..-e_n; top: e_i (coordinate omega); bottom: -e_i;
    custom: the rows of forms. Returns the first verified form or the best violator.
    """
    if norm_kind not in FORM_NORMS:
        raise DomainError(f"norm_kind must be one of {FORM_NORMS}")
    if T.space_kind != hc.VECTOR_SPACE:
        raise DomainError(f"evaluation forms need a real vector space; {T.tag} acts on {T.space_kind}")
    x = np.asarray(x, dtype=float)
    tol = 1e-9 * K * max(1.0, abs(rate)) if tol is None else tol
    if norm_kind == 'custom':
        E = hc.HemiNorm('custom-finite-E', T.dimension, forms).forms()
    else:
        E = hc.HemiNorm(norm_kind, T.dimension).forms()

    values = _orbit(T, x, K) @ E.T
    margins = values - values[0] - np.arange(K + 1)[:, None] * rate
    worst = np.min(margins, axis=0)
    kind = {'top': 'coordinate'}.get(norm_kind, 'dual-ball')
    passing = np.flatnonzero(worst >= -tol)
    if passing.size:
        i = int(passing[0])
        return EvalFormCertificate(kind, _form_payload(norm_kind, E[i], i), rate, K, Status.VERIFIED,
                                   float(worst[i]), tol)
    i = int(np.argmax(worst))
    return EvalFormCertificate(kind, _form_payload(norm_kind, E[i], i), rate, K, Status.FALSIFIED,
                               float(worst[i]), tol, f"best form misses by {-worst[i]:.6g}")


def _ray_candidates(T: ol.Operator, start: np.ndarray, probes: Sequence[np.ndarray]) -> List[cg.ExtremeRay]:
    n = T.dimension
    if T.cone_kind == cg.STANDARD:
        rays = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            rays.append(cg.ExtremeRay(cg.STANDARD, e, i))
        return rays
    rays = [cg.maximizing_extreme_ray(start, point) for point in probes]
    rays.extend(cg.ExtremeRay(cg.PSD, v) for v in np.eye(n))
    return rays


def extreme_ray_form(T: ol.Operator, x, rate: float, K: int, lower_bound: float = None,
                     tol: float = None) -> EvalFormCertificate:
    """log <w, T^k x> >= log <w, x> + k rate for an extreme ray w, k <= K"""
    if not T.is_cone:
        raise DomainError(f"extreme-ray forms need a cone operator; {T.tag} acts on {T.space_kind}")
    tol = 1e-9 * K * max(1.0, abs(rate)) if tol is None else tol
    if not T.homogeneous and not (lower_bound is not None and lower_bound > 0):
        return EvalFormCertificate('extreme-ray', {}, rate, K, Status.INCONCLUSIVE, float('-inf'), tol,
                                   "sub-homogeneous operator: needs a positive lower bound on the rate")
    x = cg.as_point(x, T.cone_kind).data
    points, logs = [x / np.linalg.norm(x)], [float(np.log(np.linalg.norm(x)))]
    if T.homogeneous:
        for k, y, l in ol.iterate_normalized(T, x, K):
            if k:
                points.append(y)
                logs.append(l)
    else:
        y = x
        for k in range(1, K + 1):
            y = ol.apply(T, y)
            if cg.classify(T.cone_kind, y) != cg.INTERIOR:
                return EvalFormCertificate('extreme-ray', {}, rate, K, Status.INCONCLUSIVE, float('-inf'), tol,
                                           f"orbit left the numerical interior at k={k}; try a shorter horizon")
            norm = np.linalg.norm(y)
            points.append(y / norm)
            logs.append(float(np.log(norm)))
    probes = [points[k] for k in range(1, K + 1) if k & (k - 1) == 0 or k == K]

    best = None
    for ray in _ray_candidates(T, x, probes):
        ray_values = np.array([ray.evaluate(p) for p in points])
        if np.any(ray_values <= 0):
            continue
        series = np.log(ray_values) + np.array(logs)
        margin = float(np.min(series - series[0] - np.arange(K + 1) * rate))
        if best is None or margin > best[0]:
            best = (margin, ray)
        if margin >= -tol:
            return EvalFormCertificate('extreme-ray', ray.to_dict(), rate, K, Status.VERIFIED, margin, tol)
    if best is None:
        return EvalFormCertificate('extreme-ray', {}, rate, K, Status.INCONCLUSIVE, float('-inf'), tol,
                                   "no extreme ray stays positive along the orbit")
    return EvalFormCertificate('extreme-ray', best[1].to_dict(), rate, K, Status.FALSIFIED, best[0], tol,
                               f"best ray misses by {-best[0]:.6g}")
