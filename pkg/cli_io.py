"""
CLI I/O
=======
Problem files, rate reports and the horoball section sampler
"""

import csv
import io
import json
import logging
import re
from datetime import datetime
from typing import Dict, List, Optional, Tuple

import numpy as np
from cryptography.hazmat.primitives import hashes
from jsonschema import Draft7Validator
from jsonschema.exceptions import best_match

import certificates as cert
import cone_geometry as cg
import escape_estimation as ee
import hemi_core as hc
import operator_library as ol
from config import Config
from errors import DomainError, PreconditionError, ProblemError
from stochastic_games import GameSpec, game_rate

logger = logging.getLogger(__name__)

COMMANDS = ('rate', 'certify', 'check-space', 'game', 'horoballs')
CHECKS = ('triangle', 'geodesic', 'star-shaped', 'non-expansive')
NOT_STAR_SHAPED = "not star-shaped: maximin not applicable"

# Lower may exceed upper by this much before an interval counts as empty
INTERVAL_TOL = 1e-8


# ============================================
# SCHEMA
# ============================================

_NUMBER = {'type': 'number'}
_ENTRY = {'anyOf': [{'type': 'number'}, {'enum': ['-inf']}]}
_MATRIX = {'type': 'array', 'minItems': 1, 'items': {'type': 'array', 'minItems': 1, 'items': _NUMBER}}
_POINT = {'type': 'array', 'minItems': 1, 'items': {'anyOf': [_NUMBER, {'type': 'array', 'items': _NUMBER}]}}


def _operator_case(tag: str, required: List[str], properties: dict) -> dict:
    return {
        'if': {'properties': {'type': {'const': tag}}},
        'then': {
            'required': ['type'] + required,
            'properties': dict(type={'const': tag}, **properties),
            'additionalProperties': False,
        },
    }


GAME_SCHEMA = {
    'type': 'object',
    'required': ['payoff', 'transition'],
    'properties': {
        'states': {'type': 'integer', 'minimum': 1},
        'actions_a': {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}},
        'actions_b': {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}},
        'payoff': {'type': 'array', 'minItems': 1, 'items': _MATRIX},
        'transition': {'type': 'array', 'minItems': 1},
    },
    'additionalProperties': False,
}

PROBLEM_SCHEMA = {
    '$schema': 'http://json-schema.org/draft-07/schema#',
    'definitions': {
        'operator': {
            'type': 'object',
            'required': ['type'],
            'properties': {'type': {'enum': ['nonneg-matrix', 'max-plus', 'shapley', 'riccati', 'translation',
                                             'torus-shift', 'identity', 'composite']}},
            'allOf': [
                _operator_case('nonneg-matrix', ['matrix'], {'matrix': _MATRIX}),
                _operator_case('max-plus', ['matrix'], {'matrix': {
                    'type': 'array', 'minItems': 1,
                    'items': {'type': 'array', 'minItems': 1, 'items': _ENTRY}}}),
                _operator_case('shapley', ['game'], {'game': GAME_SCHEMA}),
                _operator_case('riccati', ['A', 'B', 'M'], {'A': _MATRIX, 'B': _MATRIX, 'M': _MATRIX}),
                _operator_case('translation', ['c'], {'c': {'type': 'array', 'minItems': 1, 'items': _NUMBER},
                                                      'norm': {'enum': sorted(ol.NORM_KINDS)}}),
                _operator_case('torus-shift', ['alpha'], {'alpha': _NUMBER, 't_step': _NUMBER}),
                _operator_case('identity', ['space', 'dimension'], {'space': {'enum': list(hc.SPACE_KINDS)},
                                                                   'dimension': {'type': 'integer', 'minimum': 1}}),
                _operator_case('composite', ['parts'], {'parts': {'type': 'array', 'minItems': 1,
                                                                  'items': {'$ref': '#/definitions/operator'}}}),
            ],
        },
    },
    'type': 'object',
    'properties': {
        'name': {'type': 'string'},
        'description': {'type': 'string'},
        'command': {'enum': list(COMMANDS)},
        'operator': {'$ref': '#/definitions/operator'},
        'game': GAME_SCHEMA,
        'metric': {
            'type': 'object',
            'properties': {
                'kind': {'enum': list(hc.METRIC_KINDS)},
                'nu': {'enum': sorted(hc.NU_SPECS)},
                'forms': _MATRIX,
            },
            'additionalProperties': False,
        },
        'start': _POINT,
        'starts': {'type': 'array', 'items': _POINT},
        'horizon': {'type': 'integer', 'minimum': 1},
        'seed': {'type': 'integer', 'minimum': 0},
        'tol': {'type': 'number', 'exclusiveMinimum': 0},
        'samples': {'type': 'integer', 'minimum': 1},
        'alpha_levels': {'type': 'integer', 'minimum': 1},
        'stop_tol': {'type': 'number', 'exclusiveMinimum': 0},
        'geodesic': {
            'type': 'object',
            'required': ['kind'],
            'properties': {'kind': {'enum': list(hc.GEODESIC_KINDS)}, 'center': _POINT},
            'additionalProperties': False,
        },
        'seeds': {'type': 'array', 'items': _POINT},
        'certificates': {
            'type': 'object',
            'properties': {
                'primal': {'type': 'array', 'items': {
                    'type': 'object', 'required': ['y', 'mu'],
                    'properties': {'y': _POINT, 'mu': _NUMBER}, 'additionalProperties': False}},
                'dual': {'type': 'array', 'items': {
                    'type': 'object', 'required': ['u', 'mu'],
                    'properties': {'u': _POINT, 'mu': _NUMBER}, 'additionalProperties': False}},
                'forms': {'type': 'array', 'items': {
                    'type': 'object', 'required': ['norm', 'rate'],
                    'properties': {'norm': {'enum': list(cert.FORM_NORMS)}, 'rate': _NUMBER,
                                   'horizon': {'type': 'integer', 'minimum': 1}, 'forms': _MATRIX},
                    'additionalProperties': False}},
            },
            'additionalProperties': False,
        },
        'checks': {'type': 'array', 'items': {'enum': list(CHECKS)}},
        'levels': {'type': 'array', 'minItems': 1, 'items': _NUMBER},
    },
    'additionalProperties': False,
}

_VALIDATOR = Draft7Validator(PROBLEM_SCHEMA)


def _locate(text: str, path: List) -> Optional[int]:
    """Line of the last key on path found in order through the text"""
    if text is None:
        return None
    position, found = 0, False
    for key in path:
        if isinstance(key, str):
            index = text.find(f'"{key}"', position)
            if index >= 0:
                position, found = index, True
    return text.count('\n', 0, position) + 1 if found else None


def validate_problem(problem: dict, text: str = None):
    """Raise ProblemError naming the field (and line when text is given) of the first schema error"""
    error = best_match(_VALIDATOR.iter_errors(problem))
    if error is None:
        return
    path = list(error.absolute_path)
    unexpected = re.search(r"'([^']+)' was unexpected", error.message)
    if unexpected:
        path.append(unexpected.group(1))
    field = '.'.join(str(p) for p in path) or None
    raise ProblemError(error.message, field=field, line=_locate(text, path))


def fill_defaults(problem: dict, command: str = None) -> dict:
    """Echo every default explicitly so the report records what was run"""
    out = dict(problem)
    command = command or out.get('command')
    if command is not None:
        out['command'] = command
    out.setdefault('horizon', Config.GAME_HORIZON if command == 'game' else Config.DEFAULT_HORIZON)
    out.setdefault('seed', Config.DEFAULT_SEED)
    out.setdefault('tol', Config.CERT_TOL)
    out.setdefault('samples', Config.HOROBALL_SAMPLES if command == 'horoballs' else Config.DEFAULT_SAMPLES)
    out.setdefault('alpha_levels', Config.CLI_ALPHA_LEVELS)
    out.setdefault('stop_tol', Config.FIXED_POINT_TOL)
    return out


def parse_problem(text: str, command: str = None) -> dict:
    """JSON text -> validated problem with defaults filled in"""
    try:
        problem = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(problem, dict):
        raise ProblemError("a problem file is a JSON object", line=1)
    validate_problem(problem, text)
    return fill_defaults(problem, command)


def apply_overrides(problem: dict, seed: int = None, tol: float = None, horizon: int = None) -> dict:
    out = dict(problem)
    for key, value in (('seed', seed), ('tol', tol), ('horizon', horizon)):
        if value is not None:
            out[key] = value
    validate_problem(out)
    return out


# ============================================
# ENCODING
# ============================================

def _number(value: float) -> str:
    if np.isnan(value):
        return '"nan"'
    if np.isinf(value):
        return '"inf"' if value > 0 else '"-inf"'
    if float(value).is_integer() and abs(value) < 1e16:
        return f"{value:.1f}"
    return format(value, '.17g')


def _emit(value, indent: int, level: int) -> str:
    pad, inner = ' ' * (indent * level), ' ' * (indent * (level + 1))
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if value is None:
        return 'null'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _number(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return _emit(value.tolist(), indent, level)
    if isinstance(value, dict):
        if not value:
            return '{}'
        items = [f"{inner}{json.dumps(str(k))}: {_emit(v, indent, level + 1)}" for k, v in value.items()]
        return '{\n' + ',\n'.join(items) + '\n' + pad + '}'
    if isinstance(value, (list, tuple)):
        if not value:
            return '[]'
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in value):
            return '[' + ', '.join(_emit(v, indent, level + 1) for v in value) + ']'
        items = [inner + _emit(v, indent, level + 1) for v in value]
        return '[\n' + ',\n'.join(items) + '\n' + pad + ']'
    raise TypeError(f"cannot encode {type(value).__name__}")


def dumps(value, indent: int = 2) -> str:
    """JSON with 17 significant digits per float; non-finite floats become strings"""
    return _emit(value, indent, 0)


def emit_problem(problem: dict) -> str:
    return dumps(problem) + '\n'


def emit_report(report: dict) -> str:
    return dumps(report) + '\n'


def fingerprint(problem: dict) -> str:
    """SHA-256 of the canonical (sorted, compact) problem JSON"""
    digest = hashes.Hash(hashes.SHA256())
    digest.update(json.dumps(problem, sort_keys=True, separators=(',', ':')).encode('utf-8'))
    return digest.finalize().hex()


# ============================================
# BUILDING
# ============================================

def _matrix(rows) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in rows], dtype=float)


def build_operator(spec: dict) -> ol.Operator:
    kind = spec['type']
    if kind == 'nonneg-matrix':
        return ol.NonnegMatrix(spec['matrix'])
    if kind == 'max-plus':
        return ol.MaxPlus(_matrix(spec['matrix']))
    if kind == 'shapley':
        return ol.Shapley(GameSpec.from_dict(spec['game']))
    if kind == 'riccati':
        return ol.Riccati(spec['A'], spec['B'], spec['M'])
    if kind == 'translation':
        return ol.Translation(spec['c'], spec.get('norm', 'sup'))
    if kind == 'torus-shift':
        return ol.TorusShift(spec['alpha'], spec.get('t_step', 1.0))
    if kind == 'identity':
        return ol.Identity(spec['space'], spec['dimension'])
    return ol.Composite([build_operator(part) for part in spec['parts']])


def build_metric(T: ol.Operator, spec: dict = None) -> hc.HemiMetric:
    spec = spec or {}
    kind = spec.get('kind', T.natural_metrics[0])
    norm = None
    if 'forms' in spec:
        norm = hc.HemiNorm('custom-finite-E', T.dimension, spec['forms'])
    return hc.HemiMetric(T.space_kind, kind, T.dimension, nu_spec=spec.get('nu'), norm=norm)


def _operator_of(problem: dict) -> ol.Operator:
    if 'operator' in problem:
        return build_operator(problem['operator'])
    if 'game' in problem:
        return ol.Shapley(GameSpec.from_dict(problem['game']))
    raise ProblemError("the problem names no operator", field='operator')


def _start(problem: dict, m: hc.HemiMetric) -> np.ndarray:
    return m.validate(problem['start']) if 'start' in problem else m.canonical_point()


def _header(command: str, problem: dict) -> dict:
    return {
        'tool': Config.TOOL_NAME,
        'version': Config.TOOL_VERSION,
        'command': command,
        'timestamp': datetime.now().isoformat(),
        'fingerprint': fingerprint(problem),
        'seed': problem['seed'],
        'problem': problem,
    }


# ============================================
# RATE
# ============================================

# which growth rate each cone metric measures, in terms of the primal (mu, nu) and dual mu_d
_CONE_SHAPES = {'rfunk': 'rfunk', 'rfunk-plus': 'rfunk-plus', 'thompson': 'thompson', 'hilbert': 'hilbert'}
_NU_SHAPES = {'max': 'rfunk', 'max-plus': 'rfunk-plus', 'max-abs': 'thompson', 'spread': 'hilbert', 'l2': 'l2'}


def _shape(m: hc.HemiMetric) -> str:
    return _NU_SHAPES[m.nu_spec] if m.metric_kind == 'delta-nu' else _CONE_SHAPES[m.metric_kind]


def primal_upper(T: ol.Operator, m: hc.HemiMetric, y: np.ndarray, mu: float) -> float:
    """
    Upper bound on the rate in m from a point with T(y) <= mu y.

    The lower gauge nu = m(T(y)/y) bounds the reverse growth. Non-homogeneous
    (sub-homogeneous) maps only propagate mu >= 1 and nu <= 1.
    """
    nu = cg.gauge_m(y, ol.apply(T, y))
    if not T.homogeneous:
        mu, nu = max(mu, 1.0), min(nu, 1.0)
    high = np.log(mu)
    low = np.log(nu) if nu > 0 else float('-inf')
    shape = _shape(m)
    if shape == 'rfunk':
        return float(high)
    if shape == 'rfunk-plus':
        return float(max(high, 0.0))
    if shape == 'thompson':
        return float(max(high, -low))
    if shape == 'hilbert':
        return float(high - low)
    return float(np.sqrt(T.dimension) * max(high, -low))


def dual_lower(m: hc.HemiMetric, mu_d: float) -> float:
    """Lower bound on the rate in m from T-hat_r(u) >= mu_d u"""
    shape = _shape(m)
    if shape == 'hilbert':
        return 0.0
    log_mu = np.log(mu_d) if mu_d > 0 else float('-inf')
    if shape == 'rfunk':
        return float(log_mu)
    return float(max(log_mu, 0.0))


def _primal_candidates(T: ol.Operator, trace: ol.OrbitTrace, path: Optional[ee.YAlphaPath],
                       refined: Optional[np.ndarray]) -> List[np.ndarray]:
    base = cg.canonical_point(T.cone_kind, T.dimension).data
    out = [base, trace.last_point] + [point for _, point in trace.snapshots]
    if not T.homogeneous:
        out.extend(s * base for s in (1e2, 1e4, 1e6))
    if path is not None:
        out.extend(path.points)
    if refined is not None:
        out.append(refined)
    return out


def _best_primal(T: ol.Operator, m: hc.HemiMetric, candidates: List[np.ndarray], tol: float):
    best, best_upper = None, float('inf')
    for y in candidates:
        try:
            point = cg.as_point(y, T.cone_kind)
            if not point.is_interior:
                continue
            mu = cg.gauge_M(point.data, ol.apply(T, point.data))
            if not (np.isfinite(mu) and mu > 0):
                continue
            upper = primal_upper(T, m, point.data, mu)
        except DomainError:
            continue
        if upper < best_upper:
            best, best_upper = cert.verify_primal(T, point.data, mu, tol), upper
    return best, best_upper


def _run_path(T, m, problem, notices) -> Tuple[Optional[ee.YAlphaPath], Optional[np.ndarray], float]:
    spec = problem.get('geodesic')
    if spec is None:
        return None, None, float('inf')
    center = m.validate(spec['center']) if 'center' in spec else m.canonical_point()
    try:
        g = hc.GeodesicFamily(center, spec['kind'], m)
        path = ee.y_alpha_path(T, m, g, ee.default_schedule(problem['alpha_levels']), problem['stop_tol'])
    except (DomainError, PreconditionError) as exc:
        notices.append(f"y_alpha path skipped: {exc}")
        return None, None, float('inf')
    if path.status != 'complete':
        notices.append(f"y_alpha path stopped at alpha={path.stopped_at} ({path.status})")
    if path.best_index is None:
        return path, None, float('inf')
    refined, value = ee.refine_displacement(T, m, path.points[path.best_index])
    return path, refined, min(value, path.min_displacement)


def _status(lower: float, upper: float, certificates: List[dict]) -> str:
    if any(c.get('status') == cert.Status.FALSIFIED.value and c.get('kind') in ('primal', 'dual')
           for c in certificates):
        return cert.Status.FALSIFIED.value
    if not (np.isfinite(lower) and np.isfinite(upper)) or lower > upper + INTERVAL_TOL:
        return cert.Status.INCONCLUSIVE.value
    return cert.Status.VERIFIED.value


def cli_rate(problem: dict) -> dict:
    """Orbit bounds, y_alpha path, certificates and the certified interval"""
    T = _operator_of(problem)
    m = build_metric(T, problem.get('metric'))
    x = _start(problem, m)
    K = problem['horizon']
    notices, certificates = [], []

    estimate, trace = ee.orbit_rate(T, m, x, K)
    if trace.truncated_at is not None:
        notices.append(f"orbit left the numerical interior at k={trace.truncated_at}; "
                       f"orbit bounds use k <= {trace.K}")
    report = _header('rate', problem)
    report.update({'operator': T.tag, 'metric': m.to_dict()})
    upper = estimate.upper
    rho_bar = estimate.upper_from_point

    starts = problem.get('starts', [])
    if starts:
        rates = [ee.orbit_rate(T, m, s, K)[0].upper_from_orbit for s in starts]
        report['basepoint_rates'] = [estimate.upper_from_orbit] + rates

    if T.space_kind == hc.TORUS_SPACE:
        notices.append(NOT_STAR_SHAPED)
        lower, method = ee.additive_lower_bound(T, m, x, K)
        report['rho_bar'] = rho_bar
        report['gap'] = rho_bar - estimate.upper_from_orbit
        upper = estimate.upper_from_orbit
        units = 'additive'
    elif m.is_cone and m.metric_kind in ol.ORDER_METRICS + ('delta-nu',):
        path, refined, path_value = _run_path(T, m, problem, notices)
        if path is not None:
            report['path'] = path.to_dict()
            rho_bar = min(rho_bar, path_value)
        primal, primal_bound = _best_primal(T, m, _primal_candidates(T, trace, path, refined), problem['tol'])
        dual = cert.search_dual(T, problem.get('seeds', []), trace,
                                path.directions if path is not None else ())
        lower = dual_lower(m, dual.mu) if dual.verified else (0.0 if _shape(m) != 'rfunk' else float('-inf'))
        if primal is not None:
            certificates.append(primal.to_dict())
            if primal.verified:
                upper = min(upper, primal_bound)
        certificates.append(dual.to_dict())
        if primal is not None and primal.verified and dual.verified:
            report['weak_duality_gap'] = cert.weak_duality_gap(primal, dual)
        method = 'dual-recession' if dual.verified else 'trivial'
        units = 'log'
    else:
        lower, method = ee.additive_lower_bound(T, m, x, K)
        if isinstance(T, (ol.Shapley, ol.MaxPlus)) and m.metric_kind in ('top', 'bottom', 'norm-sup'):
            game = game_rate(T.game, K)
            report['game'] = game.to_dict()
            if m.metric_kind == 'top':
                upper = min(upper, game.rho_plus)
                lower = max(lower, game.rho_minus)
        norm_kind = {'top': 'top', 'bottom': 'bottom', 'norm-sup': 'sup', 'hemi-norm': 'custom'}.get(m.metric_kind)
        if norm_kind is not None:
            forms = m.norm.forms() if norm_kind == 'custom' else None
            form = cert.kohlberg_neyman_form(T, norm_kind, x, upper, K, forms=forms)
            certificates.append(form.to_dict())
        units = 'additive'

    estimate.lower_from_certificate = lower
    report.update({
        'interval': {'lower': lower, 'upper': upper, 'units': units, 'lower_method': method},
        'status': _status(lower, upper, certificates),
        'estimate': estimate.to_dict(),
        'rho_bar_estimate': rho_bar,
        'certificates': certificates,
        'notices': notices,
    })
    logger.info(f"rate[{T.tag}/{m.metric_kind}]: [{lower:.12g}, {upper:.12g}] {report['status']}")
    return report


# ============================================
# CERTIFY
# ============================================

def cli_certify(problem: dict) -> dict:
    """Verify user-supplied primal, dual and evaluation-form certificates"""
    T = _operator_of(problem)
    supplied = problem.get('certificates', {})
    tol = problem['tol']
    results, primals, duals = [], [], []

    for entry in supplied.get('primal', []):
        c = cert.verify_primal(T, np.array(entry['y'], dtype=float), entry['mu'], tol)
        primals.append(c)
        results.append(c.to_dict())
    for entry in supplied.get('dual', []):
        c = cert.verify_dual(T, np.array(entry['u'], dtype=float), entry['mu'], tol)
        duals.append(c)
        results.append(c.to_dict())
    x = np.array(problem['start'], dtype=float) if 'start' in problem else None
    for entry in supplied.get('forms', []):
        start = x if x is not None else np.zeros(T.dimension)
        c = cert.kohlberg_neyman_form(T, entry['norm'], start, entry['rate'],
                                      entry.get('horizon', problem['horizon']), forms=entry.get('forms'))
        results.append(c.to_dict())

    duality = []
    for p in (p for p in primals if p.verified):
        for d in (d for d in duals if d.verified):
            gap = cert.weak_duality_gap(p, d)
            duality.append({'log_mu_primal': p.log_bound, 'log_mu_dual': d.log_bound, 'gap': gap,
                            'holds': gap <= Config.WEAK_DUALITY_TOL})

    statuses = {r['status'] for r in results}
    if cert.Status.FALSIFIED.value in statuses or any(not d['holds'] for d in duality):
        status = cert.Status.FALSIFIED.value
    elif cert.Status.INCONCLUSIVE.value in statuses or not results:
        status = cert.Status.INCONCLUSIVE.value
    else:
        status = cert.Status.VERIFIED.value

    report = _header('certify', problem)
    report.update({'operator': T.tag, 'certificates': results, 'weak_duality': duality, 'status': status})
    return report


# ============================================
# CHECK-SPACE
# ============================================

def cli_check_space(problem: dict) -> dict:
    """Seeded triangle, geodesic, star-shaped and non-expansiveness samplers"""
    T = _operator_of(problem)
    m = build_metric(T, problem.get('metric'))
    plan = hc.SamplePlan(seed=problem['seed'], count=problem['samples'], tol=problem.get('tol', Config.SAMPLE_TOL))
    checks = problem.get('checks', ['triangle', 'non-expansive'] + (['geodesic', 'star-shaped']
                                                                    if 'geodesic' in problem else []))
    g = None
    if 'geodesic' in problem:
        spec = problem['geodesic']
        center = m.validate(spec['center']) if 'center' in spec else m.canonical_point()
        g = hc.GeodesicFamily(center, spec['kind'], m)

    reports = []
    for check in checks:
        if check == 'triangle':
            reports.append(hc.check_triangle(m, plan))
        elif check == 'non-expansive':
            reports.append(hc.check_non_expansive(m, lambda p: ol.apply(T, p), T.tag, plan))
        elif g is None:
            raise ProblemError(f"check '{check}' needs a geodesic", field='geodesic')
        elif check == 'geodesic':
            reports.append(hc.check_geodesic(g, plan))
        else:
            reports.append(hc.check_star_shaped(g, m, plan))

    report = _header('check-space', problem)
    report.update({
        'metric': m.to_dict(),
        'checks': [r.to_dict() for r in reports],
        'status': cert.Status.VERIFIED.value if all(r.passed for r in reports) else cert.Status.FALSIFIED.value,
    })
    if g is not None and g.kind == 'thompson-straight':
        form, errors = hc.resolve_thompson_form()
        report['thompson_form'] = {'chosen': form, 'identity_errors': errors}
    return report


# ============================================
# GAME
# ============================================

def cli_game(problem: dict) -> dict:
    """Value iteration bounds with omega certificates and the top-norm evaluation form"""
    T = _operator_of(problem)
    if not isinstance(T, (ol.Shapley, ol.MaxPlus)):
        raise ProblemError(f"'game' needs a game, shapley or max-plus operator, got {T.tag}", field='operator')
    K = problem['horizon']
    result = game_rate(T.game, K)
    form = cert.kohlberg_neyman_form(T, 'top', np.zeros(T.dimension), result.rho_plus, K)
    clean = result.omega_plus_violation == 0.0 and result.omega_minus_violation == 0.0

    report = _header('game', problem)
    report.update({
        'operator': T.tag,
        'game': result.to_dict(),
        'interval': {'lower': result.rho_minus, 'upper': result.rho_plus, 'units': 'additive'},
        'certificates': [form.to_dict()],
        'status': cert.Status.VERIFIED.value if clean else cert.Status.INCONCLUSIVE.value,
    })
    return report


# ============================================
# HOROBALLS
# ============================================

def _coords(X: np.ndarray) -> List[float]:
    return [float(X[0, 0]), float(X[1, 1]), float(np.sqrt(2.0) * X[0, 1])]


def horoball_apex(h: cg.ConeMartinFunction, level: float) -> np.ndarray:
    """Apex of {h >= level}: exp(level - RFunk(I, U)) U"""
    return np.exp(level - h.offset) * h.u.data


def cli_horoball_sections(problem: dict) -> dict:
    """
    Boundary samples of the superlevel sets {h >= level} of the dual Martin function on S2+.

    {h >= level} = apex + S2+, so each section is sampled as apex + r p p^T for unit p
    and r > 0. Checks: boundary samples sit at their level, each higher set lies inside
    every lower one, and T maps each section into the set one rate higher.
    """
    T = _operator_of(problem)
    if T.space_kind != hc.PSD_SPACE or T.dimension != 2:
        raise ProblemError("horoball sections need an operator on the 2x2 PSD cone", field='operator')
    supplied = problem.get('certificates', {}).get('dual', [])
    if supplied:
        dual = cert.verify_dual(T, np.array(supplied[0]['u'], dtype=float), supplied[0]['mu'], problem['tol'])
    else:
        dual = cert.search_dual(T, problem.get('seeds', []))
    if not dual.verified:
        raise PreconditionError(f"horoball sections need a verified dual certificate: {dual.reason}")

    U = cg.as_point(dual.u / np.linalg.norm(dual.u), cg.PSD)
    identity = cg.canonical_point(cg.PSD, 2)
    h = cg.ConeMartinFunction(U, identity, 'rfunk')
    rho = float(np.log(dual.mu))
    levels = sorted(problem.get('levels', [0.0, 1.0, 2.0]))
    rng = np.random.default_rng(problem['seed'])
    count = problem['samples']
    tol = 1e-8

    sections, apexes = [], []
    boundary_worst = nesting_worst = mapping_worst = float('-inf')
    for i, level in enumerate(levels):
        apex = horoball_apex(h, level)
        for lower_apex in apexes:
            # apex + S2+ sits inside lower_apex + S2+ iff apex - lower_apex is PSD
            gap = np.linalg.eigvalsh(apex - lower_apex)[0]
            nesting_worst = max(nesting_worst, -gap / max(np.max(np.abs(apex)), 1.0))
        apexes.append(apex)

        angles = rng.uniform(0.0, np.pi, count)
        radii = np.exp(rng.uniform(-Config.SAMPLE_SPREAD, Config.SAMPLE_SPREAD, count))
        points, values = [], []
        for theta, r in zip(angles, radii):
            p = np.array([np.cos(theta), np.sin(theta)])
            X = apex + r * np.outer(p, p)
            if cg.classify(cg.PSD, X) != cg.INTERIOR:
                continue
            value = h(X)
            points.append(_coords(X))
            values.append(value)
            boundary_worst = max(boundary_worst, abs(value - level))
            inner = h(X + cg.random_interior(cg.PSD, 2, rng))
            for lower in levels[:i + 1]:
                nesting_worst = max(nesting_worst, lower - inner)
            mapping_worst = max(mapping_worst, level + rho - h(ol.apply(T, X)))
        sections.append({
            'level': level,
            'apex': _coords(apex),
            'samples': points,
            'boundary_error': max((abs(v - level) for v in values), default=0.0),
        })

    report = _header('horoballs', problem)
    report.update({
        'operator': T.tag,
        'dual': dual.to_dict(),
        'rho': rho,
        'basepoint_value': h(identity),
        'sections': sections,
        'checks': {
            'boundary': {'worst': boundary_worst, 'passed': boundary_worst <= tol},
            'nesting': {'worst': nesting_worst, 'passed': nesting_worst <= tol},
            'maps_to_next_level': {'worst': mapping_worst, 'passed': mapping_worst <= tol},
        },
    })
    passed = all(c['passed'] for c in report['checks'].values())
    report['status'] = cert.Status.VERIFIED.value if passed else cert.Status.FALSIFIED.value
    return report


def horoball_csv(report: dict) -> str:
    """level,x11,x22,sqrt2_x12 rows for every sampled point"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['level', 'x11', 'x22', 'sqrt2_x12'])
    for section in report['sections']:
        for point in section['samples']:
            writer.writerow([format(section['level'], '.17g')] + [format(v, '.17g') for v in point])
    return buffer.getvalue()


HANDLERS = {
    'rate': cli_rate,
    'certify': cli_certify,
    'check-space': cli_check_space,
    'game': cli_game,
    'horoballs': cli_horoball_sections,
}

EXIT_CODES: Dict[str, int] = {
    cert.Status.VERIFIED.value: 0,
    cert.Status.FALSIFIED.value: 2,
    cert.Status.INCONCLUSIVE.value: 3,
}
