import numpy as np
import pytest

import certificates as cert
import cone_geometry as cg
import hemi_core as hc
import operator_library as ol
from errors import DomainError

PERRON = [[2.0, 1.0], [1.0, 2.0]]
E1 = [[1.0, 0.0], [0.0, 0.0]]
U = np.array([[0.0, 0.0], [0.0, 1.0]])


def random_riccati(alpha: float, seed: int) -> ol.Riccati:
    """B = e1 e1^T, M = alpha I and a random PSD A with largest eigenvalue <= 1"""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((2, 2))
    A = G @ G.T
    A = A / max(np.linalg.eigvalsh(A)[-1], 1.0)
    return ol.Riccati((A + A.T) / 2, E1, alpha * np.eye(2))


class TestPrimal:
    def test_perron(self):
        T = ol.NonnegMatrix(PERRON)
        assert cert.verify_primal(T, [1.0, 1.0], 3.0).verified
        falsified = cert.verify_primal(T, [1.0, 1.0], 2.9)
        assert falsified.status == cert.Status.FALSIFIED
        assert falsified.gauge == 3.0
        assert 'exceeds' in falsified.reason

    def test_preconditions(self):
        with pytest.raises(DomainError):
            cert.verify_primal(ol.NonnegMatrix(PERRON), [1.0, 1.0], 0.0)
        with pytest.raises(DomainError):
            cert.verify_primal(ol.Translation([1.0, 2.0]), [1.0, 1.0], 1.0)

    def test_search_picks_the_smallest_mu(self):
        T = ol.NonnegMatrix(PERRON)
        best = cert.search_primal(T, [np.array([1.0, 2.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0])])
        assert best.verified
        assert best.mu == pytest.approx(3.0)
        assert np.array_equal(best.y, [1.0, 1.0])

    @pytest.mark.parametrize('alpha', [1.5, 2.0, 3.0])
    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_riccati_primal_at_large_multiples_of_identity(self, alpha, seed):
        T = random_riccati(alpha, seed)
        s = 1e6
        bound = alpha ** 2 + 2.0 * np.linalg.eigvalsh(T.A)[-1] * 1e-6
        certificate = cert.verify_primal(T, s * np.eye(2), bound)
        assert certificate.verified, certificate.reason
        assert certificate.slack >= 0


class TestDual:
    def test_perron(self):
        T = ol.NonnegMatrix(PERRON)
        dual = cert.verify_dual(T, [1.0, 1.0], 3.0)
        assert dual.verified
        assert dual.martin_kind == 'internal'
        assert len(dual.pumping) == 20
        assert cert.verify_dual(T, [1.0, 1.0], 3.1).status == cert.Status.FALSIFIED

    @pytest.mark.parametrize('alpha', [1.5, 2.0, 3.0])
    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_riccati_dual_on_the_kernel_of_b(self, alpha, seed):
        T = random_riccati(alpha, seed)
        dual = cert.verify_dual(T, U, alpha ** 2 - 1e-9)
        assert dual.verified, dual.reason
        assert dual.gauge >= alpha ** 2 - 1e-9
        assert dual.on_boundary
        assert dual.martin_kind == 'horofunction'

    @pytest.mark.parametrize('c', [1e-3, 0.5, 7.0, 1e4])
    def test_scaling_u_keeps_the_verdict(self, c):
        cases = [(ol.NonnegMatrix(PERRON), np.array([1.0, 1.0]), 3.0),
                 (ol.NonnegMatrix(PERRON), np.array([1.0, 2.0]), 3.0),
                 (random_riccati(2.0, 1), U, 4.0 - 1e-9),
                 (random_riccati(2.0, 0), np.eye(2), 4.0)]
        for T, u, mu in cases:
            base, scaled = cert.verify_dual(T, u, mu), cert.verify_dual(T, c * u, mu)
            assert scaled.status == base.status
            assert scaled.gauge == pytest.approx(base.gauge, rel=1e-9)

    def test_riccati_dual_off_the_kernel_is_falsified(self):
        dual = cert.verify_dual(random_riccati(2.0, 0), np.eye(2), 4.0)
        assert dual.status == cert.Status.FALSIFIED

    def test_search_finds_the_riccati_certificate(self):
        T = random_riccati(2.0, 3)
        dual = cert.search_dual(T)
        assert dual.verified
        assert dual.mu == pytest.approx(4.0)

    def test_search_on_a_contraction_is_trivial(self):
        T = ol.Riccati([[1.0]], [[1.0]], [[1.0]])
        dual = cert.search_dual(T)
        assert dual.status == cert.Status.INCONCLUSIVE
        assert dual.mu == 0.0

    def test_search_off_the_cone_is_trivial(self):
        dual = cert.search_dual(ol.Translation([1.0, 2.0]))
        assert dual.status == cert.Status.INCONCLUSIVE
        assert 'trivial bound' in dual.reason

    def test_zero_u_is_refused(self):
        with pytest.raises(DomainError):
            cert.verify_dual(ol.NonnegMatrix(PERRON), [0.0, 0.0], 1.0)


class TestWeakDuality:
    @pytest.mark.parametrize('seed', range(5))
    def test_random_positive_matrices(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        T = ol.NonnegMatrix(rng.uniform(0.01, 1.0, (n, n)))
        m = hc.HemiMetric(hc.STANDARD_SPACE, 'rfunk', n)
        trace = ol.trace_orbit(T, m, np.ones(n), 100)
        primal = cert.search_primal(T, [point for _, point in trace.snapshots] + [np.ones(n)])
        dual = cert.search_dual(T, trace=trace)
        assert primal.verified and dual.verified
        assert cert.weak_duality_gap(primal, dual) <= 1e-8

    def test_riccati(self):
        T = random_riccati(3.0, 4)
        primal = cert.verify_primal(T, 1e6 * np.eye(2), cg.gauge_M(1e6 * np.eye(2), ol.apply(T, 1e6 * np.eye(2))))
        dual = cert.search_dual(T)
        assert cert.weak_duality_gap(primal, dual) <= 1e-8


class TestKohlbergNeymanForms:
    def test_translation_sup(self):
        T = ol.Translation([1.0, 2.0])
        form = cert.kohlberg_neyman_form(T, 'sup', np.zeros(2), 2.0, 1000)
        assert form.verified
        assert form.kind == 'dual-ball'
        assert form.payload == {'form': [0.0, 1.0], 'index': 1}

    def test_max_plus_top(self):
        T = ol.MaxPlus([[1.0, -np.inf], [-np.inf, 3.0]])
        form = cert.kohlberg_neyman_form(T, 'top', np.zeros(2), 3.0, 1000)
        assert form.verified
        assert form.kind == 'coordinate'
        assert form.payload['omega'] == 1

    def test_certificate_is_an_extreme_point_that_pumps(self):
        # exhaustive check over the coordinate forms: only state 0 pumps at the cycle mean
        T = ol.MaxPlus([[0.0, 2.0, -np.inf], [1.0, -np.inf, -np.inf], [-np.inf, 0.0, 0.5]])
        rate, K = 1.5, 1000
        form = cert.kohlberg_neyman_form(T, 'top', np.zeros(3), rate, K)
        assert form.verified
        omega = form.payload['omega']
        assert form.payload['form'] in np.eye(3).tolist()
        x, values = np.zeros(3), []
        for k in range(K + 1):
            values.append(x.copy())
            x = ol.apply(T, x)
        values = np.array(values)
        assert np.all(values[:, omega] - np.arange(K + 1) * rate >= -form.tol)

    def test_too_high_a_rate_is_falsified(self):
        form = cert.kohlberg_neyman_form(ol.Translation([1.0, 2.0]), 'sup', np.zeros(2), 2.5, 100)
        assert form.status == cert.Status.FALSIFIED
        assert form.worst_margin < 0

    def test_custom_forms(self):
        T = ol.Translation([1.0, 2.0])
        forms = [[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
        form = cert.kohlberg_neyman_form(T, 'custom', np.zeros(2), 3.0, 100, forms=forms)
        assert form.verified
        assert form.payload['index'] == 0

    def test_cone_operators_are_refused(self):
        with pytest.raises(DomainError):
            cert.kohlberg_neyman_form(ol.NonnegMatrix(PERRON), 'sup', np.ones(2), 1.0, 10)

    def test_extreme_ray_form_for_perron(self):
        form = cert.extreme_ray_form(ol.NonnegMatrix(PERRON), [1.0, 1.0], np.log(3.0), 100)
        assert form.verified
        assert form.payload == {'cone': 'standard', 'index': 0}

    def test_extreme_ray_form_needs_a_positive_lower_bound_when_sub_homogeneous(self):
        T = random_riccati(2.0, 0)
        refused = cert.extreme_ray_form(T, np.eye(2), np.log(4.0), 50)
        assert refused.status == cert.Status.INCONCLUSIVE
        form = cert.extreme_ray_form(T, np.eye(2), np.log(4.0) - 0.05, 10, lower_bound=np.log(4.0))
        assert form.verified

    def test_extreme_ray_form_stops_when_an_escaping_orbit_degenerates(self):
        # lambda_min / lambda_max of T^k(I) falls like 4^-k
        T = random_riccati(2.0, 0)
        form = cert.extreme_ray_form(T, np.eye(2), np.log(4.0) - 0.05, 50, lower_bound=np.log(4.0))
        assert form.status == cert.Status.INCONCLUSIVE
        assert 'numerical interior' in form.reason
        assert form.horizon == 50
