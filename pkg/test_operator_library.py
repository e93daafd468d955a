import numpy as np
import pytest
from hypothesis import given, strategies as st

import cone_geometry as cg
import hemi_core as hc
import operator_library as ol
from conftest import positive_vectors, psd_interior
from errors import DimensionError, DomainError

PERRON = [[2.0, 1.0], [1.0, 2.0]]
RICCATI_A = [[0.5, 0.1], [0.1, 0.3]]
E1 = [[1.0, 0.0], [0.0, 0.0]]
E2 = np.array([[0.0, 0.0], [0.0, 1.0]])
GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def riccati(alpha=2.0, A=RICCATI_A):
    return ol.Riccati(A, E1, alpha * np.eye(2))


class TestConstruction:
    def test_nonneg_matrix_validation(self):
        with pytest.raises(DomainError):
            ol.NonnegMatrix([[1.0, -1.0], [0.0, 1.0]])
        with pytest.raises(DomainError):
            ol.NonnegMatrix([[1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(DimensionError):
            ol.NonnegMatrix([[1.0, 1.0]])

    def test_riccati_validation(self):
        with pytest.raises(DomainError):
            ol.Riccati([[1.0, 2.0], [0.0, 1.0]], E1, np.eye(2))
        with pytest.raises(DomainError):
            ol.Riccati(RICCATI_A, E1, [[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(DimensionError):
            ol.Riccati(RICCATI_A, [[1.0]], np.eye(2))

    def test_torus_alpha_range(self):
        with pytest.raises(DomainError):
            ol.TorusShift(0.6)
        assert np.allclose(ol.TorusShift(0.3).apply(np.array([0.9, 0.0])), [0.2, 1.0])

    def test_max_plus_rows_need_a_finite_entry(self):
        with pytest.raises(DomainError):
            ol.MaxPlus([[0.0, 1.0], [-np.inf, -np.inf]])
        T = ol.MaxPlus([[0.0, 2.0], [1.0, -np.inf]])
        assert np.array_equal(ol.apply(T, [0.0, 0.0]), [2.0, 1.0])

    def test_natural_metrics(self):
        assert ol.NonnegMatrix(PERRON).natural_metrics[0] == 'rfunk'
        assert ol.MaxPlus([[0.0]]).natural_metrics[0] == 'top'
        assert riccati().natural_metrics == ('thompson', 'rfunk-plus')
        assert ol.Translation([1.0, 2.0], 'l2').natural_metrics[0] == 'norm-l2'
        assert ol.TorusShift(0.3).natural_metrics == ('torus-line',)

    def test_composite(self):
        T = ol.Composite([ol.NonnegMatrix(PERRON), ol.NonnegMatrix([[1.0, 0.0], [0.0, 3.0]])])
        assert np.array_equal(ol.apply(T, [1.0, 1.0]), [3.0, 9.0])
        assert T.homogeneous and 'rfunk' in T.natural_metrics
        with pytest.raises(DimensionError):
            ol.Composite([ol.NonnegMatrix(PERRON), ol.NonnegMatrix(np.eye(3))])

    def test_translation_exact_rate(self):
        T = ol.Translation([1.0, 2.0])
        vector = lambda kind: hc.HemiMetric(hc.VECTOR_SPACE, kind, 2)
        assert T.exact_rate(vector('norm-sup')) == 2.0
        assert T.exact_rate(vector('top')) == 2.0
        assert T.exact_rate(vector('bottom')) == -1.0
        assert T.exact_rate(vector('norm-l2')) == pytest.approx(np.sqrt(5.0))


class TestApply:
    def test_boundary_inputs_are_refused(self):
        with pytest.raises(DomainError):
            ol.apply(ol.NonnegMatrix(PERRON), [1.0, 0.0])

    def test_dimension_is_checked(self):
        with pytest.raises(DimensionError):
            ol.apply(ol.Translation([1.0, 2.0]), [0.0, 0.0, 0.0])

    def test_riccati_scalar(self):
        T = ol.Riccati([[1.0]], [[1.0]], [[1.0]])
        assert ol.apply(T, [[1.0]])[0, 0] == pytest.approx(1.5)

    def test_riccati_matches_the_direct_formula(self, rng):
        T = riccati(1.5)
        X = cg.random_interior(cg.PSD, 2, rng)
        direct = T.A + T.M @ np.linalg.inv(T.B + np.linalg.inv(X)) @ T.M.T
        assert np.allclose(ol.apply(T, X), direct)


class TestLimits:
    def test_radial_extension_closed_form_and_limit_agree(self):
        T = ol.NonnegMatrix(PERRON)
        closed = ol.radial_extension(T, [1.0, 0.0])
        limit = ol.radial_extension(T, [1.0, 0.0], method='limit')
        assert closed.status == 'closed-form'
        assert limit.converged
        assert np.allclose(limit.value, [2.0, 1.0], rtol=1e-8)

    def test_riccati_radial_extension_on_the_boundary(self):
        T = riccati()
        value = ol.radial_extension(T, E2).value
        assert np.allclose(value, np.array(RICCATI_A) + 4.0 * E2)

    def test_riccati_recession_is_alpha_squared_on_the_kernel_of_b(self):
        for alpha in (1.5, 2.0, 3.0):
            rec = ol.recession_map(riccati(alpha), E2)
            assert rec.converged
            assert np.allclose(rec.value, alpha ** 2 * E2)

    def test_riccati_recession_limit_matches_closed_form(self):
        T = riccati()
        U = np.array([[0.5, 0.2], [0.2, 0.4]])
        closed = ol.recession_map(T, U)
        limit = ol.recession_map(T, U, method='limit')
        assert limit.converged
        assert np.allclose(limit.value, closed.value, rtol=1e-6, atol=1e-6)

    def test_recession_of_homogeneous_maps_is_the_map(self):
        rec = ol.recession_map(ol.NonnegMatrix(PERRON), [1.0, 1.0])
        assert np.allclose(rec.value, [3.0, 3.0])

    def test_limits_need_cones(self):
        with pytest.raises(DomainError):
            ol.radial_extension(ol.Translation([1.0]), [0.0])
        with pytest.raises(DomainError):
            ol.recession_map(ol.NonnegMatrix(PERRON), [0.0, 0.0])
        with pytest.raises(DomainError):
            ol.radial_extension(ol.NonnegMatrix(PERRON), [1.0, 1.0], method='guess')


class TestNonExpansive:
    @pytest.mark.parametrize('kind', ['rfunk', 'rfunk-plus', 'thompson', 'hilbert'])
    def test_nonneg_matrix(self, kind):
        T = ol.NonnegMatrix([[0.5, 0.2, 0.9], [0.3, 0.8, 0.1], [0.6, 0.4, 0.7]])
        m = hc.HemiMetric(hc.STANDARD_SPACE, kind, 3)
        report = hc.check_non_expansive(m, lambda x: ol.apply(T, x), plan=hc.SamplePlan(seed=4, count=2000))
        assert report.passed, report.to_dict()

    @pytest.mark.parametrize('kind', ['thompson', 'rfunk-plus'])
    def test_riccati(self, kind):
        T = riccati()
        m = hc.HemiMetric(hc.PSD_SPACE, kind, 2)
        report = hc.check_non_expansive(m, lambda x: ol.apply(T, x), plan=hc.SamplePlan(seed=5, count=2000))
        assert report.passed, report.to_dict()

    @pytest.mark.parametrize('kind', ['top', 'bottom', 'norm-sup'])
    def test_max_plus(self, kind):
        T = ol.MaxPlus([[0.0, 2.0, -np.inf], [1.0, -np.inf, 0.5], [-1.0, 0.0, 0.0]])
        m = hc.HemiMetric(hc.VECTOR_SPACE, kind, 3)
        report = hc.check_non_expansive(m, lambda x: ol.apply(T, x), plan=hc.SamplePlan(seed=6, count=2000))
        assert report.passed, report.to_dict()


class TestOrder:
    @given(psd_interior(), psd_interior(), st.floats(1.0, 10.0))
    def test_riccati_is_order_preserving_and_sub_homogeneous(self, X, D, lam):
        T = riccati()
        assert cg.cone_leq(ol.apply(T, X), ol.apply(T, X + D), tol=1e-8)
        assert cg.cone_leq(ol.apply(T, lam * X), lam * ol.apply(T, X), tol=1e-8)

    @given(positive_vectors(3), positive_vectors(3), st.floats(0.1, 10.0))
    def test_nonneg_matrix_is_order_preserving_and_homogeneous(self, x, d, lam):
        T = ol.NonnegMatrix([[0.5, 0.2, 0.9], [0.3, 0.8, 0.1], [0.6, 0.4, 0.7]])
        assert cg.cone_leq(ol.apply(T, x), ol.apply(T, x + d))
        assert np.allclose(ol.apply(T, lam * x), lam * ol.apply(T, x), rtol=1e-12, atol=0.0)

    def test_riccati_is_strictly_sub_homogeneous_when_a_is_positive(self):
        T = riccati()
        X = np.eye(2)
        assert not cg.cone_leq(2.0 * ol.apply(T, X), ol.apply(T, 2.0 * X))


class TestOrbits:
    def test_perron_orbit(self):
        m = hc.HemiMetric(hc.STANDARD_SPACE, 'rfunk', 2)
        trace = ol.trace_orbit(ol.NonnegMatrix(PERRON), m, [1.0, 1.0], 50)
        assert np.allclose(trace.step_displacements, np.log(3.0))
        assert trace.running_min[-1] == pytest.approx(np.log(3.0))
        assert trace.log_scale == pytest.approx(50 * np.log(3.0) + 0.5 * np.log(2.0))
        assert trace.subadditivity_excess() <= 1e-9

    def test_translation_orbit(self):
        m = hc.HemiMetric(hc.VECTOR_SPACE, 'norm-sup', 2)
        trace = ol.trace_orbit(ol.Translation([1.0, 2.0]), m, [0.0, 0.0], 1000)
        assert np.array_equal(trace.cumulative, 2.0 * np.arange(1, 1001))
        assert trace.running_min[-1] == 2.0
        assert trace.step_increase() == 0.0

    def test_snapshots_at_powers_of_two(self):
        m = hc.HemiMetric(hc.VECTOR_SPACE, 'norm-sup', 1)
        trace = ol.trace_orbit(ol.Translation([1.0]), m, [0.0], 10)
        assert [k for k, _ in trace.snapshots] == [1, 2, 4, 8, 10]
        assert np.array_equal(trace.snapshots[2][1], [4.0])

    def test_orbit_leaving_the_interior_reports_the_step(self):
        m = hc.HemiMetric(hc.STANDARD_SPACE, 'rfunk', 2)
        with pytest.raises(DomainError) as info:
            ol.trace_orbit(ol.NonnegMatrix([[1.0, 1.0], [0.0, 1e-3]]), m, [1.0, 1.0], 50)
        assert info.value.k is not None

    def test_escaping_riccati_orbit_stops_at_the_numerical_boundary(self):
        m = hc.HemiMetric(hc.PSD_SPACE, 'rfunk-plus', 2)
        trace = ol.trace_orbit(riccati(), m, np.eye(2), 200)
        assert trace.truncated_at == trace.K + 1
        assert 2 <= trace.K < 200
        assert trace.step_displacements.size == trace.cumulative.size == trace.running_min.size == trace.K
        assert trace.snapshots[-1][0] == trace.K
        assert cg.classify(cg.PSD, trace.last_point) == cg.INTERIOR
        assert trace.to_dict()['truncated_at'] == trace.truncated_at
        assert trace.running_min[-1] >= 2.0 * np.log(2.0) - 1e-9

    def test_scalar_riccati_converges_to_the_golden_ratio(self):
        m = hc.HemiMetric(hc.PSD_SPACE, 'thompson', 1)
        trace = ol.trace_orbit(ol.Riccati([[1.0]], [[1.0]], [[1.0]]), m, [[1.0]], 200)
        assert trace.last_point[0, 0] == pytest.approx(GOLDEN, abs=1e-10)
        assert trace.fixed_point_step is not None

    def test_contracting_riccati_converges(self, rng):
        G, H = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        T = ol.Riccati(G @ G.T / 2 + np.eye(2), H @ H.T / 2 + np.eye(2), 0.5 * rng.standard_normal((2, 2)))
        m = hc.HemiMetric(hc.PSD_SPACE, 'thompson', 2)
        trace = ol.trace_orbit(T, m, np.eye(2), 200)
        assert trace.step_displacements[-1] < 1e-10

    def test_metric_must_match_the_operator(self):
        m = hc.HemiMetric(hc.STANDARD_SPACE, 'rfunk', 3)
        with pytest.raises(DimensionError):
            ol.trace_orbit(ol.NonnegMatrix(PERRON), m, [1.0, 1.0, 1.0], 5)

    def test_normalized_iteration_needs_homogeneity(self):
        with pytest.raises(DomainError):
            next(ol.iterate_normalized(riccati(), np.eye(2), 3))

    @given(positive_vectors(3), positive_vectors(3))
    def test_scaled_delta_matches_delta(self, x, y):
        for kind in ('rfunk', 'rfunk-plus', 'thompson', 'hilbert'):
            m = hc.HemiMetric(hc.STANDARD_SPACE, kind, 3)
            expected = hc.delta(m, np.exp(0.7) * x, np.exp(-1.2) * y)
            assert ol.scaled_delta(m, x, 0.7, y, -1.2) == pytest.approx(expected, abs=1e-9)
