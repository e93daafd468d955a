import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

import hemi_core as hc
import operator_library as ol
import stochastic_games as sg
from errors import DimensionError, DomainError

PENNIES = [[2.0, 0.0], [0.0, 2.0]]


def single_state(payoff) -> sg.GameSpec:
    g = np.array(payoff, dtype=float)
    return sg.GameSpec((g,), (np.ones(g.shape + (1,)),))


def random_max_plus(rng, n: int) -> np.ndarray:
    """Random weights with some edges removed; every row keeps a successor"""
    A = rng.normal(size=(n, n))
    A[rng.random((n, n)) < 0.5] = -np.inf
    keep = rng.permutation(n)
    A[np.arange(n), keep] = rng.normal(size=n)
    return A


def random_game(rng, states: int = 2, actions=(2, 3)) -> sg.GameSpec:
    payoff, transition = [], []
    for _ in range(states):
        payoff.append(rng.normal(size=actions))
        q = rng.random(actions + (states,))
        transition.append(q / q.sum(axis=2, keepdims=True))
    return sg.GameSpec(tuple(payoff), tuple(transition))


def lp_value(A: np.ndarray) -> float:
    """max_p min_j (pA)_j solved directly"""
    m, n = A.shape
    res = linprog(
        np.r_[np.zeros(m), -1.0],
        A_ub=np.hstack([-A.T, np.ones((n, 1))]), b_ub=np.zeros(n),
        A_eq=np.r_[np.ones(m), 0.0].reshape(1, -1), b_eq=[1.0],
        bounds=[(0, None)] * m + [(None, None)], method='highs',
    )
    return float(-res.fun)


class TestGameSpec:
    def test_shapes_and_probabilities_are_validated(self):
        with pytest.raises(DimensionError):
            sg.GameSpec((np.zeros((2, 2)),), (np.ones((2, 1, 1)),))
        with pytest.raises(DomainError):
            sg.GameSpec((np.zeros((1, 1)),), (np.full((1, 1, 1), 0.5),))
        with pytest.raises(DomainError):
            sg.GameSpec((np.array([[np.inf]]),), (np.ones((1, 1, 1)),))
        with pytest.raises(DomainError):
            sg.GameSpec((), ())

    def test_from_dict_checks_declared_sizes(self):
        data = single_state(PENNIES).to_dict()
        assert sg.GameSpec.from_dict(data).actions_a == [2]
        with pytest.raises(DimensionError):
            sg.GameSpec.from_dict({**data, 'states': 2})
        with pytest.raises(DimensionError):
            sg.GameSpec.from_dict({**data, 'actions_b': [3]})

    def test_max_plus_conversion(self):
        A = np.array([[0.0, 2.0], [1.0, -np.inf]])
        game = sg.GameSpec.from_max_plus(A)
        assert game.one_player and game.deterministic
        assert np.array_equal(game.max_plus_matrix(), A)
        assert np.array_equal(sg.shapley_apply(game, [0.0, 0.0]), [2.0, 1.0])
        with pytest.raises(DomainError):
            sg.GameSpec.from_max_plus([[0.0, 1.0], [-np.inf, -np.inf]])
        with pytest.raises(DomainError):
            single_state(PENNIES).max_plus_matrix()

    def test_negated_game_is_the_conjugate_operator(self, rng):
        payoff = tuple(rng.normal(size=(2, 3)) for _ in range(2))
        transition = []
        for _ in range(2):
            q = rng.random((2, 3, 2))
            transition.append(q / q.sum(axis=2, keepdims=True))
        game = sg.GameSpec(payoff, tuple(transition))
        x = rng.normal(size=2)
        negated = sg.negate_game(game)
        assert np.allclose(sg.shapley_apply(negated, x), -sg.shapley_apply(game, -x), atol=1e-9)

    def test_value_vector_length(self):
        with pytest.raises(DimensionError):
            sg.shapley_apply(single_state(PENNIES), [0.0, 0.0])


class TestShapleyProperties:
    @given(st.integers(0, 2 ** 32 - 1), st.floats(-50.0, 50.0))
    def test_commutes_with_constants(self, seed, c):
        rng = np.random.default_rng(seed)
        game = random_game(rng)
        x = rng.normal(size=2)
        assert np.allclose(sg.shapley_apply(game, x + c), sg.shapley_apply(game, x) + c, atol=1e-8)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_order_preserving(self, seed):
        rng = np.random.default_rng(seed)
        game = random_game(rng)
        x = rng.normal(size=2)
        y = x + rng.random(2)
        assert np.all(sg.shapley_apply(game, x) <= sg.shapley_apply(game, y) + 1e-8)

    @pytest.mark.parametrize('seed', range(5))
    def test_monotone_and_additive_maps_are_top_non_expansive(self, seed):
        rng = np.random.default_rng(seed)
        top = hc.HemiMetric(hc.VECTOR_SPACE, 'top', 2)
        game = random_game(rng)
        plan = hc.SamplePlan(seed=seed, count=500, tol=1e-7)
        assert hc.check_non_expansive(top, lambda x: sg.shapley_apply(game, x), plan=plan).passed
        T = ol.MaxPlus(random_max_plus(rng, 4))
        top4 = hc.HemiMetric(hc.VECTOR_SPACE, 'top', 4)
        assert hc.check_non_expansive(top4, T.apply, plan=plan).passed

    def test_top_non_expansion_fails_without_either_property(self):
        top = hc.HemiMetric(hc.VECTOR_SPACE, 'top', 3)
        plan = hc.SamplePlan(seed=7, count=500)
        # commutes with constants but is antitone in each coordinate
        antitone = lambda x: -x + 2.0 * np.mean(x)
        # monotone but does not commute with constants
        doubling = lambda x: 2.0 * x
        assert not hc.check_non_expansive(top, antitone, plan=plan).passed
        assert not hc.check_non_expansive(top, doubling, plan=plan).passed


class TestMatrixGames:
    def test_saddle_point(self):
        value = sg.matrix_game_value([[3.0, 1.0], [4.0, 2.0]])
        assert value.value == 2.0
        assert value.method == 'saddle'
        assert np.array_equal(value.row_strategy, [0.0, 1.0])

    def test_matching_pennies(self):
        value = sg.matrix_game_value(PENNIES)
        assert value.value == pytest.approx(1.0, abs=1e-12)
        assert value.method == 'lp'
        assert np.allclose(value.row_strategy, [0.5, 0.5])
        assert np.allclose(value.col_strategy, [0.5, 0.5])

    def test_size_cap(self):
        with pytest.raises(DomainError):
            sg.matrix_game_value(np.zeros((51, 2)))

    @given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2 ** 32 - 1))
    def test_agrees_with_the_lp(self, m, n, seed):
        A = np.random.default_rng(seed).normal(size=(m, n))
        value = sg.matrix_game_value(A)
        assert value.value == pytest.approx(lp_value(A), abs=1e-8)
        # the strategies certify the value
        assert np.min(value.row_strategy @ A) >= value.value - 1e-8
        assert np.max(A @ value.col_strategy) <= value.value + 1e-8

    def test_fictitious_play_brackets_the_value(self):
        lower, upper, p, q = sg.fictitious_play(PENNIES, rounds=20000)
        assert lower <= 1.0 <= upper
        assert upper - lower < 0.2
        assert p.sum() == pytest.approx(1.0) and q.sum() == pytest.approx(1.0)


class TestCycleMean:
    def test_two_cycle(self):
        assert sg.karp_cycle_mean([[0.0, 2.0], [1.0, -np.inf]]) == pytest.approx(1.5)

    def test_self_loops(self):
        assert sg.karp_cycle_mean([[1.0, -np.inf], [-np.inf, 3.0]]) == pytest.approx(3.0)

    def test_acyclic_graph(self):
        with pytest.raises(DomainError):
            sg.karp_cycle_mean([[-np.inf, 1.0], [-np.inf, -np.inf]])

    def test_potential_is_a_sub_eigenvector(self, rng):
        A = random_max_plus(rng, 6)
        lam = sg.karp_cycle_mean(A)
        y = sg.max_plus_potential(A, lam)
        Ty = np.max(A + y[None, :], axis=1)
        assert np.all(Ty - y <= lam + 1e-9)


class TestGameRate:
    @pytest.mark.parametrize('seed', range(50))
    def test_one_player_deterministic_matches_karp(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        A = random_max_plus(rng, n)
        result = sg.game_rate(sg.GameSpec.from_max_plus(A), K=300)
        assert result.rho_plus == pytest.approx(sg.karp_cycle_mean(A), abs=1e-9)
        assert result.cycle_mean == pytest.approx(result.rho_plus, abs=1e-9)
        assert result.omega_plus_violation == 0.0
        for w in result.omega_plus:
            assert np.all(result.iterates[:, w] - np.arange(301) * result.rho_plus >= -1e-7 * 300)

    @pytest.mark.parametrize('seed', range(20))
    def test_single_state_rate_is_the_matrix_game_value(self, seed):
        rng = np.random.default_rng(1000 + seed)
        size = 2 if seed % 2 == 0 else 3
        A = rng.normal(size=(size, size))
        result = sg.game_rate(single_state(A), K=50)
        assert result.rho_plus == pytest.approx(lp_value(A), abs=1e-8)
        assert result.rho_minus == pytest.approx(lp_value(A), abs=1e-8)
        assert result.omega_plus == [0]

    def test_large_games_use_the_pool(self, rng):
        A = random_max_plus(rng, sg.PARALLEL_STATES)
        result = sg.game_rate(sg.GameSpec.from_max_plus(A), K=100, local_search=0)
        assert result.rho_plus == pytest.approx(sg.karp_cycle_mean(A), abs=1e-9)

    def test_rates_are_ordered(self):
        A = np.array([[1.0, -np.inf], [-np.inf, 3.0]])
        result = sg.game_rate(sg.GameSpec.from_max_plus(A), K=100)
        assert result.rho_plus == pytest.approx(3.0)
        assert result.rho_minus == pytest.approx(1.0)
        assert result.omega_plus == [1]
        assert result.omega_minus == [0]
        out = result.to_dict()
        assert 'iterates' not in out and out['cycle_mean'] == pytest.approx(3.0)

    @pytest.mark.parametrize('seed', range(10))
    def test_negated_game_swaps_the_rates(self, seed):
        rng = np.random.default_rng(500 + seed)
        game = sg.GameSpec.from_max_plus(random_max_plus(rng, int(rng.integers(2, 7))))
        result = sg.game_rate(game, K=300, local_search=0)
        negated = sg.game_rate(sg.negate_game(game), K=300, local_search=0)
        assert negated.rho_minus == pytest.approx(-result.rho_plus, abs=1e-9)
        assert negated.rho_plus == pytest.approx(-result.rho_minus, abs=1e-9)

    @pytest.mark.parametrize('seed', range(5))
    def test_negated_stochastic_game_swaps_the_rates(self, seed):
        game = random_game(np.random.default_rng(700 + seed), states=3)
        result = sg.game_rate(game, K=200, local_search=0)
        negated = sg.game_rate(sg.negate_game(game), K=200, local_search=0)
        assert negated.rho_minus == pytest.approx(-result.rho_plus, abs=1e-7)
        assert negated.rho_plus == pytest.approx(-result.rho_minus, abs=1e-7)

    def test_horizon_must_be_positive(self):
        with pytest.raises(DomainError):
            sg.game_rate(single_state(PENNIES), K=0)


class TestCoordinateDescent:
    def test_reaches_the_minimum(self):
        target = np.array([0.3, -1.2])
        f = lambda y: float(np.sum((y - target) ** 2))
        y, value = sg.coordinate_descent(f, np.zeros(2), f(np.zeros(2)), 400, 0.5)
        assert value < 1e-6
        assert np.allclose(y, target, atol=1e-3)
