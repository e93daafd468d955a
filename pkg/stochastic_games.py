"""
Stochastic Games
================
Finite zero-sum stochastic games: Shapley operators, matrix game values,
value iteration for the mean-payoff rates and the max-cycle-mean oracle
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gcd
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from config import Config
from errors import ConvergenceError, DimensionError, DomainError

logger = logging.getLogger(__name__)

NEG_INF = float('-inf')

# States at or above this count solve their matrix games on a thread pool
PARALLEL_STATES = 16


# ============================================
# GAME SPEC
# ============================================

@dataclass(frozen=True, eq=False)
class GameSpec:
    """
    A finite zero-sum stochastic game.

    payoff[w] is an |A_w| x |B_w| matrix, transition[w] an |A_w| x |B_w| x S
    array of probability vectors over next states.
    """
    payoff: Tuple[np.ndarray, ...]
    transition: Tuple[np.ndarray, ...]
    _value_cache: Dict[int, float] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        payoff = tuple(np.atleast_2d(np.array(g, dtype=float)) for g in self.payoff)
        transition = tuple(np.array(q, dtype=float) for q in self.transition)
        S = len(payoff)
        if S == 0 or len(transition) != S:
            raise DomainError("a game needs one payoff matrix and one transition array per state")
        for w, (g, q) in enumerate(zip(payoff, transition)):
            if g.ndim != 2 or g.size == 0:
                raise DimensionError(f"state {w}: payoff must be a non-empty matrix")
            if q.shape != g.shape + (S,):
                raise DimensionError(f"state {w}: transition shape {q.shape}, expected {g.shape + (S,)}")
            if not np.all(np.isfinite(g)):
                raise DomainError(f"state {w}: payoffs must be finite")
            if np.any(q < 0):
                raise DomainError(f"state {w}: negative transition probability")
            if np.max(np.abs(q.sum(axis=2) - 1.0)) > 1e-12:
                raise DomainError(f"state {w}: transition rows must sum to 1")
            if g.shape[0] > Config.MAX_GAME_SIZE or g.shape[1] > Config.MAX_GAME_SIZE:
                raise DomainError(f"state {w}: matrix games are capped at {Config.MAX_GAME_SIZE}x{Config.MAX_GAME_SIZE}")
            g.setflags(write=False)
            q.setflags(write=False)
        object.__setattr__(self, 'payoff', payoff)
        object.__setattr__(self, 'transition', transition)

    @property
    def states(self) -> int:
        return len(self.payoff)

    @property
    def actions_a(self) -> List[int]:
        return [g.shape[0] for g in self.payoff]

    @property
    def actions_b(self) -> List[int]:
        return [g.shape[1] for g in self.payoff]

    @property
    def one_player(self) -> bool:
        return all(b == 1 for b in self.actions_b)

    @property
    def deterministic(self) -> bool:
        return all(np.all((q == 0.0) | (q == 1.0)) for q in self.transition)

    def uniform_transition(self, w: int) -> bool:
        """True when the next-state law at w does not depend on the actions"""
        q = self.transition[w]
        return bool(np.all(q == q[0, 0]))

    def max_plus_matrix(self) -> np.ndarray:
        """Weights W[w, w'] of a deterministic one-player game"""
        if not (self.one_player and self.deterministic):
            raise DomainError("only deterministic one-player games are max-plus operators")
        W = np.full((self.states, self.states), NEG_INF)
        for w, (g, q) in enumerate(zip(self.payoff, self.transition)):
            targets = np.argmax(q[:, 0, :], axis=1)
            for a, target in enumerate(targets):
                W[w, target] = max(W[w, target], g[a, 0])
        return W

    @classmethod
    def from_max_plus(cls, A) -> 'GameSpec':
        """One-player deterministic game with T(x)_i = max_j A_ij + x_j"""
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError("max-plus matrices must be square")
        n = A.shape[0]
        payoff, transition = [], []
        for i in range(n):
            cols = np.flatnonzero(np.isfinite(A[i]))
            if cols.size == 0:
                raise DomainError(f"max-plus row {i} has no finite entry, T would leave R^n")
            payoff.append(A[i, cols].reshape(-1, 1))
            q = np.zeros((cols.size, 1, n))
            q[np.arange(cols.size), 0, cols] = 1.0
            transition.append(q)
        return cls(tuple(payoff), tuple(transition))

    @classmethod
    def from_dict(cls, data: dict) -> 'GameSpec':
        game = cls(tuple(data['payoff']), tuple(data['transition']))
        if 'states' in data and data['states'] != game.states:
            raise DimensionError(f"declared {data['states']} states, found {game.states}")
        for key, found in (('actions_a', game.actions_a), ('actions_b', game.actions_b)):
            if key in data and list(data[key]) != found:
                raise DimensionError(f"declared {key}={data[key]}, found {found}")
        return game

    def to_dict(self) -> dict:
        return {
            'states': self.states,
            'actions_a': self.actions_a,
            'actions_b': self.actions_b,
            'payoff': [g.tolist() for g in self.payoff],
            'transition': [q.tolist() for q in self.transition],
        }


def negate_game(game: GameSpec) -> GameSpec:
    """The game whose Shapley operator is x -> -T(-x): players swapped, payoff -G^T"""
    return GameSpec(
        tuple(-g.T for g in game.payoff),
        tuple(np.transpose(q, (1, 0, 2)) for q in game.transition),
    )


# ============================================
# MATRIX GAMES
# ============================================

@dataclass
class GameValue:
    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray
    method: str


def _maximin_lp(A: np.ndarray) -> np.ndarray:
    """Optimal mixed strategy of the maximizing row player"""
    m, n = A.shape
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A.T, np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    res = linprog(
        c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0],
        bounds=[(0, None)] * m + [(None, None)], method='highs',
        options={'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10},
    )
    if res.status != 0:
        raise ConvergenceError(f"matrix game LP failed: {res.message}")
    p = np.clip(res.x[:m], 0.0, None)
    return p / p.sum()


def _equalize(A: np.ndarray, rows: np.ndarray, cols: np.ndarray):
    """Solve A_IJ^T p = v 1, sum p = 1 on the supports; None when singular"""
    k = rows.size
    if k != cols.size:
        return None
    system = np.zeros((k + 1, k + 1))
    system[:k, :k] = A[np.ix_(rows, cols)].T
    system[:k, k] = -1.0
    system[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        return None
    if np.any(sol[:k] < -1e-12):
        return None
    p = np.zeros(A.shape[0])
    p[rows] = np.clip(sol[:k], 0.0, None)
    return p / p.sum(), sol[k]


def matrix_game_value(payoff) -> GameValue:
    """Minimax value of a finite matrix game (row player maximizes)"""
    A = np.atleast_2d(np.array(payoff, dtype=float))
    m, n = A.shape
    if m > Config.MAX_GAME_SIZE or n > Config.MAX_GAME_SIZE:
        raise DomainError(f"matrix games are capped at {Config.MAX_GAME_SIZE}x{Config.MAX_GAME_SIZE}")

    row_mins = A.min(axis=1)
    col_maxs = A.max(axis=0)
    i, j = int(np.argmax(row_mins)), int(np.argmin(col_maxs))
    if row_mins[i] == col_maxs[j]:
        p, q = np.zeros(m), np.zeros(n)
        p[i] = q[j] = 1.0
        return GameValue(float(A[i, j]), p, q, 'saddle')

    p = _maximin_lp(A)
    q = _maximin_lp(-A.T)
    lower, upper = float(np.min(p @ A)), float(np.max(A @ q))

    # Polish to the exact vertex when the supports give a square equalizing system
    rows, cols = np.flatnonzero(p > 1e-9), np.flatnonzero(q > 1e-9)
    row_fix, col_fix = _equalize(A, rows, cols), _equalize(-A.T, cols, rows)
    if row_fix is not None and col_fix is not None:
        p2, v_row = row_fix
        q2, v_col = col_fix
        v_col = -v_col
        scale = max(1.0, float(np.max(np.abs(A))))
        if (np.min(p2 @ A) >= v_row - 1e-12 * scale and np.max(A @ q2) <= v_col + 1e-12 * scale
                and abs(v_row - v_col) <= 1e-12 * scale):
            return GameValue(float((v_row + v_col) / 2), p2, q2, 'lp')
    return GameValue((lower + upper) / 2, p, q, 'lp')


def fictitious_play(payoff, rounds: int = 100000):
    """
    Brown-Robinson fictitious play.

    Returns (lower, upper, p, q): empirical strategies and the bracket
    min_j (pA)_j <= value <= max_i (Aq)_i they certify.
    """
    A = np.atleast_2d(np.array(payoff, dtype=float))
    m, n = A.shape
    row_counts, col_counts = np.zeros(m), np.zeros(n)
    row_payoff, col_payoff = np.zeros(m), np.zeros(n)
    i = 0
    for _ in range(rounds):
        row_counts[i] += 1
        col_payoff += A[i]
        j = int(np.argmin(col_payoff))
        col_counts[j] += 1
        row_payoff += A[:, j]
        i = int(np.argmax(row_payoff))
    p, q = row_counts / rounds, col_counts / rounds
    return float(np.min(p @ A)), float(np.max(A @ q)), p, q


# ============================================
# SHAPLEY OPERATOR
# ============================================

def _state_value(game: GameSpec, w: int, x: np.ndarray) -> float:
    g, q = game.payoff[w], game.transition[w]
    if game.uniform_transition(w):
        # Continuation is the same for every action pair, only the stage game matters
        cached = game._value_cache.get(w)
        if cached is None:
            cached = matrix_game_value(g).value
            game._value_cache[w] = cached
        return cached + float(q[0, 0] @ x)
    M = g + q @ x
    if M.shape[1] == 1:
        return float(np.max(M))
    if M.shape[0] == 1:
        return float(np.min(M))
    return matrix_game_value(M).value


def shapley_apply(game: GameSpec, x, pool: Optional[ThreadPoolExecutor] = None) -> np.ndarray:
    """T(x)(w) = value of the matrix game g(.,.,w) + sum_w' q(w'|.,.,w) x(w')"""
    x = np.asarray(x, dtype=float)
    if x.shape != (game.states,):
        raise DimensionError(f"expected a value vector of length {game.states}, got shape {x.shape}")
    if pool is not None:
        return np.array(list(pool.map(lambda w: _state_value(game, w, x), range(game.states))))
    return np.array([_state_value(game, w, x) for w in range(game.states)])


# ============================================
# MAX-CYCLE MEAN
# ============================================

def karp_cycle_mean(weights) -> float:
    """Maximum cycle mean of a weighted digraph (-inf = no edge), by Karp's recurrence"""
    W = np.array(weights, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError("cycle-mean weights must be a square matrix")
    n = W.shape[0]
    # D[k, v]: best weight of a walk with k edges ending at v, from a super-source
    D = np.full((n + 1, n), NEG_INF)
    D[0] = 0.0
    for k in range(1, n + 1):
        D[k] = np.max(D[k - 1][:, None] + W, axis=0)

    best = NEG_INF
    for v in range(n):
        if not np.isfinite(D[n, v]):
            continue
        ratios = [(D[n, v] - D[k, v]) / (n - k) for k in range(n) if np.isfinite(D[k, v])]
        best = max(best, min(ratios))
    if not np.isfinite(best):
        raise DomainError("graph has no finite-weight cycle")
    return float(best)


def max_plus_potential(W: np.ndarray, lam: float) -> np.ndarray:
    """
    y_i = max_j (W - lam)*_ij, the Kleene-star row maxima.

    For max-plus T(x)_i = max_j W_ij + x_j this gives T(y) <= y + lam.
    """
    n = W.shape[0]
    D = W - lam
    star = np.full((n, n), NEG_INF)
    np.fill_diagonal(star, 0.0)
    star = np.maximum(star, D)
    for k in range(n):
        star = np.maximum(star, star[:, k][:, None] + star[k, :][None, :])
    return np.max(star, axis=1)


# ============================================
# RATES
# ============================================

@dataclass
class GameRateResult:
    rho_plus: float
    rho_minus: float
    omega_plus: List[int]
    omega_minus: List[int]
    horizon: int
    iterates: np.ndarray
    omega_plus_violation: float = 0.0
    omega_minus_violation: float = 0.0
    bounds: Dict[str, float] = field(default_factory=dict)
    cycle_mean: Optional[float] = None

    def to_dict(self, include_iterates: bool = False) -> dict:
        out = {
            'rho_plus': self.rho_plus,
            'rho_minus': self.rho_minus,
            'omega_plus': self.omega_plus,
            'omega_minus': self.omega_minus,
            'omega_plus_violation': self.omega_plus_violation,
            'omega_minus_violation': self.omega_minus_violation,
            'horizon': self.horizon,
            'bounds': dict(self.bounds),
            'final_iterate': self.iterates[-1].tolist(),
        }
        if self.cycle_mean is not None:
            out['cycle_mean'] = self.cycle_mean
        if include_iterates:
            out['iterates'] = self.iterates.tolist()
        return out


def _lcm_upto(n: int) -> int:
    out = 1
    for k in range(2, n + 1):
        out = out * k // gcd(out, k)
    return out


def _windows(S: int, K: int) -> List[int]:
    sizes = [c for c in range(1, S + 1) if c <= K]
    full = _lcm_upto(S)
    if full > S and full <= K // 2:
        sizes.append(full)
    return sizes


def coordinate_descent(f, y: np.ndarray, value: float, iterations: int, step: float):
    """Coordinate descent minimizing f; one iteration tries one coordinate both ways"""
    n = y.size
    sweep_improved = False
    for it in range(iterations):
        i = it % n
        for sign in (1.0, -1.0):
            trial = y.copy()
            trial[i] += sign * step
            v = f(trial)
            if v < value:
                y, value, sweep_improved = trial, v, True
                break
        if i == n - 1:
            if not sweep_improved:
                step /= 2
            sweep_improved = False
    return y, value


def _pumping_profile(iterates: np.ndarray, rate: float, sign: float) -> np.ndarray:
    """Per state, the worst over k of sign*(v_k - k*rate); >= -tol certifies"""
    ks = np.arange(iterates.shape[0])[:, None]
    return np.min(sign * (iterates - ks * rate), axis=0)


def game_rate(game: GameSpec, K: int = None, local_search: int = None) -> GameRateResult:
    """Value iteration from 0 with rho_+/rho_- bounds and omega certificates"""
    K = Config.GAME_HORIZON if K is None else K
    local_search = Config.LOCAL_SEARCH_ITERATIONS if local_search is None else local_search
    if K < 1:
        raise DomainError("horizon must be at least 1")
    S = game.states
    pool = ThreadPoolExecutor(max_workers=Config.THREADS) if S >= PARALLEL_STATES else None
    try:
        T = lambda y: shapley_apply(game, y, pool)

        iterates = np.zeros((K + 1, S))
        for k in range(1, K + 1):
            iterates[k] = T(iterates[k - 1])

        ks = np.arange(1, K + 1)
        orbit_plus = float(np.min(np.max(iterates[1:], axis=1) / ks))
        orbit_minus = float(np.max(np.min(iterates[1:], axis=1) / ks))

        def upper(y):
            return float(np.max(T(y) - y))

        def lower(y):
            return float(np.min(T(y) - y))

        plus_probes, minus_probes = [], []
        for c in _windows(S, K):
            window = iterates[K - c:K].mean(axis=0)
            plus_probes.append(window - np.max(iterates[K - 1]))
            minus_probes.append(window - np.min(iterates[K - 1]))

        cycle_mean = None
        if game.deterministic and game.one_player:
            W = game.max_plus_matrix()
            cycle_mean = karp_cycle_mean(W)
            plus_probes.append(max_plus_potential(W, cycle_mean))
        if game.deterministic and all(a == 1 for a in game.actions_a):
            W = negate_game(game).max_plus_matrix()
            minus_probes.append(-max_plus_potential(W, karp_cycle_mean(W)))

        plus_values = [upper(y) for y in plus_probes]
        minus_values = [lower(y) for y in minus_probes]
        best_plus = int(np.argmin(plus_values))
        best_minus = int(np.argmax(minus_values))
        probe_plus, probe_minus = plus_values[best_plus], minus_values[best_minus]

        if local_search and probe_plus > orbit_minus:
            start = plus_probes[best_plus]
            step = max(1e-3, 0.1 * float(np.ptp(start)))
            _, probe_plus = coordinate_descent(upper, start, probe_plus, local_search, step)
        if local_search and probe_minus < orbit_plus:
            start = minus_probes[best_minus]
            step = max(1e-3, 0.1 * float(np.ptp(start)))
            _, neg = coordinate_descent(lambda y: -lower(y), start, -probe_minus, local_search, step)
            probe_minus = -neg
    finally:
        if pool is not None:
            pool.shutdown()

    rho_plus = min(orbit_plus, probe_plus)
    rho_minus = max(orbit_minus, probe_minus)

    tol = 1e-7 * K
    plus_profile = _pumping_profile(iterates, rho_plus, 1.0)
    minus_profile = _pumping_profile(iterates, rho_minus, -1.0)
    omega_plus = [int(w) for w in np.flatnonzero(plus_profile >= -tol)]
    omega_minus = [int(w) for w in np.flatnonzero(minus_profile >= -tol)]
    plus_violation = minus_violation = 0.0
    if not omega_plus:
        w = int(np.argmax(plus_profile))
        omega_plus, plus_violation = [w], float(-plus_profile[w])
        logger.warning(f"⚠️ no state pumps at rate {rho_plus:.6g}; least violator {w} misses by {plus_violation:.3g}")
    if not omega_minus:
        w = int(np.argmax(minus_profile))
        omega_minus, minus_violation = [w], float(-minus_profile[w])
        logger.warning(f"⚠️ no state stays below rate {rho_minus:.6g}; least violator {w} misses by {minus_violation:.3g}")

    logger.debug(f"game_rate: rho_plus={rho_plus:.12g} rho_minus={rho_minus:.12g} K={K}")
    return GameRateResult(
        rho_plus=rho_plus,
        rho_minus=rho_minus,
        omega_plus=omega_plus,
        omega_minus=omega_minus,
        horizon=K,
        iterates=iterates,
        omega_plus_violation=plus_violation,
        omega_minus_violation=minus_violation,
        bounds={'orbit_plus': orbit_plus, 'probe_plus': probe_plus,
                'orbit_minus': orbit_minus, 'probe_minus': probe_minus},
        cycle_mean=cycle_mean,
    )
