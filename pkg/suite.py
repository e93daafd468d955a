"""
Builtin Suite
=============
Named problems with known escape rates, used by sweeps, the CLI and the system check
"""

import copy

NEG_INF = '-inf'

PROBLEMS = [
    {
        "name": "perron-2x2",
        "description": "T(x) = [[2,1],[1,2]] x; Perron root 3, orbit from (1,1) is (3^k, 3^k)",
        "command": "rate",
        "operator": {"type": "nonneg-matrix", "matrix": [[2.0, 1.0], [1.0, 2.0]]},
        "metric": {"kind": "rfunk"},
        "start": [1.0, 1.0],
        "horizon": 50,
        "geodesic": {"kind": "geometric-mean"},
        "alpha_levels": 6
    },
    {
        "name": "perron-3x3",
        "description": "Positive 3x3 matrix under RFunk",
        "command": "rate",
        "operator": {"type": "nonneg-matrix",
                     "matrix": [[0.5, 0.2, 0.9], [0.3, 0.8, 0.1], [0.6, 0.4, 0.7]]},
        "metric": {"kind": "rfunk"}
    },
    {
        "name": "perron-hilbert",
        "description": "Hilbert's projective metric sees no escape for a linear map",
        "command": "rate",
        "operator": {"type": "nonneg-matrix", "matrix": [[2.0, 1.0], [1.0, 2.0]]},
        "metric": {"kind": "hilbert"}
    },
    {
        "name": "riccati-escape-2",
        "description": "Riccati map with B = e1 e1^T, M = 2I; rate 2 log 2 certified at U = e2 e2^T",
        "command": "rate",
        "operator": {"type": "riccati",
                     "A": [[0.5, 0.1], [0.1, 0.3]],
                     "B": [[1.0, 0.0], [0.0, 0.0]],
                     "M": [[2.0, 0.0], [0.0, 2.0]]},
        "metric": {"kind": "rfunk-plus"}
    },
    {
        "name": "riccati-escape-3",
        "description": "Riccati map with B = e1 e1^T, M = 3I; rate 2 log 3",
        "command": "rate",
        "operator": {"type": "riccati",
                     "A": [[0.4, 0.0], [0.0, 0.9]],
                     "B": [[1.0, 0.0], [0.0, 0.0]],
                     "M": [[3.0, 0.0], [0.0, 3.0]]},
        "metric": {"kind": "thompson"}
    },
    {
        "name": "riccati-scalar",
        "description": "A = B = M = 1: strict contraction to the golden ratio",
        "command": "rate",
        "operator": {"type": "riccati", "A": [[1.0]], "B": [[1.0]], "M": [[1.0]]},
        "metric": {"kind": "thompson"}
    },
    {
        "name": "riccati-horoballs",
        "description": "Superlevel sets of the dual Martin function for the M = 2I Riccati map",
        "command": "horoballs",
        "operator": {"type": "riccati",
                     "A": [[0.5, 0.1], [0.1, 0.3]],
                     "B": [[1.0, 0.0], [0.0, 0.0]],
                     "M": [[2.0, 0.0], [0.0, 2.0]]},
        "levels": [0.0, 1.0, 2.0],
        "samples": 1000
    },
    {
        "name": "identity-cone",
        "description": "Identity on the standard cone",
        "command": "rate",
        "operator": {"type": "identity", "space": "standard-cone-interior", "dimension": 3},
        "metric": {"kind": "rfunk"}
    },
    {
        "name": "identity-vector",
        "description": "Identity on R^2 with the sup norm",
        "command": "rate",
        "operator": {"type": "identity", "space": "real-vector-space", "dimension": 2},
        "metric": {"kind": "norm-sup"}
    },
    {
        "name": "translation-sup",
        "description": "x -> x + (1, 2) under the sup norm; rate 2, certified by e2",
        "command": "rate",
        "operator": {"type": "translation", "c": [1.0, 2.0], "norm": "sup"},
        "metric": {"kind": "norm-sup"},
        "horizon": 1000
    },
    {
        "name": "max-plus-diagonal",
        "description": "Max-plus diag(1, 3) under the top hemi-norm; omega_+ is the second state",
        "command": "rate",
        "operator": {"type": "max-plus", "matrix": [[1.0, NEG_INF], [NEG_INF, 3.0]]},
        "metric": {"kind": "top"},
        "horizon": 1000
    },
    {
        "name": "max-plus-cycle",
        "description": "Two-cycle of weight 3 beats the self-loop of weight 0; cycle mean 1.5",
        "command": "game",
        "operator": {"type": "max-plus", "matrix": [[0.0, 2.0], [1.0, NEG_INF]]}
    },
    {
        "name": "matching-pennies",
        "description": "Single-state matching pennies shifted by 1; value 1",
        "command": "game",
        "game": {"payoff": [[[2.0, 0.0], [0.0, 2.0]]],
                 "transition": [[[[1.0], [1.0]], [[1.0], [1.0]]]]}
    },
    {
        "name": "torus-shift",
        "description": "(x, t) -> (x + 0.3, t + 1): rate 1, minimal displacement 1.3",
        "command": "rate",
        "operator": {"type": "torus-shift", "alpha": 0.3, "t_step": 1.0},
        "horizon": 10000
    },
    {
        "name": "thompson-straight-lines",
        "description": "Straight-line Thompson geodesics on R+^3 are not star-shaped",
        "command": "check-space",
        "operator": {"type": "identity", "space": "standard-cone-interior", "dimension": 3},
        "metric": {"kind": "thompson"},
        "geodesic": {"kind": "thompson-straight"},
        "checks": ["star-shaped"],
        "samples": 2000
    },
    {
        "name": "psd-geometric-mean",
        "description": "Geometric-mean geodesics on S2+ are star-shaped for Thompson",
        "command": "check-space",
        "operator": {"type": "identity", "space": "psd-cone-interior", "dimension": 2},
        "metric": {"kind": "thompson"},
        "geodesic": {"kind": "geometric-mean"},
        "checks": ["triangle", "geodesic", "star-shaped"],
        "samples": 2000
    },
]


def list_problems(command: str = None):
    """Names of the builtin problems, optionally for one command"""
    return [p['name'] for p in PROBLEMS if command is None or p['command'] == command]


def get_problem(name: str):
    """Get a builtin problem by name (a copy, safe to modify)"""
    for problem in PROBLEMS:
        if problem['name'] == name:
            return copy.deepcopy(problem)
    return None


def get_next_problem(current_index: int = 0):
    """Get the next builtin problem in rotation"""
    index = current_index % len(PROBLEMS)
    return copy.deepcopy(PROBLEMS[index]), (index + 1) % len(PROBLEMS)
