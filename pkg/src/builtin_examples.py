"""
Builtin run configurations.

The 1D examples use the dataset (0, 20), (0.25, 30), (0.5, 10), (0.75, 50),
(1, 40) with two domains [x_0, x_2], [x_2, x_4]. The bivariate examples use
the 5 x 5 table below on a quadrant partition; the function-factor tables
come with four x regions and three y regions, so they run on the first four
table columns. Hidden values default to zero.
"""
import copy
from typing import Any, Dict, List

from factor_lang import FACTOR_NAMES


# -----------------------
# Datasets
# -----------------------
KNOTS = [0.0, 0.25, 0.5, 0.75, 1.0]
CURVE_VALUES = [20.0, 30.0, 10.0, 50.0, 40.0]

SURFACE_TABLE = [
    [46.0, 32.0, 65.0, 73.0, 39.0],
    [32.0, 23.0, 84.0, 33.0, 29.0],
    [76.0, 88.0, 58.0, 73.0, 88.0],
    [62.0, 79.0, 33.0, 86.0, 43.0],
    [49.0, 23.0, 39.0, 76.0, 32.0],
]

CURVE_PARTITION = {"domains": [[0, 2], [2, 4]], "gamma": [1, 1, 2, 2]}

QUADRANT_PARTITION = {
    "domains": [[0, 2, 0, 2], [2, 4, 0, 2], [0, 2, 2, 4], [2, 4, 2, 4]],
    "gamma": [[1 + (i >= 2) + 2 * (j >= 2) for j in range(4)] for i in range(4)],
}

STRIP_PARTITION = {
    "domains": [[0, 2, 0, 3], [2, 4, 0, 3]],
    "gamma": [[1 if i < 2 else 2 for _ in range(3)] for i in range(4)],
}


def _by_name(s, s_tilde, s_prime, s_tilde_prime) -> Dict[str, Any]:
    """Factor lists given in (s, s~, s', s~') order"""
    return dict(zip(FACTOR_NAMES, (s, s_prime, s_tilde, s_tilde_prime)))


# -----------------------
# 1D factor pools
# -----------------------
CURVE_FACTORS = {
    "1d-config-1": _by_name(
        [0.3, 0.85, 0.8, 0.5],
        [0.0, 0.0, 0.0, 0.0],
        [0.8, 0.6, 0.4, 0.5],
        [0.19, 0.37, 0.48, 0.43],
    ),
    "1d-config-2": _by_name(
        [0.3, 0.85, 0.8, 0.5],
        [0.64, 0.14, 0.19, 0.49],
        [0.8, 0.6, 0.4, 0.5],
        [0.19, 0.37, 0.48, 0.43],
    ),
    "1d-config-3": _by_name(
        ["2.9*x", "1.9*x", "x", "x"],
        [0.0, 0.0, 0.0, 0.0],
        ["sin(10*x)", "cos(300*x)", "sin(100*x)", "cos(3*x)"],
        ["0.99-abs(sin(10*x))", "0.9-abs(cos(300*x))", "0.95-abs(sin(100*x))", "0.9-abs(cos(3*x))"],
    ),
    "1d-config-4": _by_name(
        ["2.9*x", "1.9*x", "x", "x"],
        ["0.99-2.9*x", "0.99-1.9*x", "0.9-x", "0.9-x"],
        ["sin(10*x)", "cos(300*x)", "sin(100*x)", "cos(3*x)"],
        ["0.99-abs(sin(10*x))", "0.9-abs(cos(300*x))", "0.95-abs(sin(100*x))", "0.9-abs(cos(3*x))"],
    ),
    "1d-zero": _by_name([0.0] * 4, [0.0] * 4, [0.0] * 4, [0.0] * 4),
    "1d-mild": _by_name([0.3] * 4, [0.2] * 4, [0.1] * 4, [0.1] * 4),
}


# -----------------------
# 2D factor pools
# -----------------------
_S_TABLE = [
    [0.9, 0.6, -0.9, 0.7],
    [-0.94, 0.95, 0.3, 0.85],
    [0.5, -0.99, 0.86, 0.79],
    [0.87, 0.92, 0.75, -0.87],
]
_S_TILDE_TABLE = [
    [-0.4, 0.9, -0.65, 0.66],
    [0.9, 0.36, 0.27, 0.25],
    [0.91, -0.89, 0.9, 0.85],
    [0.53, 0.96, -0.49, 0.39],
]
_S_PRIME_TABLE = [
    [-0.47, -0.07, -0.08, 0.14],
    [0.15, -0.04, -0.69, 0.14],
    [0.46, -0.69, 0.04, 0.07],
    [0.07, -0.13, 0.18, -0.02],
]
_S_TILDE_PRIME_TABLE = [
    [0.53, 0.03, 0.27, 0.28],
    [0.09, 0.55, 0.64, 0.72],
    [0.05, 0.01, 0.02, 0.11],
    [0.41, 0.03, 0.48, 0.56],
]
_ZEROS_4x4 = [[0.0] * 4 for _ in range(4)]
_ZEROS_4x3 = [[0.0] * 3 for _ in range(4)]

_FN_S = [
    ["0.45*(cos(x)+sin(y))", "0.9*sin(10*x^2+10*y^2)", "0.9*cos(10*x^2+10*y^2)"],
    ["0.99*cos(10*x^3+10*y^3)", "0.45*(cos(x)-sin(y))", "0.9*sin(x^2+y^9)"],
    ["0.9*cos(50*x+50*y)", "0.99*cos(40*x^3+40*y^3)", "0.9*sin(10*x+10*y)"],
    ["0.9*sin(50*x+50*y)", "0.99*cos(150*x^2+15*y^2)", "0.45*(cos(20*x)-sin(20*y))"],
]
_FN_S_PRIME = [
    ["0.45*(cos(x)+sin(y))", "0.9*sin(10*x^2+10*y^2)", "0.9*cos(30*x^2+30*y^2)"],
    ["0.93*cos(10*x^4+10*y^3)", "0.45*(cos(x)-sin(y))", "0.95*sin(x^2+y^9)"],
    ["0.9*cos(20*x+20*y)", "0.85*cos(30*x^3+40*y^3)", "0.87*sin(20*x+30*y)"],
    ["0.98*sin(40*x+40*y)", "0.93*cos(150*x^2+15*y^2)", "0.4*(cos(30*x)-sin(20*y))"],
]
_FN_S_TILDE_PRIME = [
    ["0.93-0.45*(cos(x)+sin(y))", "0.93-0.9*sin(10*x^2+10*y^2)", "0.92-0.9*cos(30*x^2+30*y^2)"],
    ["0.99-0.93*cos(10*x^4+10*y^3)", "0.91-0.45*(cos(x)-sin(y))", "0.91-0.95*sin(x^2+y^9)"],
    ["0.96-0.9*cos(20*x+20*y)", "0.99-0.85*cos(30*x^3+40*y^3)", "0.92-0.87*sin(20*x+30*y)"],
    ["0.94-0.98*sin(40*x+40*y)", "0.99-0.93*cos(150*x^2+15*y^2)", "0.97-0.4*(cos(30*x)-sin(20*y))"],
]
_FN_S_TILDE_4 = [
    ["0.82-0.45*(cos(x)+sin(y))", "0.84-0.9*sin(10*x^2+10*y^2)", "0.82-0.9*cos(10*x^2+10*y^2)"],
    ["0.79-0.99*cos(10*x^3+10*y^3)", "0.91-0.45*(cos(x)-sin(y))", "0.99-0.9*sin(x^2+y^9)"],
    ["0.96-0.9*cos(50*x+50*y)", "0.69-0.99*cos(40*x^3+40*y^3)", "0.9-0.9*sin(10*x+10*y)"],
    ["0.94-0.9*sin(50*x+50*y)", "0.79-0.99*cos(150*x^2+15*y^2)", "0.93-0.45*(cos(20*x)-sin(20*y))"],
]

SURFACE_FACTORS = {
    "2d-config-1": _by_name(_S_TABLE, _S_TILDE_TABLE, _ZEROS_4x4, _S_TILDE_PRIME_TABLE),
    "2d-config-2": _by_name(_S_TABLE, _S_TILDE_TABLE, _S_PRIME_TABLE, _S_TILDE_PRIME_TABLE),
    "2d-config-3": _by_name(_FN_S, _ZEROS_4x3, _FN_S_PRIME, _FN_S_TILDE_PRIME),
    "2d-config-4": _by_name(_FN_S, _FN_S_TILDE_4, _FN_S_PRIME, _FN_S_TILDE_PRIME),
    "2d-zero": _by_name(_ZEROS_4x4, _ZEROS_4x4, _ZEROS_4x4, _ZEROS_4x4),
    "2d-mild": _by_name(
        [[0.3] * 4 for _ in range(4)], [[0.2] * 4 for _ in range(4)],
        [[0.1] * 4 for _ in range(4)], [[0.1] * 4 for _ in range(4)],
    ),
}


def _curve_config(name: str) -> Dict[str, Any]:
    return {
        "dimension": 1,
        "dataset": {"xs": list(KNOTS), "ys": list(CURVE_VALUES), "zs": [0.0] * len(KNOTS)},
        "partition": copy.deepcopy(CURVE_PARTITION),
        "factors": copy.deepcopy(CURVE_FACTORS[name]),
        "solver": {"grid_points": 4097, "tol": 1e-10, "max_iter": 5000},
        "chaos": {"points": 200000, "burn_in": 1000, "seed": 0},
        "hidden_margin": 0.5,
    }


def _surface_config(name: str) -> Dict[str, Any]:
    columns = 4 if name in ("2d-config-3", "2d-config-4") else 5
    zss = [row[:columns] for row in SURFACE_TABLE]
    return {
        "dimension": 2,
        "dataset": {
            "xs": list(KNOTS),
            "ys": KNOTS[:columns],
            "zss": zss,
            "tss": [[0.0] * columns for _ in zss],
        },
        "partition": copy.deepcopy(STRIP_PARTITION if columns == 4 else QUADRANT_PARTITION),
        "factors": copy.deepcopy(SURFACE_FACTORS[name]),
        "solver": {"grid": [129, 129], "tol": 1e-9, "max_iter": 300},
        "chaos": {"points": 200000, "burn_in": 1000, "seed": 0},
        "hidden_margin": 0.5,
    }


BUILTIN_NAMES: List[str] = list(CURVE_FACTORS) + list(SURFACE_FACTORS)


def builtin_config(name: str) -> Dict[str, Any]:
    """Raw config document of a builtin example (a fresh copy each call)"""
    if name in CURVE_FACTORS:
        return _curve_config(name)
    if name in SURFACE_FACTORS:
        return _surface_config(name)
    raise KeyError(f"unknown example {name!r}; available: {', '.join(BUILTIN_NAMES)}")
