from typing import Dict, List, Optional, Tuple, Any
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
import math

import numpy as np
from pydantic import BaseModel, Field
from scipy.interpolate import RegularGridInterpolator


class DatasetError(ValueError):
    """Knots or values violate the dataset invariants"""


class PartitionError(ValueError):
    """Domains, gamma or orientations are inadmissible"""


class ExprSyntaxError(ValueError):
    """Factor expression does not match the grammar"""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ExprEvalError(ValueError):
    """Factor expression failed to evaluate (division by zero, sqrt of a negative, overflow)"""


class MapSystemError(ValueError):
    """Map system cannot be built from the given pieces"""


class ConfigError(ValueError):
    """Run configuration is malformed or inconsistent"""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class BoundsMode(str, Enum):
    """Where sup/Lipschitz bounds of a factor come from."""
    ESTIMATED = "estimated"
    USER_SUPPLIED = "user-supplied"


class CheckStatus(str, Enum):
    """Outcome of a verification check."""
    PASS = "pass"
    FAIL = "fail"
    INFORMATIONAL = "informational"
    NOT_APPLICABLE = "not_applicable"


def frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HiddenDataset1D:
    """Extended 1D dataset: knots, visible values and hidden values"""
    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray

    @property
    def n(self) -> int:
        return len(self.xs) - 1

    @property
    def values(self) -> np.ndarray:
        """(n+1, 2) array of ybar_i = (y_i, z_i)"""
        return np.column_stack([self.ys, self.zs])

    def ybar(self, i: int) -> np.ndarray:
        return np.array([self.ys[i], self.zs[i]])


@dataclass(frozen=True, eq=False)
class HiddenDataset2D:
    """Extended grid dataset: knot vectors, visible values z_ij and hidden values t_ij"""
    xs: np.ndarray
    ys: np.ndarray
    zss: np.ndarray
    tss: np.ndarray

    @property
    def n(self) -> int:
        return len(self.xs) - 1

    @property
    def m(self) -> int:
        return len(self.ys) - 1

    @property
    def values(self) -> np.ndarray:
        """(n+1, m+1, 2) array of zbar_ij = (z_ij, t_ij)"""
        return np.stack([self.zss, self.tss], axis=-1)

    def zbar(self, i: int, j: int) -> np.ndarray:
        return np.array([self.zss[i, j], self.tss[i, j]])


@dataclass(frozen=True)
class Partition1D:
    """
    Recurrent structure of a 1D construction.

    Regions are indexed from 0 (region i spans knots i..i+1). Domains are
    knot-index pairs (s, e) and gamma holds the 1-based domain number of
    every region.
    """
    n: int
    domains: Tuple[Tuple[int, int], ...]
    gamma: Tuple[int, ...]
    orientations: Tuple[int, ...]

    @property
    def l(self) -> int:
        return len(self.domains)

    def domain_index(self, i: int) -> int:
        """0-based domain index assigned to region i"""
        return self.gamma[i] - 1

    def domain_of(self, i: int) -> Tuple[int, int]:
        return self.domains[self.gamma[i] - 1]


@dataclass(frozen=True)
class Partition2D:
    """
    Recurrent structure of a bivariate construction.

    Region (i, j) spans [x_i, x_{i+1}] x [y_j, y_{j+1}] (0-based). Domains
    are knot-index quadruples (s_x, e_x, s_y, e_y); gamma[i][j] is the
    1-based domain number and orientations[i][j] the (x-sign, y-sign) pair.
    """
    n: int
    m: int
    domains: Tuple[Tuple[int, int, int, int], ...]
    gamma: Tuple[Tuple[int, ...], ...]
    orientations: Tuple[Tuple[Tuple[int, int], ...], ...]

    @property
    def l(self) -> int:
        return len(self.domains)

    @property
    def N(self) -> int:
        return self.n * self.m

    def linear(self, i: int, j: int) -> int:
        """0-based linear region index, tau(i+1, j+1) - 1"""
        return i + j * self.n

    def unlinear(self, r: int) -> Tuple[int, int]:
        return r % self.n, r // self.n

    def domain_index(self, i: int, j: int) -> int:
        return self.gamma[i][j] - 1

    def domain_of(self, i: int, j: int) -> Tuple[int, int, int, int]:
        return self.domains[self.gamma[i][j] - 1]


@dataclass(frozen=True, eq=False)
class ConnectionMatrix:
    """Row-stochastic matrix M = (p_st) governing which map may follow which"""
    p: np.ndarray

    @property
    def size(self) -> int:
        return self.p.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.p.sum(axis=1)

    def successors(self, s: int) -> List[int]:
        return [int(t) for t in np.flatnonzero(self.p[s] > 0)]


@dataclass(frozen=True)
class AffineMap:
    """x -> a*x + b"""
    a: float
    b: float

    def __call__(self, x):
        return self.a * x + self.b

    def inverse(self, x):
        return (x - self.b) / self.a

    @property
    def ratio(self) -> float:
        return abs(self.a)


@dataclass(frozen=True)
class ProductMap:
    """(x, y) -> (x_map(x), y_map(y))"""
    x_map: AffineMap
    y_map: AffineMap

    def __call__(self, x, y):
        return self.x_map(x), self.y_map(y)

    def inverse(self, x, y):
        return self.x_map.inverse(x), self.y_map.inverse(y)

    @property
    def ratio(self) -> float:
        return max(self.x_map.ratio, self.y_map.ratio)


@dataclass(frozen=True, eq=False)
class SampledField1D:
    """
    Grid-sampled vector function (f1, f2) on [x_0, x_n].

    Values between grid points are read by piecewise-linear interpolation.
    """
    grid: np.ndarray
    values: np.ndarray
    iterations: int = 0
    change: float = 0.0
    converged: bool = True
    tol: float = 0.0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        f1 = np.interp(x, self.grid, self.values[:, 0])
        f2 = np.interp(x, self.grid, self.values[:, 1])
        return np.stack([f1, f2], axis=-1)

    def hvrfif(self) -> Tuple[np.ndarray, np.ndarray]:
        """Grid and f1, the projection of the attractor onto the data plane"""
        return self.grid, self.values[:, 0]

    def hidden(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.grid, self.values[:, 1]


@dataclass(frozen=True, eq=False)
class SampledField2D:
    """
    Grid-sampled vector function (f1, f2) on E.

    values has shape (len(gx), len(gy), 2); evaluation is bilinear.
    """
    gx: np.ndarray
    gy: np.ndarray
    values: np.ndarray
    iterations: int = 0
    change: float = 0.0
    converged: bool = True
    tol: float = 0.0

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(
            (self.gx, self.gy), self.values, method="linear", bounds_error=False, fill_value=None
        )

    def __call__(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        pts = np.stack([x.ravel(), y.ravel()], axis=-1)
        return self._interpolator(pts).reshape(x.shape + (2,))

    def hvrfif(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.gx, self.gy, self.values[:, :, 0]

    def hidden(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.gx, self.gy, self.values[:, :, 1]


@dataclass(frozen=True, eq=False)
class TrajectoryCloud:
    """Chaos-game sample of the 1D attractor: rows (x, y, z)"""
    points: np.ndarray
    regions: np.ndarray
    seed: int
    burn_in: int


@dataclass(frozen=True, eq=False)
class TrajectoryCloud2D:
    """Chaos-game sample of the bivariate attractor: rows (x, y, z, t)"""
    points: np.ndarray
    regions: np.ndarray
    seed: int
    burn_in: int


class ContractionReport(BaseModel):
    """Contraction certificate of a map system"""
    dim: int = 1
    S_bar: float
    region_sums: List[List[float]]
    L_L: float
    L_S: float
    L_Q: float
    alpha: float
    theta_max: float
    factor_sups_ok: bool
    certified: bool
    bounds_mode: BoundsMode
    hidden_margin: float

    def theta(self) -> float:
        """Metric weight used by the sampled checks: half the admissible bound"""
        if math.isinf(self.theta_max):
            return 1.0
        return self.theta_max / 2.0

    def contraction_constant(self, theta: Optional[float] = None) -> float:
        """s = max(L_L + theta*(L_S*alpha + L_Q), S_bar)"""
        theta = self.theta() if theta is None else theta
        return max(self.L_L + theta * (self.L_S * self.alpha + self.L_Q), self.S_bar)


class ContractionReport2D(ContractionReport):
    """Bivariate certificate; L_L holds c_L, the largest component ratio of the product maps"""
    dim: int = 2

    @property
    def c_L(self) -> float:
        return self.L_L


class VerificationReport(BaseModel):
    """Machine-readable outcome of one verification check"""
    check: str
    max_residual: float
    threshold: float
    samples: int
    passed: bool
    status: CheckStatus
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def evaluate(cls, check: str, residual: float, threshold: float, samples: int,
                 metadata: Optional[Dict[str, Any]] = None,
                 informational: bool = False) -> "VerificationReport":
        passed = bool(residual <= threshold)
        if informational:
            status = CheckStatus.INFORMATIONAL
        else:
            status = CheckStatus.PASS if passed else CheckStatus.FAIL
        return cls(
            check=check,
            max_residual=float(residual),
            threshold=float(threshold),
            samples=int(samples),
            passed=passed,
            status=status,
            metadata=metadata or {},
        )

    @classmethod
    def not_applicable(cls, check: str, reason: str,
                       metadata: Optional[Dict[str, Any]] = None) -> "VerificationReport":
        meta = dict(metadata or {})
        meta["reason"] = reason
        return cls(
            check=check,
            max_residual=float("nan"),
            threshold=float("nan"),
            samples=0,
            passed=False,
            status=CheckStatus.NOT_APPLICABLE,
            metadata=meta,
        )
