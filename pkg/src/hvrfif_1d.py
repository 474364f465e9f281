"""
One-variable hidden-variable recurrent fractal interpolation.

Every region I_i gets a map W_i(x, ybar) = (L_i(x), F_i(x, ybar)) from its
domain, with

    F_i(x, ybar) = S_i(L_i(x)) (ybar - gbar_k(x)) + hbar_i(L_i(x))

where gbar_k is the line through the endpoint data of domain k = gamma(i)
and hbar_i the line through the endpoint data of region i. The fixed point
of the Read-Bajraktarevic operator built from these maps interpolates the
extended dataset.
"""
import bisect
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from termcolor import colored

from factor_lang import SAFETY_FACTOR, SAMPLES_1D, FactorSet, lipschitz_from_samples
from models import (
    AffineMap,
    ConnectionMatrix,
    ContractionReport,
    HiddenDataset1D,
    MapSystemError,
    Partition1D,
    SampledField1D,
    TrajectoryCloud,
)


ENDPOINT_TOL = 1e-12


def make_L(domain: Tuple[float, float], region: Tuple[float, float], orientation: int = 1) -> AffineMap:
    """
    Affine map sending the domain endpoints onto the region endpoints.

    orientation +1 sends left to left, -1 sends left to right.
    """
    d0, d1 = domain
    r0, r1 = region
    if not (d1 > d0 and r1 > r0):
        raise MapSystemError(f"degenerate interval: domain {domain}, region {region}")
    ratio = (r1 - r0) / (d1 - d0)
    if orientation == 1:
        a, b = ratio, r0 - ratio * d0
    elif orientation == -1:
        a, b = -ratio, r1 + ratio * d0
    else:
        raise MapSystemError(f"orientation must be +1 or -1, got {orientation}")
    if abs(a) >= 1:
        raise MapSystemError(
            f"map from domain [{d0}, {d1}] onto region [{r0}, {r1}] is not a contraction (|a| = {abs(a):.6g})"
        )
    return AffineMap(a=a, b=b)


def _line(x, x0: float, x1: float, v0: np.ndarray, v1: np.ndarray) -> np.ndarray:
    """Linear interpolation written so that x0 -> v0 and x1 -> v1 exactly"""
    t = (np.asarray(x, dtype=float) - x0) / (x1 - x0)
    t = t[..., None]
    return v0 * (1.0 - t) + v1 * t


@dataclass(frozen=True, eq=False)
class BaselineInterpolants1D:
    """
    gbar_k: line through (x_s(k), ybar_s(k)) and (x_e(k), ybar_e(k)).
    hbar_i: line through (x_i, ybar_i) and (x_{i+1}, ybar_{i+1}).
    Both return (..., 2) arrays of (y, z) components.
    """
    dataset: HiddenDataset1D
    domains: Tuple[Tuple[int, int], ...]

    def g(self, k: int, x) -> np.ndarray:
        s, e = self.domains[k]
        ds = self.dataset
        return _line(x, ds.xs[s], ds.xs[e], ds.ybar(s), ds.ybar(e))

    def h(self, i: int, x) -> np.ndarray:
        ds = self.dataset
        return _line(x, ds.xs[i], ds.xs[i + 1], ds.ybar(i), ds.ybar(i + 1))


@dataclass(frozen=True, eq=False)
class SweepPlan1D:
    """Per-grid-point data of one operator sweep (everything except h)"""
    grid: np.ndarray
    preimage: np.ndarray
    factors: np.ndarray
    g_at_preimage: np.ndarray
    h_at_point: np.ndarray
    knot_index: np.ndarray
    knot_values: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        h_u = np.column_stack([
            np.interp(self.preimage, self.grid, values[:, 0]),
            np.interp(self.preimage, self.grid, values[:, 1]),
        ])
        out = np.einsum("nab,nb->na", self.factors, h_u - self.g_at_preimage) + self.h_at_point
        out[self.knot_index] = self.knot_values
        return out


def region_of(xs: np.ndarray, x) -> np.ndarray:
    """Half-open region index [x_i, x_{i+1}); the last knot belongs to the last region"""
    n = len(xs) - 1
    return np.clip(np.searchsorted(xs, x, side="right") - 1, 0, n - 1)


@dataclass(frozen=True, eq=False)
class MapSystem1D:
    dataset: HiddenDataset1D
    partition: Partition1D
    factors: FactorSet
    maps: Tuple[AffineMap, ...]
    baselines: BaselineInterpolants1D

    @property
    def n(self) -> int:
        return self.partition.n

    def domain_interval(self, i: int) -> Tuple[float, float]:
        s, e = self.partition.domain_of(i)
        return float(self.dataset.xs[s]), float(self.dataset.xs[e])

    def region_interval(self, i: int) -> Tuple[float, float]:
        return float(self.dataset.xs[i]), float(self.dataset.xs[i + 1])

    def _F(self, i: int, x, ybar) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = self.maps[i](x)
        k = self.partition.domain_index(i)
        d = np.asarray(ybar, dtype=float) - self.baselines.g(k, x)
        return np.einsum("...ab,...b->...a", self.factors[i].matrix(u), d) + self.baselines.h(i, u)

    def apply_F(self, i: int, x, ybar) -> np.ndarray:
        """F_i(x, ybar) = S_i(L_i(x)) ybar + Q_i(x) for x in the domain of region i"""
        lo, hi = self.domain_interval(i)
        slack = ENDPOINT_TOL * (hi - lo)
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < lo - slack) or np.any(x_arr > hi + slack):
            raise MapSystemError(f"x={x} outside the domain [{lo}, {hi}] of region {i}")
        return self._F(i, x_arr, ybar)

    def q(self, i: int, x) -> np.ndarray:
        """(q_i, q~_i)(x) = -S_i(L_i(x)) gbar_k(x) + hbar_i(L_i(x))"""
        return self._F(i, x, np.zeros(2))

    def W(self, i: int, x, ybar) -> Tuple[np.ndarray, np.ndarray]:
        return self.maps[i](np.asarray(x, dtype=float)), self.apply_F(i, x, ybar)

    def sweep_plan(self, grid: np.ndarray) -> SweepPlan1D:
        xs = self.dataset.xs
        regions = region_of(xs, grid)
        preimage = np.empty_like(grid)
        factors = np.empty((len(grid), 2, 2))
        g_u = np.empty((len(grid), 2))
        h_x = np.empty((len(grid), 2))
        for i in range(self.n):
            idx = np.flatnonzero(regions == i)
            if not len(idx):
                continue
            lo, hi = self.domain_interval(i)
            u = np.clip(self.maps[i].inverse(grid[idx]), lo, hi)
            preimage[idx] = u
            # S_i(L_i(u)) is read at the grid point itself
            factors[idx] = self.factors[i].matrix(grid[idx])
            g_u[idx] = self.baselines.g(self.partition.domain_index(i), u)
            h_x[idx] = self.baselines.h(i, grid[idx])
        knot_index = np.searchsorted(grid, xs)
        if not np.array_equal(grid[knot_index], xs):
            raise ValueError("grid must contain every knot")
        return SweepPlan1D(
            grid=grid, preimage=preimage, factors=factors, g_at_preimage=g_u, h_at_point=h_x,
            knot_index=knot_index, knot_values=self.dataset.values,
        )

    def endpoint_residual(self) -> float:
        """Largest |F_i(x_alpha, ybar_alpha) - ybar_a| over regions and domain endpoints"""
        worst = 0.0
        for i in range(self.n):
            s, e = self.partition.domain_of(i)
            for alpha in (s, e):
                x_alpha = self.dataset.xs[alpha]
                target = self.maps[i](x_alpha)
                a = i if abs(target - self.dataset.xs[i]) <= abs(target - self.dataset.xs[i + 1]) else i + 1
                out = self._F(i, x_alpha, self.dataset.ybar(alpha))
                worst = max(worst, float(np.max(np.abs(out - self.dataset.ybar(a)))))
        return worst


def build_system_1d(dataset: HiddenDataset1D, partition: Partition1D, factors: FactorSet) -> MapSystem1D:
    """
    Assemble the map system; factors with sup >= 1 only produce a warning.

    Raises:
        MapSystemError: factor count mismatch, non-contractive L or a broken endpoint condition
    """
    if factors.dim != 1 or len(factors) != partition.n:
        raise MapSystemError(f"need {partition.n} one-variable factor quadruples, got {len(factors)} ({factors.dim}D)")
    if partition.n != dataset.n:
        raise MapSystemError("partition and dataset disagree on the number of regions")
    xs = dataset.xs
    maps = []
    for i in range(partition.n):
        s, e = partition.domain_of(i)
        maps.append(make_L((xs[s], xs[e]), (xs[i], xs[i + 1]), partition.orientations[i]))
    system = MapSystem1D(
        dataset=dataset,
        partition=partition,
        factors=factors,
        maps=tuple(maps),
        baselines=BaselineInterpolants1D(dataset=dataset, domains=partition.domains),
    )
    scale = max(1.0, float(np.max(np.abs(dataset.values))))
    residual = system.endpoint_residual()
    if residual > ENDPOINT_TOL * scale:
        raise MapSystemError(f"endpoint condition violated by {residual:.3e}")
    for r, name, sup in factors.offending():
        print(colored(f"⚠️  factor {name} of region {r + 1} has estimated sup {sup:.4f} >= 1; system is uncertified", "yellow"))
    return system


def apply_F(sys: MapSystem1D, i: int, x, ybar) -> np.ndarray:
    return sys.apply_F(i, x, ybar)


def make_grid_1d(xs: Sequence[float], grid_points: int) -> np.ndarray:
    """Uniform grid over [x_0, x_n] merged with the knots"""
    xs = np.asarray(xs, dtype=float)
    if grid_points < 2 * len(xs):
        raise ValueError(f"grid_points must be at least {2 * len(xs)}, got {grid_points}")
    uniform = np.linspace(xs[0], xs[-1], grid_points)
    gap = np.min(np.abs(uniform[:, None] - xs[None, :]), axis=1)
    keep = uniform[gap > 1e-12 * (xs[-1] - xs[0])]
    return np.union1d(keep, xs)


def data_interpolant(dataset: HiddenDataset1D, grid: np.ndarray) -> SampledField1D:
    values = np.column_stack([np.interp(grid, dataset.xs, dataset.ys), np.interp(grid, dataset.xs, dataset.zs)])
    return SampledField1D(grid=grid, values=values)


def rb_apply(sys: MapSystem1D, h: SampledField1D, plan: Optional[SweepPlan1D] = None) -> SampledField1D:
    """(Th)(x) = F_i(L_i^{-1}(x), h(L_i^{-1}(x))) on h's grid, knots pinned to the data"""
    plan = plan or sys.sweep_plan(h.grid)
    return SampledField1D(grid=h.grid, values=plan.apply(h.values))


def sup_l1(a: np.ndarray, b: np.ndarray) -> float:
    """sup over nodes of the l1 norm of the component difference"""
    return float(np.max(np.sum(np.abs(a - b), axis=-1)))


def solve_fixed_point_1d(sys: MapSystem1D, grid_points: int = 4097, tol: float = 1e-10,
                         max_iter: int = 5000) -> SampledField1D:
    """
    Iterate the operator from the piecewise-linear data interpolant.

    Returns:
        SampledField1D carrying iterations, the last sup-norm change and the
        converged flag (False when max_iter is hit or a sweep turns non-finite)
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    grid = make_grid_1d(sys.dataset.xs, grid_points)
    plan = sys.sweep_plan(grid)
    values = data_interpolant(sys.dataset, grid).values
    change = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new = plan.apply(values)
        if not np.all(np.isfinite(new)):
            print(colored(f"⚠️  sweep {iterations} produced non-finite values; stopping", "yellow"))
            break
        change = sup_l1(new, values)
        values = new
        if change <= tol:
            converged = True
            break

    if converged:
        print(colored(f"✅ 1D fixed point after {iterations} sweeps (change {change:.3e})", "green"))
    else:
        print(colored(f"⚠️  1D solver stopped after {iterations} sweeps without converging (change {change:.3e})", "yellow"))
    return SampledField1D(
        grid=grid, values=values, iterations=iterations, change=change, converged=converged, tol=tol,
    )


def hidden_bounding_box(values: np.ndarray, margin: float) -> Tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box around the (y, z) data padded by margin * range per coordinate"""
    flat = np.asarray(values, dtype=float).reshape(-1, 2)
    lo = flat.min(axis=0)
    hi = flat.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, margin * span, margin * np.maximum(1.0, np.abs(hi)))
    return lo - pad, hi + pad


def box_alpha(lo: np.ndarray, hi: np.ndarray) -> float:
    """sup of the l1 norm over the box"""
    return float(np.sum(np.maximum(np.abs(lo), np.abs(hi))))


def theta_bound(L_L: float, L_S: float, alpha: float, L_Q: float) -> float:
    denom = L_S * alpha + L_Q
    if denom <= 0:
        return math.inf
    return (1.0 - L_L) / denom


def contraction_report_1d(sys: MapSystem1D, hidden_margin: float = 0.5,
                          samples: Optional[int] = None) -> ContractionReport:
    """Contraction certificate of the map system under the weighted metric rho_theta"""
    sums = [list(quad.column_sums()) for quad in sys.factors]
    S_bar = max(max(pair) for pair in sums)
    factor_sups_ok = not sys.factors.offending()
    L_L = max(m.ratio for m in sys.maps)
    L_S = max(m.ratio * quad.max_lipschitz() for m, quad in zip(sys.maps, sys.factors))

    L_Q = 0.0
    for i in range(sys.n):
        x = np.linspace(*sys.domain_interval(i), samples or SAMPLES_1D)
        L_Q = max(L_Q, SAFETY_FACTOR * lipschitz_from_samples((x,), sys.q(i, x)))

    lo, hi = hidden_bounding_box(sys.dataset.values, hidden_margin)
    alpha = box_alpha(lo, hi)
    theta_max = theta_bound(L_L, L_S, alpha, L_Q)
    certified = bool(S_bar < 1 and theta_max > 0 and factor_sups_ok)
    report = ContractionReport(
        dim=1,
        S_bar=S_bar,
        region_sums=sums,
        L_L=L_L,
        L_S=L_S,
        L_Q=L_Q,
        alpha=alpha,
        theta_max=theta_max,
        factor_sups_ok=factor_sups_ok,
        certified=certified,
        bounds_mode=sys.factors.bounds_mode,
        hidden_margin=hidden_margin,
    )
    if not certified:
        print(colored(f"⚠️  system is not certified (S_bar={S_bar:.6g}, theta_max={theta_max:.6g})", "yellow"))
    return report


def check_row_stochastic(M: ConnectionMatrix, size: int):
    if M.size != size:
        raise ValueError(f"connection matrix is {M.size} x {M.size}, expected {size} x {size}")
    if np.any(M.p < 0) or np.any(np.abs(M.row_sums() - 1.0) > 1e-12):
        raise ValueError("connection matrix is not row-stochastic")


def markov_sequence(M: ConnectionMatrix, steps: int, rng: np.random.Generator, start: int = 0) -> np.ndarray:
    """Map indices t_1..t_steps with t_{k+1} drawn from row t_k of M"""
    cumulative = [list(np.cumsum(row)) for row in M.p]
    last = M.size - 1
    draws = rng.random(steps).tolist()
    seq = np.empty(steps, dtype=int)
    state = start
    for k, u in enumerate(draws):
        state = min(bisect.bisect_right(cumulative[state], u), last)
        seq[k] = state
    return seq


def run_affine_recursion(start: Sequence[float], mats: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """v_{k+1} = mats[k] v_k + offsets[k] for 2-vectors"""
    y, z = float(start[0]), float(start[1])
    out = np.empty((len(mats), 2))
    m = mats.reshape(-1, 4).tolist()
    c = offsets.tolist()
    for k in range(len(m)):
        a, b, cc, d = m[k]
        y, z = a * y + b * z + c[k][0], cc * y + d * z + c[k][1]
        out[k, 0] = y
        out[k, 1] = z
    return out


def chaos_game_1d(sys: MapSystem1D, M: ConnectionMatrix, n_points: int = 200000, burn_in: int = 1000,
                  seed: int = 0) -> TrajectoryCloud:
    """
    Recurrent chaos game starting from (x_0, ybar_0) in the first region.

    Keeps the n_points - burn_in points after the burn-in.

    Raises:
        RuntimeError: a drawn map's domain misses the current point
    """
    if not 0 <= burn_in < n_points:
        raise ValueError(f"need 0 <= burn_in < n_points, got burn_in={burn_in}, n_points={n_points}")
    check_row_stochastic(M, sys.n)
    rng = np.random.default_rng(seed)
    seq = markov_sequence(M, n_points, rng)

    xs_list: List[float] = [float(sys.dataset.xs[0])]
    coeffs = [(m.a, m.b) for m in sys.maps]
    for t in seq.tolist():
        a, b = coeffs[t]
        xs_list.append(a * xs_list[-1] + b)
    x_all = np.array(xs_list)
    x_prev, x_next = x_all[:-1], x_all[1:]

    mats = np.empty((n_points, 2, 2))
    offsets = np.empty((n_points, 2))
    for t in range(sys.n):
        idx = np.flatnonzero(seq == t)
        if not len(idx):
            continue
        lo, hi = sys.domain_interval(t)
        slack = 1e-12 * (hi - lo)
        if np.any(x_prev[idx] < lo - slack) or np.any(x_prev[idx] > hi + slack):
            raise RuntimeError(f"map {t + 1} drawn for a point outside its domain [{lo}, {hi}]")
        S = sys.factors[t].matrix(x_next[idx])
        g = sys.baselines.g(sys.partition.domain_index(t), x_prev[idx])
        mats[idx] = S
        offsets[idx] = sys.baselines.h(t, x_next[idx]) - np.einsum("nab,nb->na", S, g)

    ybar = run_affine_recursion(sys.dataset.ybar(0), mats, offsets)
    if not np.all(np.isfinite(ybar)):
        print(colored("⚠️  chaos game orbit left every bounded set (non-finite values)", "yellow"))
    points = np.column_stack([x_next, ybar])[burn_in:]
    return TrajectoryCloud(points=points, regions=seq[burn_in:], seed=seed, burn_in=burn_in)
