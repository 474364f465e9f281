"""
Bivariate hidden-variable recurrent fractal interpolation on a rectangular grid.

Region E_ij is mapped from its domain by the product map Lbar_ij and

    Fbar_ij(xbar, zbar) = Sbar_ij(Lbar_ij(xbar)) (zbar - lbar_k(xbar)) + rbar_ij(Lbar_ij(xbar))

where g is the piecewise-bilinear interpolant of the extended data, lbar_k
the Coons blend of g's traces on the boundary of domain k and rbar_ij the
Coons blend of g's traces on the boundary of E_ij.
"""
import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from termcolor import colored

from factor_lang import SAFETY_FACTOR, FactorSet, lipschitz_from_samples
from hvrfif_1d import (
    ENDPOINT_TOL,
    box_alpha,
    check_row_stochastic,
    hidden_bounding_box,
    make_grid_1d,
    make_L,
    markov_sequence,
    region_of,
    run_affine_recursion,
    sup_l1,
    theta_bound,
)
from models import (
    ConnectionMatrix,
    ContractionReport2D,
    HiddenDataset2D,
    MapSystemError,
    Partition2D,
    ProductMap,
    SampledField2D,
    TrajectoryCloud2D,
    VerificationReport,
)
from settings import SolverSettings


BOUNDARY_TOL = 1e-9
Q_SAMPLES_2D = 129

Rect = Tuple[float, float, float, float]


def make_product_map(domain: Rect, region: Rect, orientation: Tuple[int, int] = (1, 1)) -> ProductMap:
    dx0, dx1, dy0, dy1 = domain
    rx0, rx1, ry0, ry1 = region
    return ProductMap(
        x_map=make_L((dx0, dx1), (rx0, rx1), orientation[0]),
        y_map=make_L((dy0, dy1), (ry0, ry1), orientation[1]),
    )


@dataclass(frozen=True, eq=False)
class DataInterpolant2D:
    """Piecewise-bilinear g through every node (x_i, y_j, z_ij, t_ij)"""
    dataset: HiddenDataset2D

    @cached_property
    def _rgi(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(
            (self.dataset.xs, self.dataset.ys), self.dataset.values,
            method="linear", bounds_error=False, fill_value=None,
        )

    def __call__(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        pts = np.stack([x.ravel(), y.ravel()], axis=-1)
        return self._rgi(pts).reshape(x.shape + (2,))


def coons_blend(g: DataInterpolant2D, rect: Rect, corners: np.ndarray, x, y) -> np.ndarray:
    """
    Transfinite blend of g's traces on the boundary of rect.

    corners holds the data at (X0,Y0), (X1,Y0), (X0,Y1), (X1,Y1).
    """
    X0, X1, Y0, Y1 = rect
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    u = ((x - X0) / (X1 - X0))[..., None]
    v = ((y - Y0) / (Y1 - Y0))[..., None]
    c00, c10, c01, c11 = corners
    edges = (
        (1 - u) * g(np.full_like(x, X0), y) + u * g(np.full_like(x, X1), y)
        + (1 - v) * g(x, np.full_like(y, Y0)) + v * g(x, np.full_like(y, Y1))
    )
    bilinear = (1 - u) * (1 - v) * c00 + u * (1 - v) * c10 + (1 - u) * v * c01 + u * v * c11
    return edges - bilinear


@dataclass(frozen=True, eq=False)
class BlendFunctions2D:
    """g plus the domain blends lbar_k and region blends rbar_ij"""
    dataset: HiddenDataset2D
    partition: Partition2D
    g: DataInterpolant2D
    r_offsets: Dict[Tuple[int, int], float] = field(default_factory=dict)

    def _knot_rect(self, sx: int, ex: int, sy: int, ey: int) -> Tuple[Rect, np.ndarray]:
        ds = self.dataset
        rect = (float(ds.xs[sx]), float(ds.xs[ex]), float(ds.ys[sy]), float(ds.ys[ey]))
        corners = np.array([ds.zbar(sx, sy), ds.zbar(ex, sy), ds.zbar(sx, ey), ds.zbar(ex, ey)])
        return rect, corners

    def l(self, k: int, x, y) -> np.ndarray:
        """Blend over domain k (0-based)"""
        rect, corners = self._knot_rect(*self.partition.domains[k])
        return coons_blend(self.g, rect, corners, x, y)

    def l_for_region(self, i: int, j: int, x, y) -> np.ndarray:
        return self.l(self.partition.domain_index(i, j), x, y)

    def r(self, i: int, j: int, x, y) -> np.ndarray:
        rect, corners = self._knot_rect(i, i + 1, j, j + 1)
        out = coons_blend(self.g, rect, corners, x, y)
        offset = self.r_offsets.get((i, j))
        return out + offset if offset else out

    def with_region_offset(self, i: int, j: int, offset: float) -> "BlendFunctions2D":
        """Copy with rbar_ij shifted by a constant (used to exercise failing checks)"""
        offsets = dict(self.r_offsets)
        offsets[(i, j)] = offset
        return dataclasses.replace(self, r_offsets=offsets)


def build_blends(dataset: HiddenDataset2D, partition: Partition2D) -> BlendFunctions2D:
    return BlendFunctions2D(dataset=dataset, partition=partition, g=DataInterpolant2D(dataset))


@dataclass(frozen=True, eq=False)
class SweepPlan2D:
    gx: np.ndarray
    gy: np.ndarray
    preimage: np.ndarray
    factors: np.ndarray
    l_at_preimage: np.ndarray
    r_at_point: np.ndarray
    pinned: np.ndarray
    pinned_values: np.ndarray
    threads: int = 1

    def _chunk(self, values: np.ndarray, lo: int, hi: int) -> np.ndarray:
        rgi = RegularGridInterpolator((self.gx, self.gy), values, method="linear", bounds_error=False, fill_value=None)
        h_u = rgi(self.preimage[lo:hi])
        return np.einsum("nab,nb->na", self.factors[lo:hi], h_u - self.l_at_preimage[lo:hi]) + self.r_at_point[lo:hi]

    def apply(self, values: np.ndarray, executor: Optional[ThreadPoolExecutor] = None) -> np.ndarray:
        """One sweep on a (nx, ny, 2) value array"""
        total = len(self.preimage)
        if executor is None or self.threads == 1:
            flat = self._chunk(values, 0, total)
        else:
            bounds = np.linspace(0, total, self.threads + 1).astype(int)
            parts = executor.map(lambda b: self._chunk(values, b[0], b[1]), zip(bounds[:-1], bounds[1:]))
            flat = np.concatenate(list(parts))
        out = flat.reshape(len(self.gx), len(self.gy), 2)
        out[self.pinned] = self.pinned_values
        return out


@dataclass(frozen=True, eq=False)
class MapSystem2D:
    dataset: HiddenDataset2D
    partition: Partition2D
    factors: FactorSet
    maps: Tuple[ProductMap, ...]
    blends: BlendFunctions2D

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def m(self) -> int:
        return self.partition.m

    def map_of(self, i: int, j: int) -> ProductMap:
        return self.maps[self.partition.linear(i, j)]

    def domain_rect(self, i: int, j: int) -> Rect:
        sx, ex, sy, ey = self.partition.domain_of(i, j)
        ds = self.dataset
        return float(ds.xs[sx]), float(ds.xs[ex]), float(ds.ys[sy]), float(ds.ys[ey])

    def region_rect(self, i: int, j: int) -> Rect:
        ds = self.dataset
        return float(ds.xs[i]), float(ds.xs[i + 1]), float(ds.ys[j]), float(ds.ys[j + 1])

    def _F(self, i: int, j: int, x, y, zbar) -> np.ndarray:
        u, v = self.map_of(i, j)(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        quad = self.factors[self.partition.linear(i, j)]
        d = np.asarray(zbar, dtype=float) - self.blends.l_for_region(i, j, x, y)
        return np.einsum("...ab,...b->...a", quad.matrix(u, v), d) + self.blends.r(i, j, u, v)

    def apply_F(self, i: int, j: int, x, y, zbar) -> np.ndarray:
        X0, X1, Y0, Y1 = self.domain_rect(i, j)
        sx, sy = ENDPOINT_TOL * (X1 - X0), ENDPOINT_TOL * (Y1 - Y0)
        xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if np.any(xa < X0 - sx) or np.any(xa > X1 + sx) or np.any(ya < Y0 - sy) or np.any(ya > Y1 + sy):
            raise MapSystemError(f"point ({x}, {y}) outside the domain of region ({i}, {j})")
        return self._F(i, j, xa, ya, zbar)

    def q(self, i: int, j: int, x, y) -> np.ndarray:
        """(q_ij, q~_ij)(x, y) = -Sbar_ij(Lbar(x, y)) lbar(x, y) + rbar_ij(Lbar(x, y))"""
        return self._F(i, j, x, y, np.zeros(2))

    def W(self, i: int, j: int, x, y, zbar):
        u, v = self.map_of(i, j)(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return u, v, self.apply_F(i, j, x, y, zbar)

    def corner_residual(self) -> float:
        worst = 0.0
        ds = self.dataset
        for j in range(self.m):
            for i in range(self.n):
                sx, ex, sy, ey = self.partition.domain_of(i, j)
                pm = self.map_of(i, j)
                for a in (sx, ex):
                    for b in (sy, ey):
                        u, v = pm(ds.xs[a], ds.ys[b])
                        ti = i if abs(u - ds.xs[i]) <= abs(u - ds.xs[i + 1]) else i + 1
                        tj = j if abs(v - ds.ys[j]) <= abs(v - ds.ys[j + 1]) else j + 1
                        out = self._F(i, j, ds.xs[a], ds.ys[b], ds.zbar(a, b))
                        worst = max(worst, float(np.max(np.abs(out - ds.zbar(ti, tj)))))
        return worst

    def sweep_plan(self, gx: np.ndarray, gy: np.ndarray, threads: int = 1) -> SweepPlan2D:
        ds = self.dataset
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        px, py = X.ravel(), Y.ravel()
        ri = region_of(ds.xs, px)
        rj = region_of(ds.ys, py)
        total = len(px)
        preimage = np.empty((total, 2))
        factors = np.empty((total, 2, 2))
        l_u = np.empty((total, 2))
        r_x = np.empty((total, 2))
        for j in range(self.m):
            for i in range(self.n):
                idx = np.flatnonzero((ri == i) & (rj == j))
                if not len(idx):
                    continue
                X0, X1, Y0, Y1 = self.domain_rect(i, j)
                u, v = self.map_of(i, j).inverse(px[idx], py[idx])
                u = np.clip(u, X0, X1)
                v = np.clip(v, Y0, Y1)
                preimage[idx, 0] = u
                preimage[idx, 1] = v
                factors[idx] = self.factors[self.partition.linear(i, j)].matrix(px[idx], py[idx])
                l_u[idx] = self.blends.l_for_region(i, j, u, v)
                r_x[idx] = self.blends.r(i, j, px[idx], py[idx])
        on_x = np.isin(gx, ds.xs)
        on_y = np.isin(gy, ds.ys)
        if on_x.sum() != len(ds.xs) or on_y.sum() != len(ds.ys):
            raise ValueError("grid must contain every knot line")
        pinned = on_x[:, None] | on_y[None, :]
        return SweepPlan2D(
            gx=gx, gy=gy, preimage=preimage, factors=factors, l_at_preimage=l_u, r_at_point=r_x,
            pinned=pinned, pinned_values=self.blends.g(X[pinned], Y[pinned]), threads=threads,
        )


def boundary_matching_check(sys: MapSystem2D, samples: int = 1000) -> VerificationReport:
    """
    Residual of the edge conditions along every domain edge:
    Fbar_ij(x_a, y, g(x_a, y)) = g(Lbar_ij(x_a, y)) and the analogue on y_b.
    """
    worst_x = 0.0
    worst_y = 0.0
    g = sys.blends.g
    for j in range(sys.m):
        for i in range(sys.n):
            X0, X1, Y0, Y1 = sys.domain_rect(i, j)
            pm = sys.map_of(i, j)
            ys = np.linspace(Y0, Y1, samples)
            for xa in (X0, X1):
                x = np.full_like(ys, xa)
                u, v = pm(x, ys)
                worst_x = max(worst_x, sup_l1(sys._F(i, j, x, ys, g(x, ys)), g(u, v)))
            xs = np.linspace(X0, X1, samples)
            for yb in (Y0, Y1):
                y = np.full_like(xs, yb)
                u, v = pm(xs, y)
                worst_y = max(worst_y, sup_l1(sys._F(i, j, xs, y, g(xs, y)), g(u, v)))
    return VerificationReport.evaluate(
        "boundary_matching",
        max(worst_x, worst_y),
        BOUNDARY_TOL,
        samples * 4 * sys.partition.N,
        metadata={"x_edges_residual": worst_x, "y_edges_residual": worst_y, "samples_per_edge": samples},
    )


def build_system_2d(dataset: HiddenDataset2D, partition: Partition2D, factors: FactorSet,
                    check_samples: int = 1000) -> MapSystem2D:
    """
    Assemble the bivariate map system and check the corner and edge conditions.

    Raises:
        MapSystemError: factor table mismatch, non-contractive maps or failed boundary conditions
    """
    if factors.dim != 2 or len(factors) != partition.N:
        raise MapSystemError(f"need {partition.N} bivariate factor quadruples, got {len(factors)} ({factors.dim}D)")
    if (partition.n, partition.m) != (dataset.n, dataset.m):
        raise MapSystemError("partition and dataset disagree on the region grid")
    ds = dataset
    maps: List[Optional[ProductMap]] = [None] * partition.N
    for j in range(partition.m):
        for i in range(partition.n):
            sx, ex, sy, ey = partition.domain_of(i, j)
            maps[partition.linear(i, j)] = make_product_map(
                (ds.xs[sx], ds.xs[ex], ds.ys[sy], ds.ys[ey]),
                (ds.xs[i], ds.xs[i + 1], ds.ys[j], ds.ys[j + 1]),
                partition.orientations[i][j],
            )
    system = MapSystem2D(
        dataset=dataset, partition=partition, factors=factors, maps=tuple(maps),
        blends=build_blends(dataset, partition),
    )
    scale = max(1.0, float(np.max(np.abs(ds.values))))
    corner = system.corner_residual()
    if corner > ENDPOINT_TOL * scale:
        raise MapSystemError(f"corner condition violated by {corner:.3e}")
    report = boundary_matching_check(system, check_samples)
    if not report.passed:
        raise MapSystemError(f"edge conditions violated by {report.max_residual:.3e}")
    for r, name, sup in factors.offending():
        i, j = partition.unlinear(r)
        print(colored(f"⚠️  factor {name} of region ({i + 1},{j + 1}) has estimated sup {sup:.4f} >= 1; "
                      f"system is uncertified", "yellow"))
    return system


def make_grid_2d(dataset: HiddenDataset2D, grid: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    return make_grid_1d(dataset.xs, grid[0]), make_grid_1d(dataset.ys, grid[1])


def data_field_2d(sys: MapSystem2D, gx: np.ndarray, gy: np.ndarray) -> SampledField2D:
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    return SampledField2D(gx=gx, gy=gy, values=sys.blends.g(X, Y))


def rb_apply_2d(sys: MapSystem2D, h: SampledField2D, plan: Optional[SweepPlan2D] = None) -> SampledField2D:
    """(Th)(x, y) = Fbar_ij(Lbar_ij^{-1}(x, y), h(Lbar_ij^{-1}(x, y))), knot lines pinned to g"""
    plan = plan or sys.sweep_plan(h.gx, h.gy)
    return SampledField2D(gx=h.gx, gy=h.gy, values=plan.apply(h.values))


def solve_fixed_point_2d(sys: MapSystem2D, grid: Tuple[int, int] = (129, 129), tol: float = 1e-9,
                         max_iter: int = 300, threads: Optional[int] = None) -> SampledField2D:
    """
    Iterate the bivariate operator from g.

    Args:
        grid: (nx, ny) uniform points per axis before the knot lines are merged in
        threads: worker threads per sweep, HVRFIF_THREADS when omitted
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    threads = SolverSettings.from_env(threads=threads).threads
    gx, gy = make_grid_2d(sys.dataset, grid)
    plan = sys.sweep_plan(gx, gy, threads=threads)
    values = data_field_2d(sys, gx, gy).values
    change = math.inf
    converged = False
    iterations = 0
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="sweep") as executor:
        for iterations in range(1, max_iter + 1):
            new = plan.apply(values, executor)
            if not np.all(np.isfinite(new)):
                print(colored(f"⚠️  sweep {iterations} produced non-finite values; stopping", "yellow"))
                break
            change = sup_l1(new, values)
            values = new
            if change <= tol:
                converged = True
                break

    if converged:
        print(colored(f"✅ 2D fixed point after {iterations} sweeps (change {change:.3e})", "green"))
    else:
        print(colored(f"⚠️  2D solver stopped after {iterations} sweeps without converging (change {change:.3e})", "yellow"))
    return SampledField2D(
        gx=gx, gy=gy, values=values, iterations=iterations, change=change, converged=converged, tol=tol,
    )


def contraction_report_2d(sys: MapSystem2D, hidden_margin: float = 0.5,
                          samples: Optional[int] = None) -> ContractionReport2D:
    sums = [list(quad.column_sums()) for quad in sys.factors]
    S_bar = max(max(pair) for pair in sums)
    factor_sups_ok = not sys.factors.offending()
    c_L = max(pm.ratio for pm in sys.maps)
    L_S = max(pm.ratio * quad.max_lipschitz() for pm, quad in zip(sys.maps, sys.factors))

    count = samples or Q_SAMPLES_2D
    L_Q = 0.0
    for j in range(sys.m):
        for i in range(sys.n):
            X0, X1, Y0, Y1 = sys.domain_rect(i, j)
            X, Y = np.meshgrid(np.linspace(X0, X1, count), np.linspace(Y0, Y1, count), indexing="ij")
            L_Q = max(L_Q, SAFETY_FACTOR * lipschitz_from_samples((X, Y), sys.q(i, j, X, Y)))

    lo, hi = hidden_bounding_box(sys.dataset.values, hidden_margin)
    alpha = box_alpha(lo, hi)
    theta_max = theta_bound(c_L, L_S, alpha, L_Q)
    certified = bool(S_bar < 1 and theta_max > 0 and factor_sups_ok)
    report = ContractionReport2D(
        S_bar=S_bar,
        region_sums=sums,
        L_L=c_L,
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
        print(colored(f"⚠️  bivariate system is not certified (S_bar={S_bar:.6g}, theta_max={theta_max:.6g})", "yellow"))
    return report


def chaos_game_2d(sys: MapSystem2D, M: ConnectionMatrix, n_points: int = 200000, burn_in: int = 1000,
                  seed: int = 0) -> TrajectoryCloud2D:
    """
    Recurrent chaos game over regions linearised as i + j*n, starting from
    (x_0, y_0, zbar_00) in region (0, 0).
    """
    if not 0 <= burn_in < n_points:
        raise ValueError(f"need 0 <= burn_in < n_points, got burn_in={burn_in}, n_points={n_points}")
    check_row_stochastic(M, sys.partition.N)
    rng = np.random.default_rng(seed)
    seq = markov_sequence(M, n_points, rng)

    coeffs = [(pm.x_map.a, pm.x_map.b, pm.y_map.a, pm.y_map.b) for pm in sys.maps]
    x, y = float(sys.dataset.xs[0]), float(sys.dataset.ys[0])
    pos = np.empty((n_points + 1, 2))
    pos[0] = x, y
    for k, t in enumerate(seq.tolist(), start=1):
        ax, bx, ay, by = coeffs[t]
        x, y = ax * x + bx, ay * y + by
        pos[k, 0] = x
        pos[k, 1] = y
    prev, nxt = pos[:-1], pos[1:]

    mats = np.empty((n_points, 2, 2))
    offsets = np.empty((n_points, 2))
    for t in range(sys.partition.N):
        idx = np.flatnonzero(seq == t)
        if not len(idx):
            continue
        i, j = sys.partition.unlinear(t)
        X0, X1, Y0, Y1 = sys.domain_rect(i, j)
        sx, sy = 1e-12 * (X1 - X0), 1e-12 * (Y1 - Y0)
        px, py = prev[idx, 0], prev[idx, 1]
        if np.any(px < X0 - sx) or np.any(px > X1 + sx) or np.any(py < Y0 - sy) or np.any(py > Y1 + sy):
            raise RuntimeError(f"map ({i + 1},{j + 1}) drawn for a point outside its domain")
        S = sys.factors[t].matrix(nxt[idx, 0], nxt[idx, 1])
        l_prev = sys.blends.l_for_region(i, j, px, py)
        mats[idx] = S
        offsets[idx] = sys.blends.r(i, j, nxt[idx, 0], nxt[idx, 1]) - np.einsum("nab,nb->na", S, l_prev)

    zbar = run_affine_recursion(sys.dataset.zbar(0, 0), mats, offsets)
    if not np.all(np.isfinite(zbar)):
        print(colored("⚠️  chaos game orbit left every bounded set (non-finite values)", "yellow"))
    points = np.column_stack([nxt, zbar])[burn_in:]
    return TrajectoryCloud2D(points=points, regions=seq[burn_in:], seed=seed, burn_in=burn_in)
