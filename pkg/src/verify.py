from typing import Dict, List, Optional, Union

import numpy as np
from termcolor import colored

from hvrfif_1d import (
    MapSystem1D,
    contraction_report_1d,
    data_interpolant,
    hidden_bounding_box,
    make_grid_1d,
    rb_apply,
    region_of,
)
from hvrfif_2d import (
    MapSystem2D,
    boundary_matching_check,
    contraction_report_2d,
    data_field_2d,
    make_grid_2d,
    rb_apply_2d,
)
from models import (
    CheckStatus,
    ContractionReport,
    HiddenDataset1D,
    HiddenDataset2D,
    SampledField1D,
    SampledField2D,
    TrajectoryCloud,
    TrajectoryCloud2D,
    VerificationReport,
)


KNOT_TOL = 1e-9
RATIO_SLACK = 1e-9
SEAM_TOL = 1e-9

MapSystem = Union[MapSystem1D, MapSystem2D]
Field = Union[SampledField1D, SampledField2D]


def _report_for(sys: MapSystem) -> ContractionReport:
    if isinstance(sys, MapSystem2D):
        return contraction_report_2d(sys)
    return contraction_report_1d(sys)


def knot_interpolation_residual(field: Field, dataset: Union[HiddenDataset1D, HiddenDataset2D]) -> VerificationReport:
    """Largest |f1 - y| or |f2 - z| over the knots"""
    if isinstance(field, SampledField2D):
        X, Y = np.meshgrid(dataset.xs, dataset.ys, indexing="ij")
        got = field(X, Y)
    else:
        got = field(dataset.xs)
    diff = np.abs(got - dataset.values)
    residual = float(np.max(diff)) if np.all(np.isfinite(diff)) else float("inf")
    return VerificationReport.evaluate(
        "knot_interpolation", residual, KNOT_TOL, diff.shape[0] * (diff.shape[1] if diff.ndim == 3 else 1),
        metadata={"f1_residual": float(np.max(diff[..., 0])), "f2_residual": float(np.max(diff[..., 1]))},
    )


def _operator_values_1d(sys: MapSystem1D, field: SampledField1D, nodes: np.ndarray) -> np.ndarray:
    """F_i(L_i^{-1}(x), f(L_i^{-1}(x))) at the given grid nodes, f read through its evaluator"""
    x = field.grid[nodes]
    regions = region_of(sys.dataset.xs, x)
    out = np.empty((len(x), 2))
    for i in np.unique(regions).tolist():
        idx = np.flatnonzero(regions == i)
        lo, hi = sys.domain_interval(i)
        u = np.clip(sys.maps[i].inverse(x[idx]), lo, hi)
        out[idx] = sys._F(i, u, field(u))
    return out


def _operator_values_2d(sys: MapSystem2D, field: SampledField2D, nodes: np.ndarray) -> np.ndarray:
    ix, iy = np.unravel_index(nodes, (len(field.gx), len(field.gy)))
    x, y = field.gx[ix], field.gy[iy]
    ri = region_of(sys.dataset.xs, x)
    rj = region_of(sys.dataset.ys, y)
    out = np.empty((len(x), 2))
    for r in np.unique(ri + rj * sys.n).tolist():
        i, j = sys.partition.unlinear(r)
        idx = np.flatnonzero((ri == i) & (rj == j))
        X0, X1, Y0, Y1 = sys.domain_rect(i, j)
        u, v = sys.map_of(i, j).inverse(x[idx], y[idx])
        u, v = np.clip(u, X0, X1), np.clip(v, Y0, Y1)
        out[idx] = sys._F(i, j, u, v, field(u, v))
    return out


def functional_equation_residual(sys: MapSystem, field: Field, samples: int = 10000, seed: int = 0,
                                 report: Optional[ContractionReport] = None) -> VerificationReport:
    """
    Self-referential equation residual sup ||f(x) - F(L^{-1}(x), f(L^{-1}(x)))||_1
    over seeded grid nodes. Nodes are drawn without replacement while the grid
    has enough of them and with replacement beyond that.

    The threshold is 1.1 tol / (1 - S_bar) for certified systems; a
    non-converged field gets threshold 0 and fails.
    """
    report = report or _report_for(sys)
    rng = np.random.default_rng(seed)
    total = field.values.shape[0] if isinstance(field, SampledField1D) else field.values.shape[0] * field.values.shape[1]
    nodes = rng.choice(total, size=samples, replace=samples > total)
    if isinstance(field, SampledField2D):
        own = field.values.reshape(-1, 2)[nodes]
        mapped = _operator_values_2d(sys, field, nodes)
    else:
        own = field.values[nodes]
        mapped = _operator_values_1d(sys, field, nodes)
    diff = np.abs(own - mapped)
    residual = float(np.max(diff.sum(axis=1))) if len(diff) else 0.0
    if not np.isfinite(residual):
        residual = float("inf")

    informational = False
    if not field.converged:
        threshold = 0.0
    elif report.S_bar < 1:
        threshold = 1.1 * field.tol / (1.0 - report.S_bar)
    else:
        threshold = 1.1 * field.tol
        informational = True
    return VerificationReport.evaluate(
        "functional_equation",
        residual,
        threshold,
        len(nodes),
        metadata={
            "seed": seed,
            "converged": field.converged,
            "iterations": field.iterations,
            "S_bar": report.S_bar,
            "f1_residual": float(np.max(diff[:, 0])) if len(diff) else 0.0,
            "f2_residual": float(np.max(diff[:, 1])) if len(diff) else 0.0,
        },
        informational=informational,
    )


def empirical_contraction_ratio(sys: MapSystem, pairs: int = 20, seed: int = 0,
                                report: Optional[ContractionReport] = None,
                                grid: Optional[int] = None) -> VerificationReport:
    """max ||Th - Th'|| / ||h - h'|| over random field pairs, compared with S_bar"""
    report = report or _report_for(sys)
    rng = np.random.default_rng(seed)
    if isinstance(sys, MapSystem2D):
        gx, gy = make_grid_2d(sys.dataset, (grid or 33, grid or 33))
        base = data_field_2d(sys, gx, gy)
        plan = sys.sweep_plan(gx, gy)
        make = lambda values: SampledField2D(gx=gx, gy=gy, values=values)
        apply = lambda h: rb_apply_2d(sys, h, plan).values
        grid_desc = [len(gx), len(gy)]
    else:
        g = make_grid_1d(sys.dataset.xs, grid or 1025)
        base = data_interpolant(sys.dataset, g)
        plan = sys.sweep_plan(g)
        make = lambda values: SampledField1D(grid=g, values=values)
        apply = lambda h: rb_apply(sys, h, plan).values
        grid_desc = [len(g)]

    flat = sys.dataset.values.reshape(-1, 2)
    scale = np.maximum(flat.max(axis=0) - flat.min(axis=0), 1.0)
    worst = 0.0
    for _ in range(pairs):
        h1 = base.values + rng.normal(size=base.values.shape) * scale
        h2 = base.values + rng.normal(size=base.values.shape) * scale
        before = float(np.max(np.sum(np.abs(h1 - h2), axis=-1)))
        after = float(np.max(np.sum(np.abs(apply(make(h1)) - apply(make(h2))), axis=-1)))
        if before > 0:
            worst = max(worst, after / before)
    return VerificationReport.evaluate(
        "empirical_contraction",
        worst,
        report.S_bar + RATIO_SLACK,
        pairs,
        metadata={"seed": seed, "grid": grid_desc, "S_bar": report.S_bar},
        informational=not report.certified,
    )


def rho_theta_check(sys: MapSystem, report: ContractionReport, pairs: int = 100,
                    seed: int = 0) -> VerificationReport:
    """
    Sampled metric contraction rho_theta(W p, W q) <= s rho_theta(p, q) with
    theta = theta_max / 2 and s = max(L_L + theta (L_S alpha + L_Q), S_bar).
    """
    if not report.certified:
        return VerificationReport.not_applicable(
            "rho_theta", "system is not certified", metadata={"S_bar": report.S_bar, "seed": seed}
        )
    theta = report.theta()
    s = report.contraction_constant(theta)
    rng = np.random.default_rng(seed)
    lo, hi = hidden_bounding_box(sys.dataset.values, report.hidden_margin)
    ybar_p = rng.uniform(lo, hi, size=(pairs, 2))
    ybar_q = rng.uniform(lo, hi, size=(pairs, 2))
    ratios = np.zeros(pairs)

    if isinstance(sys, MapSystem2D):
        regions = rng.integers(0, sys.partition.N, size=pairs)
        unit = rng.random((pairs, 4))
        for r in np.unique(regions).tolist():
            idx = np.flatnonzero(regions == r)
            i, j = sys.partition.unlinear(r)
            X0, X1, Y0, Y1 = sys.domain_rect(i, j)
            px = X0 + unit[idx, 0] * (X1 - X0)
            py = Y0 + unit[idx, 1] * (Y1 - Y0)
            qx = X0 + unit[idx, 2] * (X1 - X0)
            qy = Y0 + unit[idx, 3] * (Y1 - Y0)
            pu, pv, pf = sys.W(i, j, px, py, ybar_p[idx])
            qu, qv, qf = sys.W(i, j, qx, qy, ybar_q[idx])
            before = np.abs(px - qx) + np.abs(py - qy) + theta * np.sum(np.abs(ybar_p[idx] - ybar_q[idx]), axis=1)
            after = np.abs(pu - qu) + np.abs(pv - qv) + theta * np.sum(np.abs(pf - qf), axis=1)
            ratios[idx] = after / before
    else:
        regions = rng.integers(0, sys.n, size=pairs)
        unit = rng.random((pairs, 2))
        for i in np.unique(regions).tolist():
            idx = np.flatnonzero(regions == i)
            a, b = sys.domain_interval(i)
            px = a + unit[idx, 0] * (b - a)
            qx = a + unit[idx, 1] * (b - a)
            pu, pf = sys.W(i, px, ybar_p[idx])
            qu, qf = sys.W(i, qx, ybar_q[idx])
            before = np.abs(px - qx) + theta * np.sum(np.abs(ybar_p[idx] - ybar_q[idx]), axis=1)
            after = np.abs(pu - qu) + theta * np.sum(np.abs(pf - qf), axis=1)
            ratios[idx] = after / before

    worst = float(np.max(ratios))
    return VerificationReport.evaluate(
        "rho_theta",
        worst,
        s + RATIO_SLACK,
        pairs,
        metadata={"seed": seed, "theta": theta, "s": s, "violations": int(np.sum(ratios > s + RATIO_SLACK))},
    )


def cloud_vs_field(cloud: Union[TrajectoryCloud, TrajectoryCloud2D], field: Field,
                   threshold: float) -> VerificationReport:
    """Largest vertical distance from the chaos-game points to the graph of f1"""
    pts = cloud.points
    if len(pts) == 0:
        residual = 0.0
    elif isinstance(field, SampledField2D):
        residual = float(np.max(np.abs(pts[:, 2] - field(pts[:, 0], pts[:, 1])[:, 0])))
    else:
        residual = float(np.max(np.abs(pts[:, 1] - field(pts[:, 0])[:, 0])))
    if not np.isfinite(residual):
        residual = float("inf")
    return VerificationReport.evaluate(
        "cloud_vs_field", residual, threshold, len(pts),
        metadata={"seed": cloud.seed, "burn_in": cloud.burn_in},
    )


def region_seam_residual(sys: MapSystem, field: Field, samples: int = 200) -> VerificationReport:
    """
    Jump between the images produced by the two regions meeting at each
    interior knot (line), before knot pinning. Reported informationally.
    """
    worst = 0.0
    count = 0
    ds = sys.dataset
    if isinstance(sys, MapSystem2D):
        def image(i: int, j: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
            X0, X1, Y0, Y1 = sys.domain_rect(i, j)
            u, v = sys.map_of(i, j).inverse(x, y)
            u, v = np.clip(u, X0, X1), np.clip(v, Y0, Y1)
            return sys._F(i, j, u, v, field(u, v))

        for j in range(sys.m):
            y = np.linspace(ds.ys[j], ds.ys[j + 1], samples)
            for i in range(1, sys.n):
                x = np.full_like(y, ds.xs[i])
                jump = np.sum(np.abs(image(i - 1, j, x, y) - image(i, j, x, y)), axis=-1)
                worst = max(worst, float(np.max(jump)))
                count += samples
        for i in range(sys.n):
            x = np.linspace(ds.xs[i], ds.xs[i + 1], samples)
            for j in range(1, sys.m):
                y = np.full_like(x, ds.ys[j])
                jump = np.sum(np.abs(image(i, j - 1, x, y) - image(i, j, x, y)), axis=-1)
                worst = max(worst, float(np.max(jump)))
                count += samples
    else:
        for i in range(1, sys.n):
            x = ds.xs[i]
            left = sys._F(i - 1, sys.maps[i - 1].inverse(x), field(sys.maps[i - 1].inverse(x)))
            right = sys._F(i, sys.maps[i].inverse(x), field(sys.maps[i].inverse(x)))
            worst = max(worst, float(np.sum(np.abs(left - right))))
            count += 1
    scale = max(1.0, float(np.max(np.abs(ds.values))))
    return VerificationReport.evaluate(
        "region_seams", worst, SEAM_TOL * scale, count, metadata={"samples_per_seam": samples}, informational=True,
    )


class VerificationSuite:
    """Runs every check for one solved system and collects the reports"""

    def __init__(self, system: MapSystem, field: Field, report: ContractionReport,
                 cloud: Optional[Union[TrajectoryCloud, TrajectoryCloud2D]] = None,
                 cloud_threshold: Optional[float] = None, seed: int = 0,
                 residual_samples: int = 10000, contraction_pairs: int = 20, rho_pairs: int = 100):
        self.system = system
        self.field = field
        self.report = report
        self.cloud = cloud
        self.cloud_threshold = cloud_threshold
        self.seed = seed
        self.residual_samples = residual_samples
        self.contraction_pairs = contraction_pairs
        self.rho_pairs = rho_pairs
        self.reports: List[VerificationReport] = []

    def run(self) -> List[VerificationReport]:
        sys, field = self.system, self.field
        self.reports = [
            knot_interpolation_residual(field, sys.dataset),
            functional_equation_residual(sys, field, self.residual_samples, self.seed, self.report),
            empirical_contraction_ratio(sys, self.contraction_pairs, self.seed, self.report),
            rho_theta_check(sys, self.report, self.rho_pairs, self.seed),
            region_seam_residual(sys, field),
        ]
        if isinstance(sys, MapSystem2D):
            self.reports.append(boundary_matching_check(sys))
        if self.cloud is not None:
            threshold = self.cloud_threshold
            if threshold is None:
                flat = sys.dataset.values[..., 0]
                threshold = 0.05 * float(np.max(flat) - np.min(flat))
            self.reports.append(cloud_vs_field(self.cloud, field, threshold))

        for rep in self.reports:
            color = {"pass": "green", "fail": "red"}.get(rep.status.value, "yellow")
            print(colored(f"{rep.check}: {rep.status.value} (residual {rep.max_residual:.3e}, "
                          f"threshold {rep.threshold:.3e})", color))
        return self.reports

    @property
    def passed(self) -> bool:
        return not any(rep.status == CheckStatus.FAIL for rep in self.reports)


def render_summary(reports: List[VerificationReport]) -> str:
    """
    Dashboard text of a verification run

    Args:
        reports: reports in the order they were produced

    Returns:
        str: one block per check followed by a tally line
    """
    if not reports:
        return "=== VERIFICATION ===\nNo checks run."
    lines = ["=== VERIFICATION ==="]
    tally: Dict[str, int] = {status.value: 0 for status in CheckStatus}
    for rep in reports:
        tally[rep.status.value] += 1
        warning = " ⚠️" if rep.status == CheckStatus.FAIL else ""
        lines.append(f"[{rep.check}] {rep.status.value.upper()}{warning}")
        if rep.status == CheckStatus.NOT_APPLICABLE:
            lines.append(f"Reason: {rep.metadata.get('reason', '')}")
        else:
            lines.append(f"Residual: {rep.max_residual:.6g} / threshold {rep.threshold:.6g} ({rep.samples:,} samples)")
        lines.append("")
    lines.append(
        f"Checks: {tally['pass']} passed, {tally['fail']} failed, "
        f"{tally['informational']} informational, {tally['not_applicable']} not applicable"
    )
    return "\n".join(lines)
