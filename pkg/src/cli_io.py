"""
Configuration ingestion, command dispatch and artifact writers.

    python hvrfif.py <validate|solve|chaos|render|verify> --config run.json [--out DIR] [--seed N]
    python hvrfif.py example 1d-config-1 [--out DIR] [--seed N] [--verify]
    python hvrfif.py list

Exit codes: 0 ok, 1 validation failure, 2 verification failure, 3 I/O error.
"""
import argparse
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from termcolor import colored

from builtin_examples import BUILTIN_NAMES, builtin_config
from factor_lang import FACTOR_NAMES, build_factor_set_1d, build_factor_set_2d
from hvrfif_1d import MapSystem1D, build_system_1d, chaos_game_1d, contraction_report_1d, solve_fixed_point_1d
from hvrfif_2d import MapSystem2D, build_system_2d, chaos_game_2d, contraction_report_2d, solve_fixed_point_2d
from models import (
    ConfigError,
    ConnectionMatrix,
    ContractionReport,
    DatasetError,
    HiddenDataset1D,
    HiddenDataset2D,
    Partition1D,
    Partition2D,
    PartitionError,
    SampledField1D,
    SampledField2D,
    TrajectoryCloud,
    TrajectoryCloud2D,
)
from partition import (
    build_partition_1d,
    build_partition_2d,
    connection_matrix_1d,
    connection_matrix_2d,
    validate_dataset_1d,
    validate_dataset_2d,
)
from settings import SolverSettings
from verify import VerificationSuite, render_summary


EXIT_OK = 0
EXIT_INVALID = 1
EXIT_VERIFY_FAILED = 2
EXIT_IO = 3

COMMANDS = ("validate", "solve", "chaos", "render", "verify")


# -----------------------
# Config schema
# -----------------------

class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HiddenRange(_Block):
    low: float
    high: float
    seed: int = 0

    @model_validator(mode="after")
    def _ordered(self) -> "HiddenRange":
        if self.high < self.low:
            raise ValueError("high must not be below low")
        return self


class GeneratedHidden(_Block):
    """Seeded uniform hidden values"""
    hidden: HiddenRange


class DatasetBlock(_Block):
    xs: List[float]
    ys: List[float]
    zs: Optional[Union[List[float], GeneratedHidden]] = None
    zss: Optional[List[List[float]]] = None
    tss: Optional[Union[List[List[float]], GeneratedHidden]] = None


class PartitionBlock(_Block):
    domains: List[List[int]]
    gamma: Union[List[int], List[List[int]]]
    orientations: Optional[Union[List[int], List[List[List[int]]]]] = None


class FactorOverride(_Block):
    expr: Union[float, str]
    sup: Optional[float] = Field(default=None, ge=0)
    lipschitz: Optional[float] = Field(default=None, ge=0)


FactorEntry = Union[float, str, FactorOverride]


class FactorsBlock(_Block):
    s: List[Union[FactorEntry, List[FactorEntry]]]
    s_prime: List[Union[FactorEntry, List[FactorEntry]]]
    s_tilde: List[Union[FactorEntry, List[FactorEntry]]]
    s_tilde_prime: List[Union[FactorEntry, List[FactorEntry]]]
    samples: Optional[int] = Field(default=None, ge=2)

    def tables(self) -> Dict[str, Any]:
        def plain(entry):
            if isinstance(entry, list):
                return [plain(e) for e in entry]
            if isinstance(entry, FactorOverride):
                return entry.model_dump(exclude_none=True)
            return entry
        return {name: plain(getattr(self, name)) for name in FACTOR_NAMES}


class SolverBlock(_Block):
    grid_points: Optional[int] = Field(default=None, ge=4)
    grid: Optional[Tuple[int, int]] = None
    tol: Optional[float] = Field(default=None, gt=0)
    max_iter: Optional[int] = Field(default=None, ge=1)


class ChaosBlock(_Block):
    points: int = Field(default=200000, gt=0)
    burn_in: int = Field(default=1000, ge=0)
    seed: int = Field(default=0, ge=0)


class OutputBlock(_Block):
    dir: Optional[str] = None
    csv: bool = True
    pgm: bool = True


class VerifyBlock(_Block):
    samples: int = Field(default=10000, gt=0)
    pairs: int = Field(default=20, gt=0)
    rho_pairs: int = Field(default=100, gt=0)
    cloud_threshold: Optional[float] = Field(default=None, gt=0)


class RunConfig(_Block):
    """A complete run: dataset, partition, factors and solver/chaos/output settings"""
    dimension: Literal[1, 2]
    dataset: DatasetBlock
    partition: PartitionBlock
    factors: FactorsBlock
    solver: SolverBlock = Field(default_factory=SolverBlock)
    chaos: ChaosBlock = Field(default_factory=ChaosBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)
    verify: VerifyBlock = Field(default_factory=VerifyBlock)
    hidden_margin: float = Field(default=0.5, ge=0)

    @model_validator(mode="after")
    def _burn_in_below_points(self) -> "RunConfig":
        if self.chaos.burn_in >= self.chaos.points:
            raise ValueError("chaos.burn_in must be smaller than chaos.points")
        return self


# -----------------------
# Loading and cross-validation
# -----------------------

def parse_config(raw: Any) -> RunConfig:
    """Schema-check a config document; the first violation is reported with its field path"""
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = ".".join(str(part) for part in first["loc"])
        raise ConfigError(first["msg"], path)


def _generated(block: GeneratedHidden, shape) -> List:
    rng = np.random.default_rng(block.hidden.seed)
    return rng.uniform(block.hidden.low, block.hidden.high, size=shape).tolist()


def _expect_len(values, expected: int, path: str):
    if len(values) != expected:
        raise ConfigError(f"expected {expected} entries, got {len(values)}", path)


def _expect_table(table, rows: int, cols: int, path: str):
    _expect_len(table, rows, path)
    for r, row in enumerate(table):
        if not isinstance(row, list):
            raise ConfigError("expected a table row", f"{path}[{r}]")
        _expect_len(row, cols, f"{path}[{r}]")


def _check_factor_shapes(config: RunConfig, n: int, m: Optional[int]):
    for name in FACTOR_NAMES:
        table = getattr(config.factors, name)
        path = f"factors.{name}"
        if m is None:
            _expect_len(table, n, path)
            for r, entry in enumerate(table):
                if isinstance(entry, list):
                    raise ConfigError("one-variable factors are a flat list", f"{path}[{r}]")
        else:
            _expect_table(table, n, m, path)


def check_consistency(config: RunConfig) -> Tuple[Union[HiddenDataset1D, HiddenDataset2D], Union[Partition1D, Partition2D]]:
    """
    Cross-validate list lengths against the dimension and region counts and
    run the dataset and partition rules.

    Raises:
        ConfigError: carrying the dotted path of the offending block
    """
    ds = config.dataset
    n = len(ds.xs) - 1
    try:
        if config.dimension == 1:
            if ds.zss is not None or ds.tss is not None:
                raise ConfigError("zss/tss belong to 2D datasets", "dataset")
            if ds.zs is None:
                raise ConfigError("hidden values zs are required", "dataset.zs")
            zs = _generated(ds.zs, len(ds.xs)) if isinstance(ds.zs, GeneratedHidden) else ds.zs
            if config.solver.grid is not None:
                raise ConfigError("use grid_points for 1D runs", "solver.grid")
            dataset = validate_dataset_1d(ds.xs, ds.ys, zs)
        else:
            if ds.zs is not None:
                raise ConfigError("zs belongs to 1D datasets", "dataset.zs")
            if ds.zss is None or ds.tss is None:
                raise ConfigError("zss and tss are required", "dataset")
            shape = (len(ds.xs), len(ds.ys))
            _expect_table(ds.zss, *shape, "dataset.zss")
            tss = _generated(ds.tss, shape) if isinstance(ds.tss, GeneratedHidden) else ds.tss
            _expect_table(tss, *shape, "dataset.tss")
            if config.solver.grid_points is not None:
                raise ConfigError("use grid for 2D runs", "solver.grid_points")
            dataset = validate_dataset_2d(ds.xs, ds.ys, ds.zss, tss)
    except DatasetError as exc:
        raise ConfigError(str(exc), "dataset") from exc

    part = config.partition
    try:
        if config.dimension == 1:
            if any(isinstance(g, list) for g in part.gamma):
                raise ConfigError("gamma is a flat list in 1D", "partition.gamma")
            partition = build_partition_1d(dataset, part.domains, part.gamma, part.orientations)
            _check_factor_shapes(config, n, None)
        else:
            m = len(ds.ys) - 1
            _expect_table(part.gamma, n, m, "partition.gamma")
            if part.orientations is not None:
                _expect_table(part.orientations, n, m, "partition.orientations")
            partition = build_partition_2d(dataset, part.domains, part.gamma, part.orientations)
            _check_factor_shapes(config, n, m)
    except PartitionError as exc:
        raise ConfigError(str(exc), "partition") from exc
    return dataset, partition


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Read and validate a JSON run configuration.

    Raises:
        OSError: unreadable file
        ConfigError: malformed document, schema violation or inconsistent lengths
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc.msg} (line {exc.lineno}, column {exc.colno})")
    config = parse_config(raw)
    check_consistency(config)
    return config


@dataclass
class RunContext:
    config: RunConfig
    dataset: Union[HiddenDataset1D, HiddenDataset2D]
    partition: Union[Partition1D, Partition2D]
    matrix: ConnectionMatrix
    system: Union[MapSystem1D, MapSystem2D]
    report: ContractionReport


def build_context(config: RunConfig) -> RunContext:
    dataset, partition = check_consistency(config)
    tables = config.factors.tables()
    samples = config.factors.samples
    try:
        if config.dimension == 1:
            matrix = connection_matrix_1d(partition)
            factors = build_factor_set_1d(dataset.xs, tables, samples)
            system = build_system_1d(dataset, partition, factors)
            report = contraction_report_1d(system, config.hidden_margin)
        else:
            matrix = connection_matrix_2d(partition)
            factors = build_factor_set_2d(dataset.xs, dataset.ys, tables, samples)
            system = build_system_2d(dataset, partition, factors)
            report = contraction_report_2d(system, config.hidden_margin)
    except PartitionError as exc:
        raise ConfigError(str(exc), "partition") from exc
    return RunContext(config=config, dataset=dataset, partition=partition, matrix=matrix, system=system, report=report)


# -----------------------
# Writers
# -----------------------

def write_csv(obj: Union[SampledField1D, SampledField2D, TrajectoryCloud, TrajectoryCloud2D], path: Union[str, Path]):
    """
    17-significant-digit CSV with LF line endings. 2D fields are written
    row-major with y outer; clouds in generation order.
    """
    if isinstance(obj, SampledField2D):
        X, Y = np.meshgrid(obj.gx, obj.gy, indexing="xy")
        values = obj.values.transpose(1, 0, 2).reshape(-1, 2)
        data = np.column_stack([X.ravel(), Y.ravel(), values])
        header = "x,y,f1,f2"
    elif isinstance(obj, SampledField1D):
        data = np.column_stack([obj.grid, obj.values])
        header = "x,f1,f2"
    elif isinstance(obj, TrajectoryCloud2D):
        data = obj.points.reshape(-1, 4)
        header = "x,y,f1,f2"
    elif isinstance(obj, TrajectoryCloud):
        data = obj.points.reshape(-1, 3)
        header = "x,f1,f2"
    else:
        raise TypeError(f"cannot write {type(obj).__name__} as CSV")
    with open(path, "w", newline="\n") as f:
        np.savetxt(f, data, fmt="%.17g", delimiter=",", newline="\n", header=header, comments="")


def _scale_to_bytes(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.rint(255.0 * (values - lo) / (hi - lo)).clip(0, 255).astype(np.uint8)


def write_pgm(field: Union[SampledField1D, SampledField2D], path: Union[str, Path]):
    """
    Binary P5 greymap of f1 (maxval 255) plus a <path>.txt sidecar with the
    value range. 2D: one pixel per grid node, top row at the largest y.
    1D: white curve on black, one column per grid point and 256 rows.
    A flat field renders uniform grey 128.
    """
    if isinstance(field, SampledField2D):
        f1 = field.values[:, :, 0]
        if f1.shape[0] < 2 or f1.shape[1] < 2:
            raise ValueError(f"cannot render a {f1.shape[0]} x {f1.shape[1]} grid")
        lo, hi = float(np.min(f1)), float(np.max(f1))
        if hi > lo and math.isfinite(hi - lo):
            image = _scale_to_bytes(f1.T[::-1], lo, hi)
        else:
            image = np.full(f1.T.shape, 128, dtype=np.uint8)
    else:
        f1 = field.values[:, 0]
        if len(f1) < 2:
            raise ValueError(f"cannot render a {len(f1)}-point grid")
        lo, hi = float(np.min(f1)), float(np.max(f1))
        if hi > lo and math.isfinite(hi - lo):
            image = np.zeros((256, len(f1)), dtype=np.uint8)
            rows = 255 - _scale_to_bytes(f1, lo, hi).astype(int)
            image[rows, np.arange(len(f1))] = 255
        else:
            image = np.full((256, len(f1)), 128, dtype=np.uint8)
    height, width = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image).tobytes())
    Path(f"{path}.txt").write_text(f"min {lo!r}\nmax {hi!r}\n")


def _finite(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def _write_json(path: Path, payload: Dict[str, Any]):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -----------------------
# Command dispatch
# -----------------------

class Runner:
    """Executes one command for a validated config and writes its artifacts"""

    def __init__(self, config: RunConfig, out_dir: Optional[str] = None, seed: Optional[int] = None):
        self.config = config
        self.settings = SolverSettings.from_env(out_dir=out_dir or config.output.dir)
        self.out = Path(self.settings.out_dir)
        self.seed = config.chaos.seed if seed is None else seed
        self.context: Optional[RunContext] = None

    def _prepare(self) -> RunContext:
        if self.context is None:
            print(colored(f"Building {self.config.dimension}D map system", "cyan"))
            self.context = build_context(self.config)
            self.out.mkdir(parents=True, exist_ok=True)
            _write_json(self.out / "certificate.json", json.loads(self.context.report.model_dump_json()))
        return self.context

    def validate(self) -> int:
        ctx = self._prepare()
        status = "certified" if ctx.report.certified else "NOT certified"
        color = "green" if ctx.report.certified else "yellow"
        print(colored(f"Configuration valid; S_bar = {ctx.report.S_bar:.6g}, {status}", color))
        return EXIT_OK

    def _solve(self) -> Union[SampledField1D, SampledField2D]:
        ctx = self._prepare()
        solver = self.config.solver
        if self.config.dimension == 1:
            field = solve_fixed_point_1d(
                ctx.system,
                grid_points=solver.grid_points or 4097,
                tol=solver.tol or 1e-10,
                max_iter=solver.max_iter or 5000,
            )
            grid = [len(field.grid)]
        else:
            field = solve_fixed_point_2d(
                ctx.system,
                grid=tuple(solver.grid or (129, 129)),
                tol=solver.tol or 1e-9,
                max_iter=solver.max_iter or 300,
                threads=self.settings.threads,
            )
            grid = [len(field.gx), len(field.gy)]
        _write_json(self.out / "solve.json", {
            "dimension": self.config.dimension,
            "grid": grid,
            "iterations": field.iterations,
            "change": _finite(field.change),
            "converged": field.converged,
            "tol": field.tol,
            "certified": ctx.report.certified,
        })
        return field

    def solve(self) -> int:
        field = self._solve()
        if self.config.output.csv:
            write_csv(field, self.out / "field.csv")
        return EXIT_OK

    def _cloud(self) -> Union[TrajectoryCloud, TrajectoryCloud2D]:
        ctx = self._prepare()
        chaos = self.config.chaos
        game = chaos_game_1d if self.config.dimension == 1 else chaos_game_2d
        return game(ctx.system, ctx.matrix, chaos.points, chaos.burn_in, self.seed)

    def chaos(self) -> int:
        cloud = self._cloud()
        write_csv(cloud, self.out / "cloud.csv")
        print(colored(f"Wrote {len(cloud.points):,} attractor points", "green"))
        return EXIT_OK

    def render(self, field=None) -> int:
        field = field if field is not None else self._solve()
        if self.config.output.pgm:
            write_pgm(field, self.out / "field.pgm")
        return EXIT_OK

    def verify(self, field=None) -> int:
        ctx = self._prepare()
        field = field if field is not None else self._solve()
        cloud = self._cloud()
        opts = self.config.verify
        suite = VerificationSuite(
            ctx.system, field, ctx.report, cloud=cloud, cloud_threshold=opts.cloud_threshold, seed=self.seed,
            residual_samples=opts.samples, contraction_pairs=opts.pairs, rho_pairs=opts.rho_pairs,
        )
        reports = suite.run()
        _write_json(self.out / "verify.json", {
            "certificate": json.loads(ctx.report.model_dump_json()),
            "passed": suite.passed,
            "reports": [json.loads(rep.model_dump_json()) for rep in reports],
        })
        print(render_summary(reports))
        return EXIT_OK if suite.passed else EXIT_VERIFY_FAILED

    def example(self, with_verify: bool = False) -> int:
        field = self._solve()
        write_csv(field, self.out / "field.csv")
        write_pgm(field, self.out / "field.pgm")
        if with_verify:
            return self.verify(field)
        return EXIT_OK


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_INVALID
    raise exc


def run(command: str, config: RunConfig, out_dir: Optional[str] = None, seed: Optional[int] = None,
        with_verify: bool = False) -> int:
    """Run a command against a validated config; returns the process exit code"""
    try:
        runner = Runner(config, out_dir=out_dir, seed=seed)
        if command == "example":
            return runner.example(with_verify)
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        return getattr(runner, command)()
    except (ValueError, OSError) as exc:
        code = exit_code_for(exc)
        print(colored(f"Error: {exc}", "red"))
        return code


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hvrfif", description="Hidden-variable recurrent fractal interpolation")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
    ex = sub.add_parser("example")
    ex.add_argument("name", choices=BUILTIN_NAMES)
    ex.add_argument("--out", type=str, default=None)
    ex.add_argument("--seed", type=int, default=None)
    ex.add_argument("--verify", action="store_true")
    sub.add_parser("list")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list":
        for name in BUILTIN_NAMES:
            print(name)
        return EXIT_OK
    try:
        if args.command == "example":
            config = parse_config(builtin_config(args.name))
        else:
            config = load_config(args.config)
    except (ValueError, OSError) as exc:
        code = exit_code_for(exc)
        print(colored(f"Error: {exc}", "red"))
        return code
    return run(args.command, config, out_dir=args.out, seed=args.seed,
               with_verify=getattr(args, "verify", False))
