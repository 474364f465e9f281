import numbers
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models import (
    ConnectionMatrix,
    DatasetError,
    HiddenDataset1D,
    HiddenDataset2D,
    Partition1D,
    Partition2D,
    PartitionError,
    frozen_array,
)


def _knot_vector(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DatasetError(f"{name} must be a flat list of reals")
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"{name} contains non-finite values")
    if len(arr) > 1 and np.any(np.diff(arr) <= 0):
        bad = int(np.flatnonzero(np.diff(arr) <= 0)[0])
        raise DatasetError(
            f"{name} must be strictly increasing ({name}[{bad}]={arr[bad]}, {name}[{bad + 1}]={arr[bad + 1]})"
        )
    return arr


def validate_dataset_1d(xs: Sequence[float], ys: Sequence[float], zs: Sequence[float]) -> HiddenDataset1D:
    """
    Validate the extended dataset P = {(x_i, y_i, z_i)}.

    Raises:
        DatasetError: length mismatch, fewer than two regions or non-increasing knots
    """
    lengths = (len(xs), len(ys), len(zs))
    if len(set(lengths)) != 1:
        raise DatasetError(f"xs, ys, zs must have equal lengths, got {lengths}")
    if lengths[0] - 1 < 2:
        raise DatasetError(f"need n >= 2 regions, got n={lengths[0] - 1}")
    knots = _knot_vector(xs, "xs")
    ys_arr = np.asarray(ys, dtype=float)
    zs_arr = np.asarray(zs, dtype=float)
    if not (np.all(np.isfinite(ys_arr)) and np.all(np.isfinite(zs_arr))):
        raise DatasetError("ys and zs must be finite")
    return HiddenDataset1D(xs=frozen_array(knots), ys=frozen_array(ys_arr), zs=frozen_array(zs_arr))


def validate_dataset_2d(xs: Sequence[float], ys: Sequence[float],
                        zss: Sequence[Sequence[float]], tss: Sequence[Sequence[float]]) -> HiddenDataset2D:
    """Validate the extended grid dataset {(x_i, y_j, z_ij, t_ij)}"""
    if len(xs) - 1 < 2 or len(ys) - 1 < 2:
        raise DatasetError(f"need n >= 2 and m >= 2, got n={len(xs) - 1}, m={len(ys) - 1}")
    kx = _knot_vector(xs, "xs")
    ky = _knot_vector(ys, "ys")
    shape = (len(kx), len(ky))
    arrays = []
    for name, raw in (("zss", zss), ("tss", tss)):
        try:
            arr = np.asarray(raw, dtype=float)
        except ValueError:
            raise DatasetError(f"{name} must be a rectangular table")
        if arr.shape != shape:
            raise DatasetError(f"{name} must have shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DatasetError(f"{name} contains non-finite values")
        arrays.append(arr)
    return HiddenDataset2D(
        xs=frozen_array(kx), ys=frozen_array(ky), zss=frozen_array(arrays[0]), tss=frozen_array(arrays[1])
    )


def _is_integer(value) -> bool:
    return isinstance(value, numbers.Integral) and not isinstance(value, (bool, np.bool_))


def _check_index(value, what: str) -> int:
    if not _is_integer(value):
        raise PartitionError(f"{what} must be an integer, got {value!r}")
    return int(value)


def _check_orientation(value, where: str) -> int:
    if not _is_integer(value) or value not in (1, -1):
        raise PartitionError(f"orientation of {where} must be +1 or -1, got {value!r}")
    return int(value)


def _check_domain_span(start: int, end: int, top: int, axis: str, k: int):
    if not (0 <= start < end <= top):
        raise PartitionError(f"domain {k + 1}: {axis} knot indices ({start}, {end}) must satisfy 0 <= s < e <= {top}")
    if end - start < 2:
        raise PartitionError(
            f"domain {k + 1} spans {end - start} region(s) along {axis}; a domain must contain at least 2"
        )


def build_partition_1d(dataset: HiddenDataset1D, domains: Sequence[Sequence[int]], gamma: Sequence[int],
                       orientations: Optional[Sequence[int]] = None) -> Partition1D:
    """
    Build and check the region/domain structure.

    Args:
        dataset: validated dataset
        domains: knot-index pairs (s(k), e(k)), k = 1..l
        gamma: 1-based domain number per region
        orientations: +1 maps the domain's left end to the region's left knot, -1 flips; default all +1

    Returns:
        Partition1D
    """
    n = dataset.n
    l = len(domains)
    if not 2 <= l <= n:
        raise PartitionError(f"number of domains l={l} must lie in [2, {n}]")
    checked: List[Tuple[int, int]] = []
    for k, dom in enumerate(domains):
        if len(dom) != 2:
            raise PartitionError(f"domain {k + 1} must be a knot-index pair, got {list(dom)}")
        start, end = (_check_index(v, f"domain {k + 1} knot index") for v in dom)
        _check_domain_span(start, end, n, "x", k)
        checked.append((start, end))
    if len(gamma) != n:
        raise PartitionError(f"gamma must assign a domain to each of the {n} regions, got {len(gamma)}")
    for i, g in enumerate(gamma):
        if not 1 <= _check_index(g, f"gamma({i + 1})") <= l:
            raise PartitionError(f"gamma({i + 1})={g} outside 1..{l}")
    if orientations is None:
        orientations = [1] * n
    if len(orientations) != n:
        raise PartitionError(f"need {n} orientations, got {len(orientations)}")
    signs = tuple(_check_orientation(o, f"region {i + 1}") for i, o in enumerate(orientations))
    return Partition1D(n=n, domains=tuple(checked), gamma=tuple(int(g) for g in gamma), orientations=signs)


def _normalise_rows(support: np.ndarray, label) -> ConnectionMatrix:
    counts = support.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        names = ", ".join(label(int(s)) for s in empty)
        raise PartitionError(f"region(s) {names} are contained in no map's domain")
    p = support.astype(float) / counts[:, None]
    p.setflags(write=False)
    return ConnectionMatrix(p=p)


def connection_matrix_1d(partition: Partition1D) -> ConnectionMatrix:
    """
    p_st > 0 exactly when region s lies in the domain of map t; each row is
    divided by its count of positive entries.
    """
    n = partition.n
    starts = np.array([partition.domain_of(t)[0] for t in range(n)])
    ends = np.array([partition.domain_of(t)[1] for t in range(n)])
    s = np.arange(n)[:, None]
    support = (starts[None, :] <= s) & (s + 1 <= ends[None, :])
    return _normalise_rows(support, lambda r: f"I_{r + 1}")


def tau(i: int, j: int, n: int) -> int:
    """One-to-one region numbering tau(i, j) = i + (j - 1) n on 1-based indices"""
    return i + (j - 1) * n


def build_partition_2d(dataset: HiddenDataset2D, domains: Sequence[Sequence[int]],
                       gamma: Sequence[Sequence[int]],
                       orientations: Optional[Sequence[Sequence[Sequence[int]]]] = None) -> Partition2D:
    """
    Bivariate analogue of build_partition_1d.

    gamma and orientations are n x m tables indexed [i][j]; each orientation
    entry is an (x-sign, y-sign) pair.
    """
    n, m = dataset.n, dataset.m
    l = len(domains)
    if not 2 <= l <= n * m:
        raise PartitionError(f"number of domains l={l} must lie in [2, {n * m}]")
    checked: List[Tuple[int, int, int, int]] = []
    for k, dom in enumerate(domains):
        if len(dom) != 4:
            raise PartitionError(f"domain {k + 1} must be (s_x, e_x, s_y, e_y), got {list(dom)}")
        sx, ex, sy, ey = (_check_index(v, f"domain {k + 1} knot index") for v in dom)
        _check_domain_span(sx, ex, n, "x", k)
        _check_domain_span(sy, ey, m, "y", k)
        checked.append((sx, ex, sy, ey))
    if len(gamma) != n or any(len(row) != m for row in gamma):
        raise PartitionError(f"gamma must be a {n} x {m} table")
    for i, row in enumerate(gamma):
        for j, g in enumerate(row):
            if not 1 <= _check_index(g, f"gamma({i + 1},{j + 1})") <= l:
                raise PartitionError(f"gamma({i + 1},{j + 1})={g} outside 1..{l}")
    if orientations is None:
        orientations = [[(1, 1)] * m for _ in range(n)]
    if len(orientations) != n or any(len(row) != m for row in orientations):
        raise PartitionError(f"orientations must be a {n} x {m} table of sign pairs")
    signs = []
    for i, row in enumerate(orientations):
        out_row = []
        for j, pair in enumerate(row):
            if len(pair) != 2:
                raise PartitionError(f"orientation of region ({i + 1},{j + 1}) must be a sign pair")
            where = f"region ({i + 1},{j + 1})"
            out_row.append((_check_orientation(pair[0], where), _check_orientation(pair[1], where)))
        signs.append(tuple(out_row))
    return Partition2D(
        n=n,
        m=m,
        domains=tuple(checked),
        gamma=tuple(tuple(int(g) for g in row) for row in gamma),
        orientations=tuple(signs),
    )


def connection_matrix_2d(partition: Partition2D) -> ConnectionMatrix:
    """N x N matrix over regions linearised by tau (0-based row r = i + j n)"""
    n, N = partition.n, partition.N
    rect = np.array([partition.domain_of(*partition.unlinear(t)) for t in range(N)])
    cells = np.array([partition.unlinear(s) for s in range(N)])
    ci = cells[:, 0][:, None]
    cj = cells[:, 1][:, None]
    support = (
        (rect[None, :, 0] <= ci) & (ci + 1 <= rect[None, :, 1])
        & (rect[None, :, 2] <= cj) & (cj + 1 <= rect[None, :, 3])
    )
    return _normalise_rows(support, lambda r: f"E_({r % n + 1},{r // n + 1})")
