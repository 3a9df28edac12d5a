"""
Uniform 1-D grids and piecewise-constant lattice functions.

Cell ``i`` covers ``[x_{i-1/2}, x_{i+1/2})`` with ``x_i = i * dx`` and
``i in {-K, ..., K}``; the truncated domain is therefore centred at 0.
Everything here is immutable-in / new-out.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from common.exceptions import InvalidInitialData, InvalidParameter

logger = logging.getLogger(__name__)

DEFAULT_QUAD_ORDER = 5


@dataclass(frozen=True)
class Grid1D:
    dx: float
    k_cells: int

    def __post_init__(self):
        if not np.isfinite(self.dx) or self.dx <= 0:
            raise InvalidParameter(f"Cell width must be positive, got {self.dx}")
        if int(self.k_cells) != self.k_cells or self.k_cells < 1:
            raise InvalidParameter(f"K must be an integer >= 1, got {self.k_cells}")
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "k_cells", int(self.k_cells))

    @classmethod
    def covering(cls, half_width: float, dx: float) -> "Grid1D":
        """Grid whose cell centres span [-half_width, half_width]"""
        k_cells = round(half_width / dx)
        if k_cells < 1 or not np.isclose(k_cells * dx, half_width, rtol=1e-12, atol=0):
            raise InvalidParameter(
                f"Half-width {half_width} is not a multiple of dx={dx}"
            )
        return cls(dx=dx, k_cells=k_cells)

    @property
    def n_cells(self) -> int:
        return 2 * self.k_cells + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.k_cells, self.k_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.indices * self.dx

    @property
    def edges(self) -> np.ndarray:
        """x_{i-1/2} for every cell plus the right edge of the last one"""
        return (np.arange(-self.k_cells, self.k_cells + 2) - 0.5) * self.dx

    def position(self, index: int) -> int:
        """Array position of signed cell index ``index``"""
        return index + self.k_cells


@dataclass(frozen=True, eq=False)
class LatticeFunction:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_cells,):
            raise InvalidParameter(
                f"Expected {self.grid.n_cells} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0]) - self.grid.k_cells
            raise InvalidParameter(f"Lattice function is not finite at cell {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid1D, value: float) -> "LatticeFunction":
        return cls(grid, np.full(grid.n_cells, float(value)))

    def with_values(self, values) -> "LatticeFunction":
        return LatticeFunction(self.grid, values)

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.dx)

    def __getitem__(self, index: int) -> float:
        return float(self.values[self.grid.position(index)])


def project_initial(
    u0: Callable[[np.ndarray], np.ndarray],
    grid: Grid1D,
    quad_order: int = DEFAULT_QUAD_ORDER,
    breakpoints: Sequence[float] = (),
) -> LatticeFunction:
    """
    Cell averages of ``u0`` by per-cell Gauss-Legendre quadrature.

    Cells containing one of ``breakpoints`` (kinks of u0, e.g. the edge of
    its support) are split there before integrating.
    """
    if int(quad_order) != quad_order or quad_order < 1:
        raise InvalidParameter(f"Quadrature order must be >= 1, got {quad_order}")

    nodes, weights = np.polynomial.legendre.leggauss(int(quad_order))
    left = grid.edges[:-1]
    right = grid.edges[1:]

    averages = _gauss_average(u0, left, right, nodes, weights, grid.indices)

    for point in breakpoints:
        inside = np.flatnonzero((left < point) & (point < right))
        for pos in inside:
            lo, hi = left[pos], right[pos]
            pieces = _gauss_average(
                u0,
                np.array([lo, point]),
                np.array([point, hi]),
                nodes,
                weights,
                np.full(2, grid.indices[pos]),
            )
            averages[pos] = ((point - lo) * pieces[0] + (hi - point) * pieces[1]) / (
                hi - lo
            )

    return LatticeFunction(grid, averages)


def _gauss_average(u0, left, right, nodes, weights, cells):
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    samples = np.broadcast_to(np.asarray(u0(x), dtype=np.float64), x.shape)
    finite = np.isfinite(samples)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        cell = int(cells[row])
        raise InvalidInitialData(
            f"u0 is not finite at x={x[row, col]!r} (cell {cell})",
            cell=cell,
            x=float(x[row, col]),
        )
    # Gauss-Legendre weights sum to 2 on [-1, 1]
    return 0.5 * (samples @ weights)


def restrict(fine: LatticeFunction, ratio: int) -> LatticeFunction:
    """
    Exact cell averages of ``fine`` on the grid ``ratio`` times coarser.

    Coarse and fine grids share cell centres at the origin. For odd ratios
    coarse cells are unions of ``ratio`` fine cells and the result is their
    plain mean. For even ratios coarse edges fall on fine centres, so half
    cells contribute; beyond the truncated domain the fine function is
    extended by its boundary values.
    """
    if isinstance(ratio, bool) or int(ratio) != ratio or ratio < 2:
        raise InvalidParameter(
            f"Restriction ratio must be an integer >= 2, got {ratio}"
        )
    ratio = int(ratio)
    k_fine = fine.grid.k_cells
    if k_fine % ratio not in (0, (ratio - 1) // 2) or k_fine < ratio:
        raise InvalidParameter(
            f"Grid with K={k_fine} cannot be restricted by ratio {ratio}"
        )

    k_coarse = k_fine // ratio
    coarse_grid = Grid1D(dx=fine.grid.dx * ratio, k_cells=k_coarse)

    values = fine.values
    padded = np.concatenate(
        [np.full(ratio, values[0]), values, np.full(ratio, values[-1])]
    )
    fine_edges = np.arange(-k_fine - ratio, k_fine + ratio + 2) - 0.5
    cumulative = np.concatenate([[0.0], np.cumsum(padded)])
    coarse_edges = ratio * (np.arange(-k_coarse, k_coarse + 2) - 0.5)
    mass = np.interp(coarse_edges, fine_edges, cumulative)

    return LatticeFunction(coarse_grid, np.diff(mass) / ratio)


def _check_same_grid(a: LatticeFunction, b: LatticeFunction):
    if a.grid != b.grid:
        raise InvalidParameter(f"Grid mismatch: {a.grid} vs {b.grid}")


def l1_distance(a: LatticeFunction, b: LatticeFunction) -> float:
    _check_same_grid(a, b)
    return float(np.abs(a.values - b.values).sum() * a.grid.dx)


def lp_norm(a: LatticeFunction, p: float = 2.0) -> float:
    return float((np.abs(a.values) ** p).sum() * a.grid.dx) ** (1.0 / p)


def bv_seminorm(a: LatticeFunction) -> float:
    # d = 1: the dx^{d-1} prefactor is 1
    return float(np.abs(np.diff(a.values)).sum())
