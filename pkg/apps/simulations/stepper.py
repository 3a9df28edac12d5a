"""
Explicit Euler-Maruyama finite volume scheme

    U^{n+1}_i = U^n_i - dt * advective_i - dt * nonlocal_i + sum_k h_k(U^n_i) dW_k

on the truncated grid {-K, ..., K}. Beyond the grid the state is extended
by its boundary values, for the advective flux and for the fractional sum
(whose far field is folded into exact tail sums of the weight table).

A (dt, dx) pair beyond the CFL bound keeps its noise increment per dt; only
the deterministic part is split into sub-steps that respect the bound.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft

from common.exceptions import InvalidParameter, NumericalAbort

from .fluxes import FluxSpec
from .kernels import WeightKernel, get_kernel
from .mesh import Grid1D, LatticeFunction, project_initial
from .noise import BrownianPath, NoiseSpec, coarse_increment, noise_values

logger = logging.getLogger(__name__)

DEFAULT_CFL_SAFETY = 0.5
DEFAULT_SNAPSHOT_TIMES = (0.25, 0.5, 0.75, 1.0)
# Above this many cells the nonlocal sum goes through FFT convolution
DENSE_CELL_LIMIT = 1025


@dataclass(frozen=True)
class ProblemSpec:
    """du + f(u)_x dt + L_lambda[A(u)] dt = sigma(u) dW with u(0) = u0"""

    flux: FluxSpec
    a_fn: Callable
    a_lipschitz: float
    noise: NoiseSpec
    u0: Callable
    lambda_: float
    u0_breakpoints: tuple[float, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        if not (0.0 < self.lambda_ < 1.0):
            raise InvalidParameter(f"lambda must lie in (0, 1), got {self.lambda_}")
        if not np.isfinite(self.a_lipschitz) or self.a_lipschitz < 0:
            raise InvalidParameter(
                f"Lipschitz constant of A must be >= 0, got {self.a_lipschitz}"
            )
        object.__setattr__(self, "lambda_", float(self.lambda_))

    def check_assumptions(self, lower: float = -1.0, upper: float = 2.0, samples=601):
        """Sampled checks of A(0) = 0, A nondecreasing, flux consistency, noise"""
        u = np.linspace(lower, upper, samples)
        if float(np.asarray(self.a_fn(0.0))) != 0.0:
            raise InvalidParameter("A(0) must be 0")
        a_values = np.asarray(self.a_fn(u), dtype=np.float64)
        a_values = np.broadcast_to(a_values, u.shape)
        if np.any(np.diff(a_values) < 0):
            raise InvalidParameter("A must be nondecreasing")
        slopes = np.diff(a_values) / np.diff(u)
        if slopes.max(initial=0.0) > self.a_lipschitz * (1 + 1e-9):
            raise InvalidParameter(
                f"A exceeds its Lipschitz constant {self.a_lipschitz}"
            )
        consistent = self.flux(u, u)
        if not np.allclose(consistent, self.flux.f(u), rtol=0, atol=1e-14):
            raise InvalidParameter("Numerical flux is not consistent: F(u, u) != f(u)")
        self.noise.check_assumptions()


@dataclass(frozen=True)
class SolveConfig:
    """One resolution level: grid, time step, horizon and snapshot times"""

    dx: float
    dt: float
    k_cells: int
    T: float = 1.0
    snapshot_times: tuple[float, ...] = DEFAULT_SNAPSHOT_TIMES
    quad_order: int = 5
    cfl_safety: float = DEFAULT_CFL_SAFETY
    i_max: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidParameter(f"Time step must be positive, got {self.dt}")
        if not (np.isfinite(self.T) and self.T >= 0):
            raise InvalidParameter(f"Final time must be >= 0, got {self.T}")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise InvalidParameter(
                f"CFL safety must lie in (0, 1], got {self.cfl_safety}"
            )
        Grid1D(dx=self.dx, k_cells=self.k_cells)
        object.__setattr__(self, "snapshot_times", tuple(sorted(self.snapshot_times)))
        _steps_for(self.T, self.dt, "T")
        for t in self.snapshot_times:
            if t < 0 or t > self.T:
                raise InvalidParameter(f"Snapshot time {t} lies outside [0, {self.T}]")
            _steps_for(t, self.dt, "snapshot time")

    @property
    def grid(self) -> Grid1D:
        return Grid1D(dx=self.dx, k_cells=self.k_cells)

    @property
    def n_steps(self) -> int:
        return _steps_for(self.T, self.dt, "T")

    @property
    def kernel_size(self) -> int:
        return max(2 * self.k_cells, self.i_max or 0)

    def snapshot_steps(self) -> dict[int, float]:
        return {_steps_for(t, self.dt, "snapshot time"): t for t in self.snapshot_times}


def _steps_for(t: float, dt: float, what: str) -> int:
    steps = round(t / dt)
    if not math.isclose(steps * dt, t, rel_tol=1e-12, abs_tol=1e-15):
        raise InvalidParameter(f"{what.capitalize()} {t} is not a multiple of dt={dt}")
    return steps


@dataclass(frozen=True, eq=False)
class SchemeState:
    u: LatticeFunction
    t: float
    step_index: int
    kernel: WeightKernel
    problem: ProblemSpec
    path_id: int | None = None


class NonlocalOperator:
    """
    Discrete L_lambda on a truncated grid.

    Row i couples interior cells |j| < K through G_{j-i} and the two
    boundary cells through the tails T(K+i), T(K-i), where
    T(n) = sum_{m >= n} G_m accounts for the constant extension. Rows sum
    to zero, so the operator is applied to A - A_{-K} and constants map
    to exactly zero.
    """

    def __init__(self, kernel: WeightKernel, grid: Grid1D):
        if not math.isclose(kernel.dx, grid.dx, rel_tol=1e-12):
            raise InvalidParameter(
                f"Kernel built for dx={kernel.dx}, grid has dx={grid.dx}"
            )
        k = grid.k_cells
        if kernel.i_max < 2 * k:
            raise InvalidParameter(
                f"Kernel covers offsets up to {kernel.i_max}, grid needs {2 * k}"
            )
        self.grid = grid
        self.kernel = kernel
        n = grid.n_cells
        tails = kernel.tails()
        i = grid.indices
        self.right_tail = tails[k - i]
        self.dense = n <= DENSE_CELL_LIMIT

        g = kernel.weights[: n]
        if self.dense:
            offsets = np.abs(i[:, None] - i[None, :])
            matrix = g[offsets]
            matrix[:, 0] = tails[k + i]
            matrix[:, -1] = self.right_tail
            matrix.setflags(write=False)
            self.matrix = matrix
        else:
            # g over offsets -(n-1) .. (n-1)
            symmetric = np.concatenate([g[:0:-1], g])
            self.fft_size = fft.next_fast_len(3 * n - 2, real=True)
            self.kernel_spectrum = fft.rfft(symmetric, self.fft_size)

    def apply(self, a_values: np.ndarray) -> np.ndarray:
        """(1/dx) * L applied to the cell values of A(U)"""
        shifted = a_values - a_values[0]
        if self.dense:
            out = self.matrix @ shifted
        else:
            n = self.grid.n_cells
            interior = shifted.copy()
            interior[-1] = 0.0
            conv = fft.irfft(
                self.kernel_spectrum * fft.rfft(interior, self.fft_size),
                self.fft_size,
            )
            out = conv[n - 1 : 2 * n - 1] + self.right_tail * shifted[-1]
        return out / self.grid.dx


@lru_cache(maxsize=32)
def get_operator(kernel: WeightKernel, grid: Grid1D) -> NonlocalOperator:
    return NonlocalOperator(kernel, grid)


def _nonlocal_values(values, grid, kernel, a_fn):
    a_values = np.asarray(a_fn(values), dtype=np.float64)
    a_values = np.broadcast_to(a_values, values.shape)
    return get_operator(kernel, grid).apply(a_values)


def nonlocal_term(u: LatticeFunction, kernel: WeightKernel, a_fn) -> LatticeFunction:
    return u.with_values(_nonlocal_values(u.values, u.grid, kernel, a_fn))


def advective_term(u: LatticeFunction, flux: FluxSpec) -> LatticeFunction:
    """[F(U_i, U_{i+1}) - F(U_{i-1}, U_i)] / dx with constant extension"""
    return u.with_values(_advective_values(u.values, u.grid, flux))


def _advective_values(values, grid, flux):
    padded = np.concatenate([values[:1], values, values[-1:]])
    interface = np.asarray(flux(padded[:-1], padded[1:]), dtype=np.float64)
    return np.diff(interface) / grid.dx


def semi_discrete_rhs(
    u: LatticeFunction, problem: ProblemSpec, kernel: WeightKernel
) -> LatticeFunction:
    """dU/dt = -(advective + nonlocal), the deterministic part of the scheme"""
    return u.with_values(_rhs_values(u.values, u.grid, problem, kernel))


def _rhs_values(values, grid, problem, kernel):
    advective = _advective_values(values, grid, problem.flux)
    nonlocal_ = _nonlocal_values(values, grid, kernel, problem.a_fn)
    return -(advective + nonlocal_)


def cfl_dt(
    problem: ProblemSpec,
    kernel: WeightKernel,
    dx: float,
    safety: float = DEFAULT_CFL_SAFETY,
) -> float:
    """safety / (2 L_F / dx + L_A G_0 / dx)"""
    if not (0.0 < safety <= 1.0):
        raise InvalidParameter(f"CFL safety must lie in (0, 1], got {safety}")
    rate = (
        2.0 * problem.flux.numerical_lipschitz + problem.a_lipschitz * kernel[0]
    ) / dx
    if rate == 0:
        return math.inf
    return safety / rate


def cfl_ratios(
    problem: ProblemSpec, kernel: WeightKernel, dx: float, dt: float
) -> tuple[float, float]:
    """The classical advective ratio L_f dt/dx and the nonlocal one G_0 dt/dx"""
    return problem.flux.f_lipschitz * dt / dx, kernel[0] * dt / dx


@lru_cache(maxsize=None)
def _warn_cfl_once(lam, dx, dt, limit, substeps, advective_ratio, nonlocal_ratio):
    logger.warning(
        f"dt={dt} exceeds the CFL bound {limit:.4g} (lambda={lam}, dx={dx}); "
        f"L_f dt/dx={advective_ratio:.3g}, G_0 dt/dx={nonlocal_ratio:.3g}; "
        f"deterministic part split into {substeps} sub-steps"
    )


def cfl_substeps(
    problem: ProblemSpec, kernel: WeightKernel, dx: float, dt: float
) -> int:
    """
    Number of equal deterministic sub-steps that keep a step of size ``dt``
    within the safety-1 CFL bound (1 when ``dt`` already satisfies it).
    """
    limit = cfl_dt(problem, kernel, dx, safety=1.0)
    if dt <= limit:
        return 1
    substeps = math.ceil(dt / limit)
    _warn_cfl_once(
        problem.lambda_, dx, dt, limit, substeps, *cfl_ratios(problem, kernel, dx, dt)
    )
    return substeps


def _first_bad_cell(values, grid) -> int | None:
    bad = np.flatnonzero(~np.isfinite(values))
    return int(bad[0]) - grid.k_cells if bad.size else None


def step(
    state: SchemeState,
    dt: float,
    path: BrownianPath | None = None,
    level_dt: float | None = None,
) -> SchemeState:
    """
    One Euler-Maruyama step; the noise uses window ``state.step_index``.

    When ``dt`` exceeds the CFL bound the deterministic update runs as
    ``cfl_substeps`` explicit sub-steps of dt/m, and sigma(U^n) dW is added
    once at the end.
    """
    problem = state.problem
    u = state.u
    grid = u.grid
    substeps = cfl_substeps(problem, state.kernel, grid.dx, dt)

    h = dt / substeps
    values = u.values
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(substeps):
            values = values + h * _rhs_values(values, grid, problem, state.kernel)
            if _first_bad_cell(values, grid) is not None:
                break
    if problem.noise.is_active:
        if path is None:
            raise InvalidParameter("Noisy problem stepped without a Brownian path")
        level_dt = dt if level_dt is None else level_dt
        dw = [
            coarse_increment(path, level_dt, state.step_index, mode)
            for mode in range(problem.noise.n_modes)
        ]
        with np.errstate(over="ignore", invalid="ignore"):
            values = values + noise_values(problem.noise, u.values, dw)

    path_id = path.path_id if path is not None else state.path_id
    cell = _first_bad_cell(values, grid)
    if cell is not None:
        raise NumericalAbort(
            f"Non-finite state at step {state.step_index + 1}, cell {cell}",
            step_index=state.step_index + 1,
            cell=cell,
            path_id=path_id,
        )

    return SchemeState(
        u=u.with_values(values),
        t=(state.step_index + 1) * dt,
        step_index=state.step_index + 1,
        kernel=state.kernel,
        problem=problem,
        path_id=path_id,
    )


def initial_state(
    problem: ProblemSpec, config: SolveConfig, path_id: int | None = None
) -> SchemeState:
    grid = config.grid
    kernel = get_kernel(problem.lambda_, grid.dx, config.kernel_size)
    u = project_initial(problem.u0, grid, config.quad_order, problem.u0_breakpoints)
    return SchemeState(
        u=u, t=0.0, step_index=0, kernel=kernel, problem=problem, path_id=path_id
    )


def evolve(
    problem: ProblemSpec,
    config: SolveConfig,
    path: BrownianPath | None = None,
    trace: Callable[[SchemeState], None] | None = None,
) -> dict[float, LatticeFunction]:
    """
    Run from t = 0 to T and return the state at every snapshot time.

    ``trace`` is called with the initial state and after every step.
    """
    if problem.noise.is_active:
        if path is None:
            raise InvalidParameter("A noisy problem needs a Brownian path")
        if path.n_modes < problem.noise.n_modes:
            raise InvalidParameter(
                f"Noise needs {problem.noise.n_modes} modes, path carries "
                f"{path.n_modes}"
            )
        path.level_ratio(config.dt)
        if config.n_steps * config.dt > path.horizon * (1 + 1e-12):
            raise InvalidParameter(
                f"Brownian path ends at {path.horizon}, run needs {config.T}"
            )

    state = initial_state(
        problem, config, path_id=path.path_id if path is not None else None
    )

    wanted = config.snapshot_steps()
    snapshots = {}
    if trace is not None:
        trace(state)
    if 0 in wanted:
        snapshots[wanted[0]] = state.u
    for _ in range(config.n_steps):
        state = step(state, config.dt, path=path, level_dt=config.dt)
        if trace is not None:
            trace(state)
        if state.step_index in wanted:
            snapshots[wanted[state.step_index]] = state.u
    return snapshots
