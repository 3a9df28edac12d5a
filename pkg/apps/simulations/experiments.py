"""
Monte Carlo strong-error studies.

Every path is evolved at the reference level and at each coarse level
with the same Brownian path (coarse increments are sums of the fine
ones). The reference snapshot is restricted to the coarse grid and the L1
distance is averaged over paths; the error of a level is the largest
path-mean over the snapshot times.
"""

import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from rich.console import Console
from rich.table import Table

from common.exceptions import InvalidParameter, NumericalAbort, StudyAborted
from common.utils import config_hash

from .diagnostics import (
    AprioriCheck,
    AprioriReport,
    CheckStatus,
    EnsembleStats,
    InitialNorms,
    aggregate,
    check_apriori,
    collect,
)
from .fluxes import FluxScheme
from .mesh import l1_distance, project_initial, restrict
from .noise import BrownianPath, generate_path
from .selectors import get_problem
from .stepper import (
    DEFAULT_CFL_SAFETY,
    DEFAULT_SNAPSHOT_TIMES,
    ProblemSpec,
    SolveConfig,
    evolve,
)

logger = logging.getLogger(__name__)

DEFAULT_DT_LEVELS = (2.0**-9, 2.0**-8, 2.0**-7, 2.0**-6, 2.0**-5)
DEFAULT_DT_REF = 2.0**-12
# dx / dt of every level: dx = 2^-7 ... 2^-3 for dt = 2^-9 ... 2^-5
DEFAULT_MESH_RATIO = 4.0
ABORT_TOLERANCE = 1e-3
TREND_TOLERANCE_SE = 2.0


@dataclass(frozen=True)
class RunConfig:
    lambdas: tuple[float, ...] = (0.5,)
    n_paths: int = 200
    seed: int = 0
    half_width: float = 3.0
    T: float = 1.0
    dt_ref: float = DEFAULT_DT_REF
    dt_levels: tuple[float, ...] = DEFAULT_DT_LEVELS
    mesh_ratio: float = DEFAULT_MESH_RATIO
    snapshot_times: tuple[float, ...] = DEFAULT_SNAPSHOT_TIMES
    flux: FluxScheme = FluxScheme.GODUNOV
    sigma_on: bool = True
    problem: str = "logistic"
    quad_order: int = 5
    cfl_safety: float = DEFAULT_CFL_SAFETY
    threads: int | None = None
    # single-level overrides used by solve/check
    dx: float | None = None
    dt: float | None = None
    k_cells: int | None = None
    i_max: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        object.__setattr__(self, "dt_levels", tuple(sorted(self.dt_levels)))
        object.__setattr__(self, "snapshot_times", tuple(sorted(self.snapshot_times)))
        object.__setattr__(self, "flux", FluxScheme.parse(self.flux))

        if not self.lambdas:
            raise InvalidParameter("At least one lambda is required")
        for lam in self.lambdas:
            if not (0.0 < lam < 1.0):
                raise InvalidParameter(f"lambda must lie in (0, 1), got {lam}")
        if self.n_paths < 1:
            raise InvalidParameter(f"Need at least one path, got {self.n_paths}")
        if not (0 <= self.seed < 2**64):
            raise InvalidParameter(
                f"Seed must be an unsigned 64-bit integer, got {self.seed}"
            )
        if self.threads is not None and self.threads < 1:
            raise InvalidParameter(f"threads must be >= 1, got {self.threads}")
        if not self.dt_levels:
            raise InvalidParameter("At least one time step level is required")

        reference = self.reference_level()
        for dt in self.dt_levels:
            _multiple_of(dt, self.dt_ref, "time step level", "dt_ref")
            level = self.level(dt)
            ratio = self.restriction_ratio(level)
            k_ref = reference.k_cells
            if k_ref < ratio or k_ref % ratio not in (0, (ratio - 1) // 2):
                raise InvalidParameter(
                    f"Reference grid (K={k_ref}) cannot be restricted to dx={level.dx}"
                )

    def reference_level(self) -> SolveConfig:
        return self._solve_config(self.dt_ref, self.mesh_ratio * self.dt_ref)

    def level(self, dt: float) -> SolveConfig:
        return self._solve_config(dt, self.mesh_ratio * dt)

    def levels(self) -> list[SolveConfig]:
        """Coarse levels, finest first"""
        return [self.level(dt) for dt in self.dt_levels]

    def solve_level(self) -> SolveConfig:
        """The single level selected by the dx/dt/K overrides"""
        if self.dt is not None and self.dx is not None:
            dt, dx = self.dt, self.dx
        elif self.dx is not None:
            dt, dx = self.dx / self.mesh_ratio, self.dx
        elif self.dt is not None:
            dt, dx = self.dt, self.mesh_ratio * self.dt
        else:
            dt = self.dt_levels[0]
            dx = self.mesh_ratio * dt
        return self._solve_config(dt, dx, self.k_cells)

    def _solve_config(self, dt, dx, k_cells=None) -> SolveConfig:
        if k_cells is None:
            k_cells = round(self.half_width / dx)
            if k_cells < 1 or not math.isclose(
                k_cells * dx, self.half_width, rel_tol=1e-12
            ):
                raise InvalidParameter(
                    f"Half-width {self.half_width} is not a multiple of dx={dx}"
                )
        return SolveConfig(
            dx=dx,
            dt=dt,
            k_cells=k_cells,
            T=self.T,
            snapshot_times=self.snapshot_times,
            quad_order=self.quad_order,
            cfl_safety=self.cfl_safety,
            i_max=self.i_max,
        )

    def restriction_ratio(self, level: SolveConfig) -> int:
        reference = self.reference_level()
        return _multiple_of(level.dx, reference.dx, "level dx", "reference dx")

    @property
    def n_fine_steps(self) -> int:
        return _multiple_of(self.T, self.dt_ref, "T", "dt_ref")

    def fine_step_for(self, dt: float) -> float:
        """dt_ref when ``dt`` is one of its multiples, else ``dt`` itself"""
        ratio = dt / self.dt_ref
        if ratio >= 1 and math.isclose(ratio, round(ratio), rel_tol=1e-12):
            return self.dt_ref
        return dt

    def config_hash(self) -> str:
        """Hash of everything that affects the numbers (not the thread count)"""
        values = asdict(self)
        values.pop("threads")
        return config_hash(values)


def _multiple_of(value, unit, what, unit_name) -> int:
    ratio = round(value / unit)
    if ratio < 1 or not math.isclose(ratio * unit, value, rel_tol=1e-12):
        raise InvalidParameter(
            f"{what.capitalize()} {value} is not an integer multiple of "
            f"{unit_name}={unit}"
        )
    return ratio


@dataclass(frozen=True)
class RateRow:
    lambda_: float
    dx: float
    dt: float
    error: float
    se: float
    rate: float | None
    theory: float


RATE_COLUMNS = ("lambda", "dx", "error", "se", "rate")


@dataclass
class RateReport:
    rows: list[RateRow] = field(default_factory=list)
    seed: int = 0
    n_paths: int = 0
    config_hash: str = ""
    aborted: int = 0

    def for_lambda(self, lam: float) -> list[RateRow]:
        return [row for row in self.rows if row.lambda_ == lam]

    @property
    def lambdas(self) -> list[float]:
        return sorted({row.lambda_ for row in self.rows})

    def rates(self, lam: float) -> list[float]:
        return [row.rate for row in self.for_lambda(lam) if row.rate is not None]

    def csv_rows(self):
        for row in self.rows:
            yield (row.lambda_, row.dx, row.error, row.se, row.rate)

    @classmethod
    def combine(cls, reports: list["RateReport"]) -> "RateReport":
        if not reports:
            raise InvalidParameter("Nothing to combine")
        first = reports[0]
        return cls(
            rows=[row for report in reports for row in report.rows],
            seed=first.seed,
            n_paths=first.n_paths,
            config_hash=first.config_hash,
            aborted=sum(report.aborted for report in reports),
        )


def estimate_rate(errors, dxs) -> np.ndarray:
    """Observed order between consecutive rows: log2 error ratio / log2 dx ratio"""
    errors = np.asarray(errors, dtype=np.float64)
    dxs = np.asarray(dxs, dtype=np.float64)
    if errors.shape != dxs.shape or errors.ndim != 1 or len(errors) < 2:
        raise InvalidParameter("Need two equally long sequences of at least 2 entries")
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise InvalidParameter("Errors must be positive to estimate a rate")
    if np.any(dxs <= 0) or np.any(np.diff(dxs) == 0):
        raise InvalidParameter("Mesh sizes must be positive and distinct")
    return np.log2(errors[1:] / errors[:-1]) / np.log2(dxs[1:] / dxs[:-1])


def theoretical_order(lam: float) -> float:
    return 0.5 if lam <= 0.5 else 1.0 - lam


def theoretical_bound(lam: float, dx: float) -> float:
    """Error bound with constant 1: sqrt(dx), sqrt(dx)|log dx| or dx^(1-lambda)"""
    if lam < 0.5:
        return math.sqrt(dx)
    if lam == 0.5:
        return math.sqrt(dx) * abs(math.log(dx))
    return dx ** (1.0 - lam)


def _resolve_threads(threads: int | None) -> int:
    return threads or os.cpu_count() or 1


def _map_paths(func, path_ids, threads: int | None):
    """func over path ids, results in path id order"""
    workers = _resolve_threads(threads)
    if workers == 1 or len(path_ids) == 1:
        return [func(path_id) for path_id in path_ids]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, path_ids))


def path_for(
    config: RunConfig, problem: ProblemSpec, path_id: int, dt: float
) -> BrownianPath | None:
    if not problem.noise.is_active:
        return None
    dt_fine = config.fine_step_for(dt)
    return generate_path(
        config.seed,
        path_id,
        n_fine_steps=_multiple_of(config.T, dt_fine, "T", "path step"),
        n_modes=problem.noise.n_modes,
        dt_fine=dt_fine,
    )


def _check_aborts(aborted: int, n_paths: int, what: str):
    if aborted > ABORT_TOLERANCE * n_paths:
        raise StudyAborted(
            f"{aborted} of {n_paths} paths aborted in the {what}",
            aborted=aborted,
            n_paths=n_paths,
        )


def run_error_study(config: RunConfig) -> RateReport:
    """Rate table for every lambda of ``config``"""
    reports = [_error_study(config, lam) for lam in config.lambdas]
    return RateReport.combine(reports)


def _error_study(config: RunConfig, lam: float) -> RateReport:
    problem = get_problem(config.problem, lam, config.flux, config.sigma_on)
    reference = config.reference_level()
    levels = config.levels()
    ratios = [config.restriction_ratio(level) for level in levels]
    times = config.snapshot_times
    # a deterministic problem gives the same answer on every path
    path_ids = list(range(config.n_paths if problem.noise.is_active else 1))

    logger.info(
        f"Error study: lambda={lam}, {len(path_ids)} paths, reference "
        f"dt={reference.dt} dx={reference.dx}, {len(levels)} levels"
    )

    def one_path(path_id):
        path = path_for(config, problem, path_id, config.dt_ref)
        try:
            fine = evolve(problem, reference, path)
            distances = np.empty((len(levels), len(times)))
            for k, (level, ratio) in enumerate(zip(levels, ratios, strict=True)):
                coarse = evolve(problem, level, path)
                for j, t in enumerate(times):
                    distances[k, j] = l1_distance(restrict(fine[t], ratio), coarse[t])
            return distances
        except NumericalAbort as exc:
            logger.warning(
                f"Path {path_id} aborted at step {exc.step_index}, cell {exc.cell}"
            )
            return None

    results = _map_paths(one_path, path_ids, config.threads)
    finished = [result for result in results if result is not None]
    aborted = len(results) - len(finished)
    _check_aborts(aborted, len(path_ids), f"error study for lambda={lam}")

    table = np.stack(finished)  # (paths, levels, snapshots)
    n = table.shape[0]
    means = table.mean(axis=0)
    worst = means.argmax(axis=1)
    errors = means[np.arange(len(levels)), worst]
    if n > 1:
        at_worst = table[:, np.arange(len(levels)), worst]
        flat = np.ptp(at_worst, axis=0) == 0
        se = np.where(flat, 0.0, at_worst.std(axis=0, ddof=1) / math.sqrt(n))
    elif not problem.noise.is_active:
        se = np.zeros(len(levels))
    else:
        se = np.full(len(levels), np.nan)

    dxs = [level.dx for level in levels]
    rates = [None]
    if len(levels) > 1 and np.all(errors > 0):
        rates += [float(r) for r in estimate_rate(errors, dxs)]
    else:
        rates += [None] * (len(levels) - 1)

    rows = [
        RateRow(
            lambda_=lam,
            dx=level.dx,
            dt=level.dt,
            error=float(error),
            se=float(s),
            rate=rate,
            theory=theoretical_bound(lam, level.dx),
        )
        for level, error, s, rate in zip(levels, errors, se, rates, strict=True)
    ]
    logger.info(
        f"Error study done: lambda={lam}, errors "
        + ", ".join(f"{row.error:.3e}" for row in rows)
    )
    return RateReport(
        rows=rows,
        seed=config.seed,
        n_paths=n,
        config_hash=config.config_hash(),
        aborted=aborted,
    )


def render_rate_table(report: RateReport) -> str:
    """Plain-text rate tables, one per lambda"""
    console = Console(width=100, record=True, file=io.StringIO(), color_system=None)
    for lam in report.lambdas:
        table = Table(title=f"lambda = {lam} ({report.n_paths} paths)")
        for column in ("dx", "Error", "SE", "Rate", "Theory (C=1)"):
            table.add_column(column, justify="right")
        for row in report.for_lambda(lam):
            table.add_row(
                f"{row.dx:.4g}",
                f"{row.error:.3e}",
                f"{row.se:.1e}",
                "-" if row.rate is None else f"{row.rate:.2f}",
                f"{row.theory:.3e}",
            )
        console.print(table)
        console.print(f"theoretical order: {theoretical_order(lam):.2f}")
    return console.export_text()


@dataclass
class LevelApriori:
    level: SolveConfig
    stats: EnsembleStats
    report: AprioriReport
    initial: InitialNorms

    @property
    def worst_overshoot(self) -> float:
        return float(self.stats.worst_overshoot.max())

    @property
    def mean_overshoot(self) -> tuple[float, float]:
        """Largest path-mean overshoot over the snapshots, with its SE"""
        means = self.stats.mean["overshoot"]
        k = int(np.argmax(means))
        se = float(self.stats.se["overshoot"][k])
        return float(means[k]), 0.0 if math.isnan(se) else se


def run_apriori_suite(
    config: RunConfig,
    lam: float | None = None,
    levels: list[SolveConfig] | None = None,
) -> list[LevelApriori]:
    """The a priori monitors at every level (coarsest dt last)"""
    lam = config.lambdas[0] if lam is None else lam
    problem = get_problem(config.problem, lam, config.flux, config.sigma_on)
    levels = config.levels() if levels is None else levels
    path_ids = list(range(config.n_paths))

    results = []
    for level in levels:
        u0 = project_initial(
            problem.u0, level.grid, level.quad_order, problem.u0_breakpoints
        )
        initial = InitialNorms.of(u0)

        def one_path(path_id, level=level, u0=u0):
            path = path_for(config, problem, path_id, level.dt)
            try:
                snapshots = evolve(problem, level, path)
                return collect(snapshots, path_id=path_id, initial=u0)
            except NumericalAbort as exc:
                logger.warning(
                    f"Path {path_id} aborted at step {exc.step_index}, "
                    f"cell {exc.cell}"
                )
                return None

        finished = [
            diag
            for diag in _map_paths(one_path, path_ids, config.threads)
            if diag is not None
        ]
        aborted = len(path_ids) - len(finished)
        _check_aborts(aborted, len(path_ids), f"a priori suite at dt={level.dt}")

        stats = aggregate(finished)
        report = check_apriori(stats, initial)
        logger.info(
            f"A priori suite: lambda={lam}, dt={level.dt}, dx={level.dx}: "
            f"{report.status}"
        )
        results.append(LevelApriori(level, stats, report, initial))
    return results


@dataclass(frozen=True)
class TrendCheck:
    level: SolveConfig
    coarser: SolveConfig
    check: AprioriCheck


def overshoot_trend(
    results: list[LevelApriori], tolerance_se: float = TREND_TOLERANCE_SE
) -> list[TrendCheck]:
    """
    Maximum principle overshoot across levels: the path-mean overshoot of
    every level may not exceed that of the next coarser dt by more than
    ``tolerance_se`` combined standard errors. A breach is a WARN.
    """
    ordered = sorted(results, key=lambda result: result.level.dt)
    checks = []
    for finer, coarser in zip(ordered, ordered[1:]):
        value, finer_se = finer.mean_overshoot
        reference, coarser_se = coarser.mean_overshoot
        se = math.hypot(finer_se, coarser_se)
        bound = reference + tolerance_se * se
        status = CheckStatus.PASS if value <= bound else CheckStatus.WARN
        if status == CheckStatus.WARN:
            logger.warning(
                f"Overshoot grows from dt={coarser.level.dt} to "
                f"dt={finer.level.dt}: {value:.3e} > {bound:.3e}"
            )
        checks.append(
            TrendCheck(
                level=finer.level,
                coarser=coarser.level,
                check=AprioriCheck(
                    "overshoot_trend", finer.level.T, value, se, bound, status
                ),
            )
        )
    return checks
