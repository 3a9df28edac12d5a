import logging
from pathlib import Path

from django.conf import settings

from common.exceptions import InvalidParameter
from common.utils import provenance_line, write_csv

from . import __version__
from .diagnostics import AprioriReport, render_report
from .experiments import (
    RATE_COLUMNS,
    RunConfig,
    overshoot_trend,
    path_for,
    render_rate_table,
    run_apriori_suite,
    run_error_study,
)
from .kernels import weights
from .mesh import bv_seminorm
from .selectors import get_problem
from .serializers import RunConfigSerializer, merge_options, parse_config_file
from .stepper import evolve

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ("t", "x", "u")
TRACE_COLUMNS = ("step", "t", "min", "max", "mass", "bv")
WEIGHT_COLUMNS = ("i", "G_i")
CHECK_COLUMNS = ("dt", "dx", "estimate", "t", "value", "se", "bound", "status")


class SimulationService:
    """Runs one subcommand end to end and writes its output files"""

    @staticmethod
    def build_config(options: dict, config_path=None) -> tuple[RunConfig, dict]:
        """
        Merge preset, config file and flags, validate, and return the
        RunConfig together with the validated options (``out``, ``trace``).
        """
        file_values = parse_config_file(config_path) if config_path else {}
        merged = merge_options(file_values, options)
        merged.setdefault("seed", settings.STOCHFRAC_DEFAULT_SEED)
        if settings.STOCHFRAC_THREADS is not None:
            merged.setdefault("threads", settings.STOCHFRAC_THREADS)

        serializer = RunConfigSerializer(data=merged)
        serializer.is_valid(raise_exception=True)
        config = serializer.save()
        logger.debug(f"Run configuration {config.config_hash()}: {config}")
        return config, dict(serializer.validated_data)

    @staticmethod
    def output_dir(out=None) -> Path:
        return Path(out or settings.STOCHFRAC_OUT_DIR)

    @staticmethod
    def _single_lambda(config: RunConfig, command: str) -> float:
        if len(config.lambdas) != 1:
            raise InvalidParameter(
                f"{command} takes exactly one lambda, got {list(config.lambdas)}"
            )
        return config.lambdas[0]

    @staticmethod
    def _header(config: RunConfig) -> str:
        return provenance_line(__version__, config.config_hash(), config.seed)

    @staticmethod
    def solve(config: RunConfig, out_dir: Path, trace: bool = False) -> list[Path]:
        """One path (id 0) at the selected level: profiles, plus the step trace"""
        lam = SimulationService._single_lambda(config, "solve")
        problem = get_problem(config.problem, lam, config.flux, config.sigma_on)
        level = config.solve_level()
        path = path_for(config, problem, 0, level.dt)
        logger.info(
            f"Solving {problem.name}: lambda={lam}, dx={level.dx}, dt={level.dt}, "
            f"K={level.k_cells}, {level.n_steps} steps"
        )

        trace_rows = []

        def record(state):
            values = state.u.values
            trace_rows.append(
                (
                    state.step_index,
                    float(state.t),
                    float(values.min()),
                    float(values.max()),
                    state.u.mass(),
                    bv_seminorm(state.u),
                )
            )

        snapshots = evolve(problem, level, path, trace=record if trace else None)
        header = SimulationService._header(config)
        profile_rows = (
            (float(t), float(x), float(u))
            for t in sorted(snapshots)
            for x, u in zip(
                snapshots[t].grid.centers, snapshots[t].values, strict=True
            )
        )
        written = [
            write_csv(
                out_dir / "solve_profiles.csv", header, PROFILE_COLUMNS, profile_rows
            )
        ]
        if trace:
            written.append(
                write_csv(out_dir / "trace.csv", header, TRACE_COLUMNS, trace_rows)
            )
        return written

    @staticmethod
    def rates(config: RunConfig, out_dir: Path) -> list[Path]:
        report = run_error_study(config)
        header = SimulationService._header(config)
        csv_path = write_csv(
            out_dir / "rates.csv", header, RATE_COLUMNS, report.csv_rows()
        )
        text_path = out_dir / "rates.txt"
        text_path.write_text(
            header + "\n" + render_rate_table(report), encoding="utf-8"
        )
        if report.aborted:
            logger.warning(f"{report.aborted} paths aborted and were left out")
        return [csv_path, text_path]

    @staticmethod
    def weights(config: RunConfig, out_dir: Path) -> list[Path]:
        """G_0 ... G_imax at the selected lambda and dx"""
        lam = SimulationService._single_lambda(config, "weights")
        dx = config.dx if config.dx is not None else config.solve_level().dx
        i_max = config.i_max
        if i_max is None:
            i_max = 2 * max(round(config.half_width / dx), 1)
        table = weights(lam, dx, i_max)
        rows = ((i, float(g)) for i, g in enumerate(table))
        return [
            write_csv(
                out_dir / "weights.csv",
                SimulationService._header(config),
                WEIGHT_COLUMNS,
                rows,
            )
        ]

    @staticmethod
    def check(config: RunConfig, out_dir: Path) -> list[Path]:
        """
        The a priori suite at the selected level, or at every coarse level
        when no dx/dt/K override is given.
        """
        lam = SimulationService._single_lambda(config, "check")
        problem = get_problem(config.problem, lam, config.flux, config.sigma_on)
        try:
            problem.check_assumptions()
        except InvalidParameter as exc:
            logger.warning(f"Problem '{problem.name}' breaks an assumption: {exc}")

        single = any(v is not None for v in (config.dx, config.dt, config.k_cells))
        levels = [config.solve_level()] if single else config.levels()
        results = run_apriori_suite(config, lam, levels)
        trend = overshoot_trend(results)

        header = SimulationService._header(config)
        rows = [
            (result.level.dt, result.level.dx, *row)
            for result in results
            for row in result.report.rows()
        ]
        rows += [(item.level.dt, item.level.dx, *item.check.row()) for item in trend]
        csv_path = write_csv(out_dir / "check.csv", header, CHECK_COLUMNS, rows)

        sections = [header]
        for result in results:
            level = result.level
            sections.append(
                render_report(
                    result.report,
                    title=f"lambda={lam}, dt={level.dt:g}, dx={level.dx:g}",
                )
            )
            mean, se = result.mean_overshoot
            sections.append(
                f"overshoot: worst {result.worst_overshoot:.3e}, "
                f"path mean {mean:.3e} (SE {se:.1e})\n"
            )
        if trend:
            sections.append(
                render_report(
                    AprioriReport(
                        n_paths=config.n_paths, checks=[item.check for item in trend]
                    ),
                    title=f"lambda={lam}, overshoot across dt levels",
                )
            )
        text_path = out_dir / "check.txt"
        text_path.write_text("\n".join(sections), encoding="utf-8")

        failed = [result for result in results if not result.report.passed]
        for result in failed:
            logger.warning(f"A priori check failed at dt={result.level.dt}")
        return [csv_path, text_path]
