"""
Per-path monitors of the a priori estimates and their Monte Carlo
aggregation.

A path contributes one PathDiagnostics (every field sampled at every
snapshot time); an ensemble is reduced to means and standard errors once
all paths are done.
"""

import io
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from django.db import models
from rich.console import Console
from rich.table import Table

from common.exceptions import InvalidParameter

from .mesh import LatticeFunction, bv_seminorm, l1_distance, lp_norm

logger = logging.getLogger(__name__)

FIELDS = (
    "l1_norm",
    "l2_norm",
    "bv",
    "min_u",
    "max_u",
    "mass",
    "overshoot",
    "time_increment",
)
TOLERANCE_SE = 3.0
BV_RETRY_FACTOR = 1.1


def overshoot(min_u, max_u, lower: float = 0.0, upper: float = 1.0):
    """How far values leave [lower, upper]; 0 inside"""
    return np.maximum(np.maximum(max_u - upper, lower - min_u), 0.0)


@dataclass(frozen=True, eq=False)
class PathDiagnostics:
    path_id: int
    times: tuple[float, ...]
    l1_norm: np.ndarray
    l2_norm: np.ndarray
    bv: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    mass: np.ndarray
    overshoot: np.ndarray
    # L1 distance to the previous snapshot (to the initial data for the first)
    time_increment: np.ndarray

    def values_of(self, name: str) -> np.ndarray:
        return getattr(self, name)


def collect(
    snapshots: Mapping[float, LatticeFunction],
    path_id: int = 0,
    bounds: tuple[float, float] = (0.0, 1.0),
    initial: LatticeFunction | None = None,
) -> PathDiagnostics:
    """
    Norms, BV, extremes and mass of one path at each snapshot time, and the
    L1 change since the previous snapshot. The first change is measured
    from ``initial`` when given, otherwise it is 0.
    """
    if not snapshots:
        raise InvalidParameter("No snapshots to collect diagnostics from")
    times = tuple(sorted(snapshots))
    states = [snapshots[t] for t in times]
    previous = [states[0] if initial is None else initial, *states[:-1]]
    min_u = np.array([u.values.min() for u in states])
    max_u = np.array([u.values.max() for u in states])
    return PathDiagnostics(
        path_id=int(path_id),
        times=times,
        l1_norm=np.array([lp_norm(u, 1.0) for u in states]),
        l2_norm=np.array([lp_norm(u, 2.0) for u in states]),
        bv=np.array([bv_seminorm(u) for u in states]),
        min_u=min_u,
        max_u=max_u,
        mass=np.array([u.mass() for u in states]),
        overshoot=overshoot(min_u, max_u, *bounds),
        time_increment=np.array(
            [l1_distance(u, before) for u, before in zip(states, previous)]
        ),
    )


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    times: tuple[float, ...]
    n_paths: int
    mean: dict[str, np.ndarray]
    se: dict[str, np.ndarray]
    # extremes over every path, not averaged
    lowest: np.ndarray
    highest: np.ndarray
    worst_overshoot: np.ndarray


def aggregate(diagnostics: Sequence[PathDiagnostics]) -> EnsembleStats:
    """
    Sample mean and standard error (sample std / sqrt(n)) of every field.

    Paths are ordered by id first, so the result does not depend on the
    order in which workers finished. A field that is identical on every
    path gets that exact value and SE 0.
    """
    if not diagnostics:
        raise InvalidParameter("Cannot aggregate an empty list of paths")
    times = diagnostics[0].times
    for diag in diagnostics:
        if diag.times != times:
            raise InvalidParameter(
                f"Path {diag.path_id} has snapshot times {diag.times}, "
                f"expected {times}"
            )

    ordered = sorted(diagnostics, key=lambda diag: diag.path_id)
    n = len(ordered)
    mean, se = {}, {}
    for name in FIELDS:
        table = np.stack([diag.values_of(name) for diag in ordered])
        flat = np.ptp(table, axis=0) == 0
        mean[name] = np.where(flat, table[0], table.mean(axis=0))
        if n < 2:
            se[name] = np.full(len(times), np.nan)
        else:
            spread = table.std(axis=0, ddof=1) / math.sqrt(n)
            se[name] = np.where(flat, 0.0, spread)

    return EnsembleStats(
        times=times,
        n_paths=n,
        mean=mean,
        se=se,
        lowest=np.min([diag.min_u for diag in ordered], axis=0),
        highest=np.max([diag.max_u for diag in ordered], axis=0),
        worst_overshoot=np.max([diag.overshoot for diag in ordered], axis=0),
    )


@dataclass(frozen=True)
class InitialNorms:
    l1_norm: float
    l2_norm: float
    bv: float
    min_u: float
    max_u: float
    mass: float

    @classmethod
    def of(cls, u0: LatticeFunction) -> "InitialNorms":
        return cls(
            l1_norm=lp_norm(u0, 1.0),
            l2_norm=lp_norm(u0, 2.0),
            bv=bv_seminorm(u0),
            min_u=float(u0.values.min()),
            max_u=float(u0.values.max()),
            mass=u0.mass(),
        )


class CheckStatus(models.TextChoices):
    PASS = "PASS", "Pass"
    WARN = "WARN", "Warn"
    FAIL = "FAIL", "Fail"


@dataclass(frozen=True)
class AprioriCheck:
    estimate: str
    t: float
    value: float
    se: float
    bound: float
    status: CheckStatus

    @property
    def slack(self) -> float:
        return self.bound - self.value

    def row(self) -> tuple:
        return (
            self.estimate,
            float(self.t),
            float(self.value),
            float(self.se),
            float(self.bound),
            str(self.status),
        )


@dataclass
class AprioriReport:
    n_paths: int
    checks: list[AprioriCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.status != CheckStatus.FAIL for check in self.checks)

    @property
    def status(self) -> CheckStatus:
        statuses = {check.status for check in self.checks}
        for status in (CheckStatus.FAIL, CheckStatus.WARN):
            if status in statuses:
                return status
        return CheckStatus.PASS

    def for_estimate(self, estimate: str) -> list[AprioriCheck]:
        return [check for check in self.checks if check.estimate == estimate]

    def rows(self):
        for check in self.checks:
            yield check.row()


REPORT_COLUMNS = ("estimate", "t", "value", "se", "bound", "status")


def check_apriori(
    stats: EnsembleStats,
    u0_norms: InitialNorms,
    tolerance_se: float = TOLERANCE_SE,
    bounds: tuple[float, float] = (0.0, 1.0),
) -> AprioriReport:
    """
    L1 and BV estimates at every snapshot within ``tolerance_se`` standard
    errors. The L2 moment, the L1 change between snapshots and the maximum
    principle overshoot are reported as PASS or WARN, never FAIL.
    """
    report = AprioriReport(n_paths=stats.n_paths)
    lower, upper = bounds

    for k, t in enumerate(stats.times):
        l1, l1_se = _mean_and_se(stats, "l1_norm", k)
        bound = u0_norms.l1_norm + tolerance_se * l1_se
        status = CheckStatus.PASS if l1 <= bound else CheckStatus.FAIL
        report.checks.append(AprioriCheck("l1", t, l1, l1_se, bound, status))

        l2, l2_se = _mean_and_se(stats, "l2_norm", k)
        bound = u0_norms.l2_norm + tolerance_se * l2_se
        status = CheckStatus.PASS if l2 <= bound else CheckStatus.WARN
        report.checks.append(AprioriCheck("l2", t, l2, l2_se, bound, status))

        bv, bv_se = _mean_and_se(stats, "bv", k)
        bound = u0_norms.bv + tolerance_se * bv_se
        if bv <= bound:
            status = CheckStatus.PASS
        else:
            bound = BV_RETRY_FACTOR * u0_norms.bv + tolerance_se * bv_se
            status = CheckStatus.WARN if bv <= bound else CheckStatus.FAIL
        report.checks.append(AprioriCheck("bv", t, bv, bv_se, bound, status))

        # ||u(t) - u(s)||_L1 <= ||u(t)||_L1 + ||u(s)||_L1 <= 2 ||u0||_L1
        change, change_se = _mean_and_se(stats, "time_increment", k)
        bound = 2.0 * u0_norms.l1_norm + tolerance_se * change_se
        status = CheckStatus.PASS if change <= bound else CheckStatus.WARN
        report.checks.append(
            AprioriCheck("time_continuity", t, change, change_se, bound, status)
        )

        worst = float(
            overshoot(stats.lowest[k], stats.highest[k], lower=lower, upper=upper)
        )
        _, over_se = _mean_and_se(stats, "overshoot", k)
        status = CheckStatus.PASS if worst == 0 else CheckStatus.WARN
        report.checks.append(
            AprioriCheck("max_principle", t, worst, over_se, 0.0, status)
        )

    failed = [check for check in report.checks if check.status == CheckStatus.FAIL]
    for check in failed:
        logger.warning(
            f"A priori {check.estimate} estimate failed at t={check.t}: "
            f"{check.value:.6g} > {check.bound:.6g}"
        )
    return report


def _mean_and_se(stats: EnsembleStats, name: str, k: int) -> tuple[float, float]:
    mean = float(stats.mean[name][k])
    se = float(stats.se[name][k])
    # a single path has no spread estimate; compare the mean alone
    return mean, 0.0 if math.isnan(se) else se


def render_report(report: AprioriReport, title: str = "A priori estimates") -> str:
    """Plain-text table of the report"""
    table = Table(title=f"{title} ({report.n_paths} paths)")
    for column in REPORT_COLUMNS:
        table.add_column(column, justify="left" if column == "estimate" else "right")
    for estimate, t, value, se, bound, status in report.rows():
        table.add_row(
            estimate, f"{t:g}", f"{value:.6e}", f"{se:.2e}", f"{bound:.6e}", status
        )
    return _export(table)


def _export(table: Table) -> str:
    console = Console(width=120, record=True, file=io.StringIO(), color_system=None)
    console.print(table)
    return console.export_text()
