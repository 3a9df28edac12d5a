"""
Monotone two-point numerical fluxes F(a, b) for the advective term.

Every function works elementwise on numpy arrays so a whole interface
array is evaluated in one call; scalars in give floats out.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from django.db import models

from common.exceptions import InvalidParameter


class FluxScheme(models.TextChoices):
    GODUNOV = "godunov", "Godunov"
    ENGQUIST_OSHER = "engquist_osher", "Engquist-Osher"
    LAX_FRIEDRICHS = "lax_friedrichs", "Lax-Friedrichs"

    @classmethod
    def parse(cls, value) -> "FluxScheme":
        """Accepts the full names plus the short CLI spellings (eo, llf)"""
        key = str(value).strip().lower()
        key = FLUX_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InvalidParameter(f"Unknown flux scheme '{value}'") from None


FLUX_ALIASES = {
    "eo": FluxScheme.ENGQUIST_OSHER,
    "llf": FluxScheme.LAX_FRIEDRICHS,
    "lf": FluxScheme.LAX_FRIEDRICHS,
}


def burgers(u):
    return 0.5 * np.square(u)


def clipped_burgers(u):
    """f(u) = min(1, |u|)^2 / 2"""
    return 0.5 * np.square(np.minimum(1.0, np.abs(u)))


def clipped_sigma(u):
    """sigma(u) = u^+ (1 - u)^+"""
    return np.maximum(u, 0.0) * np.maximum(1.0 - u, 0.0)


def zero(u):
    return np.zeros_like(np.asarray(u, dtype=np.float64))


@dataclass(frozen=True)
class FluxSpec:
    """
    A physical flux f together with what the numerical flux needs to know.

    ``critical_points`` lists the points where f' changes sign; between
    consecutive points f must be monotone (Godunov and Engquist-Osher only
    look at endpoints and these points). ``lf_theta`` defaults to the
    Lipschitz constant.
    """

    f: Callable
    f_lipschitz: float
    scheme: FluxScheme = FluxScheme.GODUNOV
    lf_theta: float | None = None
    critical_points: tuple[float, ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.f_lipschitz) or self.f_lipschitz < 0:
            raise InvalidParameter(
                f"Flux Lipschitz constant must be >= 0, got {self.f_lipschitz}"
            )
        object.__setattr__(self, "scheme", FluxScheme.parse(self.scheme))
        points = tuple(sorted(float(c) for c in self.critical_points))
        object.__setattr__(self, "critical_points", points)
        theta = self.f_lipschitz if self.lf_theta is None else float(self.lf_theta)
        if theta < self.f_lipschitz:
            raise InvalidParameter(
                f"Lax-Friedrichs theta={theta} is below the flux Lipschitz "
                f"constant {self.f_lipschitz}; the flux would not be monotone"
            )
        object.__setattr__(self, "lf_theta", theta)

    @property
    def numerical_lipschitz(self) -> float:
        """Lipschitz constant of F in each argument (enters the CFL bound)"""
        if self.scheme == FluxScheme.LAX_FRIEDRICHS:
            return max(self.f_lipschitz, self.lf_theta)
        return self.f_lipschitz

    def __call__(self, a, b):
        return numerical_flux(self, a, b)


def numerical_flux(spec: FluxSpec, a, b):
    """F(a, b) for the scheme selected in ``spec``"""
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(a_arr)) and np.all(np.isfinite(b_arr))):
        raise InvalidParameter("Numerical flux needs finite states")

    if spec.scheme == FluxScheme.GODUNOV:
        out = _godunov(spec, a_arr, b_arr)
    elif spec.scheme == FluxScheme.ENGQUIST_OSHER:
        out = _engquist_osher(spec, a_arr, b_arr)
    else:
        out = _lax_friedrichs(spec, a_arr, b_arr)

    return float(out) if np.ndim(out) == 0 else out


def _godunov(spec, a, b):
    # min of f over [a, b] if a <= b, max over [b, a] otherwise
    fa = np.asarray(spec.f(a), dtype=np.float64)
    fb = np.asarray(spec.f(b), dtype=np.float64)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    low_f = np.minimum(fa, fb)
    high_f = np.maximum(fa, fb)
    for point in spec.critical_points:
        inside = (lo < point) & (point < hi)
        value = float(spec.f(point))
        low_f = np.where(inside, np.minimum(low_f, value), low_f)
        high_f = np.where(inside, np.maximum(high_f, value), high_f)
    return np.where(a <= b, low_f, high_f)


def _engquist_osher(spec, a, b):
    # (f(a) + f(b)) / 2 - (1/2) int_a^b |f'(s)| ds
    fa = np.asarray(spec.f(a), dtype=np.float64)
    fb = np.asarray(spec.f(b), dtype=np.float64)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    nodes = [lo] + [np.clip(point, lo, hi) for point in spec.critical_points] + [hi]
    values = np.stack([np.asarray(spec.f(node), dtype=np.float64) for node in nodes])
    variation = np.abs(np.diff(values, axis=0)).sum(axis=0)
    return 0.5 * (fa + fb) - 0.5 * np.sign(b - a) * variation


def _lax_friedrichs(spec, a, b):
    fa = np.asarray(spec.f(a), dtype=np.float64)
    fb = np.asarray(spec.f(b), dtype=np.float64)
    return 0.5 * (fa + fb) - 0.5 * spec.lf_theta * (b - a)
