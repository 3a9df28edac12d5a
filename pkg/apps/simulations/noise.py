"""
Brownian paths at the finest time resolution and the multiplicative
noise term.

Increments come from a Philox counter-based generator keyed by
``(seed, path_id)`` with one counter block per noise mode, so a path is the
same no matter which thread builds it. They are rounded to multiples of
2**-40: every partial sum is then exact in float64 and coarse increments do
not depend on summation order.
"""

import functools
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from django.db import models

from common.exceptions import InvalidParameter

from .mesh import LatticeFunction

logger = logging.getLogger(__name__)

DEFAULT_DT_FINE = 2.0**-12
INCREMENT_QUANTUM_EXPONENT = 40
MAX_KEY = 2**64
# mode index goes into the highest of the four 64-bit counter words
MODE_COUNTER_SHIFT = 192


@dataclass(frozen=True, eq=False)
class BrownianPath:
    dt_fine: float
    increments: np.ndarray
    seed: int
    path_id: int

    def __post_init__(self):
        increments = np.array(self.increments, dtype=np.float64)
        if increments.ndim == 1:
            increments = increments[:, None]
        increments.setflags(write=False)
        object.__setattr__(self, "increments", increments)

    @property
    def n_fine_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def n_modes(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.n_fine_steps * self.dt_fine

    def level_ratio(self, level_dt: float) -> int:
        """Number of fine steps in one step of size ``level_dt``"""
        ratio = round(level_dt / self.dt_fine)
        if ratio < 1 or not math.isclose(
            ratio * self.dt_fine, level_dt, rel_tol=1e-12, abs_tol=0.0
        ):
            raise InvalidParameter(
                f"Time step {level_dt} is not a multiple of the path step "
                f"{self.dt_fine}"
            )
        return ratio

    def terminal_value(self) -> np.ndarray:
        """W(horizon) per mode"""
        return self.increments.sum(axis=0)


def _path_key(seed: int, path_id: int) -> int:
    if not (0 <= seed < MAX_KEY):
        raise InvalidParameter(f"Seed must be an unsigned 64-bit integer, got {seed}")
    if not (0 <= path_id < MAX_KEY):
        raise InvalidParameter(
            f"Path id must be an unsigned 64-bit integer, got {path_id}"
        )
    return (int(seed) << 64) | int(path_id)


def quantize(values: np.ndarray) -> np.ndarray:
    """Round to the nearest multiple of 2**-40"""
    exponent = INCREMENT_QUANTUM_EXPONENT
    return np.ldexp(np.rint(np.ldexp(values, exponent)), -exponent)


def generate_path(
    seed: int,
    path_id: int,
    n_fine_steps: int,
    n_modes: int = 1,
    dt_fine: float = DEFAULT_DT_FINE,
) -> BrownianPath:
    """
    N(0, dt_fine) increments, shape (n_fine_steps, n_modes).

    Mode k reads its own Philox counter block (k in the top counter word), so
    the draw at (step, mode) depends on neither n_modes nor n_fine_steps.
    """
    if int(n_fine_steps) != n_fine_steps or n_fine_steps < 1:
        raise InvalidParameter(f"Need at least one fine step, got {n_fine_steps}")
    if int(n_modes) != n_modes or n_modes < 1:
        raise InvalidParameter(f"Need at least one noise mode, got {n_modes}")
    if not (np.isfinite(dt_fine) and dt_fine > 0):
        raise InvalidParameter(f"Fine time step must be positive, got {dt_fine}")

    key = _path_key(seed, path_id)
    draws = np.stack(
        [
            np.random.Generator(
                np.random.Philox(key=key, counter=mode << MODE_COUNTER_SHIFT)
            ).standard_normal(int(n_fine_steps))
            for mode in range(int(n_modes))
        ],
        axis=1,
    )
    return BrownianPath(
        dt_fine=float(dt_fine),
        increments=quantize(math.sqrt(dt_fine) * draws),
        seed=int(seed),
        path_id=int(path_id),
    )


def coarse_increments(path: BrownianPath, level_dt: float) -> np.ndarray:
    """All increments at step ``level_dt``, shape (n_level_steps, n_modes)"""
    ratio = path.level_ratio(level_dt)
    if path.n_fine_steps % ratio:
        raise InvalidParameter(
            f"Path of {path.n_fine_steps} fine steps does not split into steps "
            f"of {level_dt}"
        )
    return path.increments.reshape(-1, ratio, path.n_modes).sum(axis=1)


def coarse_increment(
    path: BrownianPath, level_dt: float, n: int, mode: int = 0
) -> float:
    """W((n+1) level_dt) - W(n level_dt) for one mode"""
    ratio = path.level_ratio(level_dt)
    if n < 0 or (n + 1) * ratio > path.n_fine_steps:
        raise InvalidParameter(
            f"Window {n} at step {level_dt} lies outside the path "
            f"(horizon {path.horizon})"
        )
    if not (0 <= mode < path.n_modes):
        raise InvalidParameter(f"Mode {mode} out of range (path has {path.n_modes})")
    return float(path.increments[n * ratio : (n + 1) * ratio, mode].sum())


class NoiseMode(models.TextChoices):
    SCALAR = "scalar", "Scalar"
    FINITE_CYLINDRICAL = "finite_cylindrical", "Finite cylindrical"
    OFF = "off", "Off"


def _scaled(coefficient: float, profile: Callable, u):
    return coefficient * profile(u)


@dataclass(frozen=True)
class NoiseSpec:
    """
    sigma(u) dW for scalar noise, or sum_k h_k(u) dW_k with
    h_k = a_k * profile for a finite cylindrical noise.
    """

    mode: NoiseMode = NoiseMode.SCALAR
    sigma: Callable | None = None
    coefficients: tuple[float, ...] = ()
    profile: Callable | None = None
    sigma_cutoff: float = 1.0
    lipschitz: float = 1.0
    modes: tuple[Callable, ...] = field(init=False, repr=False)

    def __post_init__(self):
        mode = NoiseMode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode == NoiseMode.SCALAR:
            if self.sigma is None:
                raise InvalidParameter("Scalar noise needs sigma")
            modes = (self.sigma,)
        elif mode == NoiseMode.FINITE_CYLINDRICAL:
            if self.profile is None or not self.coefficients:
                raise InvalidParameter(
                    "Cylindrical noise needs a profile and at least one coefficient"
                )
            coefficients = tuple(float(a) for a in self.coefficients)
            if not all(np.isfinite(coefficients)):
                raise InvalidParameter("Noise coefficients must be finite")
            object.__setattr__(self, "coefficients", coefficients)
            modes = tuple(
                functools.partial(_scaled, a, self.profile) for a in coefficients
            )
        else:
            modes = ()
        object.__setattr__(self, "modes", modes)

    @classmethod
    def off(cls) -> "NoiseSpec":
        return cls(mode=NoiseMode.OFF)

    @property
    def is_active(self) -> bool:
        return self.mode != NoiseMode.OFF

    @property
    def n_modes(self) -> int:
        return max(len(self.modes), 1)

    def check_assumptions(self, samples: int = 401):
        """Sampled Lipschitz bound and vanishing beyond the cutoff"""
        cutoff = self.sigma_cutoff
        inside = np.linspace(-cutoff, cutoff, samples)
        outside = np.concatenate(
            [
                np.linspace(-2.0 * cutoff - 1.0, -cutoff, samples)[:-1],
                np.linspace(cutoff, 2.0 * cutoff + 1.0, samples)[1:],
            ]
        )
        for k, h in enumerate(self.modes):
            values = np.asarray(h(inside), dtype=np.float64)
            values = np.broadcast_to(values, inside.shape)
            slopes = np.abs(np.diff(values)) / np.diff(inside)
            if slopes.max(initial=0.0) > self.lipschitz * (1 + 1e-9):
                raise InvalidParameter(
                    f"Noise mode {k} exceeds Lipschitz constant {self.lipschitz}"
                )
            if np.any(np.asarray(h(outside)) != 0):
                raise InvalidParameter(
                    f"Noise mode {k} does not vanish for |u| > {cutoff}"
                )


def noise_values(
    spec: NoiseSpec, values: np.ndarray, dw: Sequence[float]
) -> np.ndarray:
    """sum_k h_k(values) * dw[k] as a plain array"""
    out = np.zeros_like(values, dtype=np.float64)
    if not spec.is_active:
        return out
    for h, increment in zip(spec.modes, dw, strict=False):
        out += np.asarray(h(values), dtype=np.float64) * increment
    return out


def noise_term(
    spec: NoiseSpec, u: LatticeFunction, path: BrownianPath, level_dt: float, n: int
) -> LatticeFunction:
    if not spec.is_active:
        return LatticeFunction.constant(u.grid, 0.0)
    if path.n_modes < spec.n_modes:
        raise InvalidParameter(
            f"Noise needs {spec.n_modes} modes, path carries {path.n_modes}"
        )
    dw = [coarse_increment(path, level_dt, n, mode) for mode in range(spec.n_modes)]
    return u.with_values(noise_values(spec, u.values, dw))
