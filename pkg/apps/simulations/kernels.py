"""
Discrete fractional Laplacian weights on a uniform 1-D grid.

``G_i`` is the coupling between cells at offset ``i`` obtained by
integrating the truncated kernel ``d_lambda |z|^{-1-2 lambda}``
(``|z| > dx/2``) over a pair of cells. The closed forms are evaluated in
a cancellation-free way; ``quadrature_oracle`` integrates the defining
double integral directly and is used to validate them.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from common.exceptions import InvalidParameter

logger = logging.getLogger(__name__)

# Below this distance from 1/2 the lambda != 1/2 formulas lose too many digits
HALF_BAND = 1e-4


def _check_lambda(lam: float):
    if not (0.0 < lam < 1.0):
        raise InvalidParameter(f"lambda must lie in (0, 1), got {lam}")


def _check_dx(dx: float):
    if not (np.isfinite(dx) and dx > 0):
        raise InvalidParameter(f"dx must be positive, got {dx}")


def d_lambda(lam: float) -> float:
    """Normalisation constant of the fractional Laplacian in one dimension"""
    _check_lambda(lam)
    return float(
        4.0**lam
        * special.gamma((1.0 + 2.0 * lam) / 2.0)
        / (math.sqrt(math.pi) * special.gamma(1.0 - lam))
    )


def measure_outside(lam: float, radius: float) -> float:
    """mu(|z| > radius) for d mu = d_lambda |z|^{-1-2 lambda} dz"""
    return d_lambda(lam) * radius ** (-2.0 * lam) / lam


def _closed_form(lam: float, dx: float, offsets: np.ndarray) -> np.ndarray:
    i = np.abs(np.asarray(offsets, dtype=np.int64)).astype(np.float64)
    d = d_lambda(lam)
    out = np.empty_like(i)
    zero, one, far = i == 0, i == 1, i >= 2

    if lam == 0.5:
        out[zero] = d * (2.0 + 2.0 * math.log(2.0))
        out[one] = -d
        # -d ln(i^2 / (i^2 - 1))
        out[far] = d * np.log1p(-1.0 / i[far] ** 2)
        return out

    p = 1.0 - 2.0 * lam
    scale = d * dx**p / (2.0 * lam * p)
    out[zero] = 2.0 * scale * (1.0 - lam * 4.0**lam)
    out[one] = scale * (2.0**p + lam * 4.0**lam - 2.0)
    # (i-1)^p - 2 i^p + (i+1)^p without cancellation
    j = i[far]
    out[far] = (
        scale
        * j**p
        * (np.expm1(p * np.log1p(-1.0 / j)) + np.expm1(p * np.log1p(1.0 / j)))
    )
    return out


def _uses_oracle(lam: float) -> bool:
    return lam != 0.5 and abs(lam - 0.5) < HALF_BAND


def weight(lam: float, dx: float, i: int) -> float:
    """G_i for cell offset ``i`` (symmetric in i)"""
    _check_lambda(lam)
    _check_dx(dx)
    if _uses_oracle(lam):
        return quadrature_oracle(lam, dx, i)
    return float(_closed_form(lam, dx, np.array([i]))[0])


def weights(lam: float, dx: float, i_max: int) -> np.ndarray:
    """G_0 ... G_{i_max}"""
    _check_lambda(lam)
    _check_dx(dx)
    offsets = np.arange(int(i_max) + 1)
    if _uses_oracle(lam):
        return np.array([quadrature_oracle(lam, dx, int(i)) for i in offsets])
    return _closed_form(lam, dx, offsets)


def _mu_interval(lam: float, d: float, lo: float, hi: float, cutoff: float) -> float:
    """mu((lo, hi) intersected with {|z| > cutoff})"""
    power = -2.0 * lam
    total = 0.0
    a, b = max(lo, cutoff), hi
    if b > a:
        total += (a**power - b**power) / (2.0 * lam)
    a, b = max(-hi, cutoff), -lo
    if b > a:
        total += (a**power - b**power) / (2.0 * lam)
    return d * total


def quadrature_oracle(
    lam: float,
    dx: float,
    i: int,
    tol: float = 1e-13,
    limit: int = 200,
    full_output: bool = False,
):
    """
    G_i straight from its definition

        G_i = int_{R_0} int_{|z|>dx/2} [1_{R_i}(x) - 1_{R_i}(x+z)] d mu(z) dx

    The inner integral uses the antiderivative of |z|^{-1-2 lambda}; the
    outer one is adaptive (scipy quad) with a breakpoint at the kink x = 0.
    With ``full_output`` returns ``(value, achieved_error)``.
    """
    _check_lambda(lam)
    _check_dx(dx)
    if tol <= 0:
        raise InvalidParameter(f"Tolerance must be positive, got {tol}")

    d = d_lambda(lam)
    half = 0.5 * dx
    i = abs(int(i))
    total_mass = d * half ** (-2.0 * lam) / lam if i == 0 else 0.0
    lo_edge, hi_edge = (i - 0.5) * dx, (i + 0.5) * dx

    def integrand(x):
        return total_mass - _mu_interval(lam, d, lo_edge - x, hi_edge - x, half)

    value, error = integrate.quad(
        integrand, -half, half, points=[0.0], epsabs=tol, epsrel=1e-13, limit=limit
    )
    if error > max(tol, 1e-13 * abs(value)):
        logger.warning(
            f"Quadrature for G_{i} (lambda={lam}, dx={dx}) reached {error:.3e}, "
            f"requested {tol:.3e}"
        )
    return (value, error) if full_output else value


def tail_sum(lam: float, dx: float, n: int) -> float:
    """Sum_{j >= n} G_j through the zero total sum: -(G_0 + 2 sum_{0<j<n} G_j) / 2"""
    if int(n) != n or n < 1:
        raise InvalidParameter(f"Tail start must be >= 1, got {n}")
    w = weights(lam, dx, int(n) - 1)
    return -0.5 * (w[0] + 2.0 * math.fsum(w[1:]))


def tail_sum_closed_form(lam: float, dx: float, n: int) -> float:
    """Sum_{j >= n} G_j by telescoping the weight table"""
    if int(n) != n or n < 1:
        raise InvalidParameter(f"Tail start must be >= 1, got {n}")
    _check_lambda(lam)
    _check_dx(dx)
    if n == 1 or _uses_oracle(lam):
        return tail_sum(lam, dx, n)
    d = d_lambda(lam)
    if lam == 0.5:
        return d * math.log1p(-1.0 / n)
    p = 1.0 - 2.0 * lam
    scale = d * dx**p / (2.0 * lam * p)
    # -(n^p - (n-1)^p)
    return scale * n**p * math.expm1(p * math.log1p(-1.0 / n))


@dataclass(frozen=True, eq=False)
class WeightKernel:
    """One-sided table G_0 ... G_{i_max} with its prefix sums"""

    lambda_: float
    dx: float
    d_lambda: float
    weights: np.ndarray

    def __post_init__(self):
        table = np.array(self.weights, dtype=np.float64)
        table.setflags(write=False)
        object.__setattr__(self, "weights", table)
        # S(b) = sum_{|j| < b} G_j for b = 0 .. i_max + 1
        sums = np.concatenate([[0.0], 2.0 * np.cumsum(table) - table[0]])
        sums.setflags(write=False)
        object.__setattr__(self, "_partial_sums", sums)

    @property
    def i_max(self) -> int:
        return len(self.weights) - 1

    def __getitem__(self, i: int) -> float:
        return float(self.weights[abs(int(i))])

    def partial_sum(self, b: int) -> float:
        """S(b) = sum_{|j| < b} G_j"""
        return float(self._partial_sums[b])

    def tail(self, n: int) -> float:
        """Sum_{j >= n} G_j for 0 <= n <= i_max + 1"""
        if n == 0:
            return 0.5 * float(self.weights[0])
        return -0.5 * float(self._partial_sums[n])

    def tails(self) -> np.ndarray:
        """tail(n) for n = 0 .. i_max + 1"""
        out = -0.5 * self._partial_sums.copy()
        out[0] = 0.5 * self.weights[0]
        return out

    def diagonal_bound(self) -> float:
        """dx * mu(|z| > dx/2), the bound on G_0"""
        return self.dx * measure_outside(self.lambda_, 0.5 * self.dx)

    def rows(self):
        return [(i, float(g)) for i, g in enumerate(self.weights)]


def build_kernel(lam: float, dx: float, i_max: int) -> WeightKernel:
    if int(i_max) != i_max or i_max < 1:
        raise InvalidParameter(f"i_max must be >= 1, got {i_max}")
    return WeightKernel(
        lambda_=float(lam),
        dx=float(dx),
        d_lambda=d_lambda(lam),
        weights=weights(lam, dx, int(i_max)),
    )


@lru_cache(maxsize=64)
def get_kernel(lam: float, dx: float, i_max: int) -> WeightKernel:
    """Shared, read-only kernel per (lambda, dx, i_max)"""
    return build_kernel(lam, dx, i_max)
