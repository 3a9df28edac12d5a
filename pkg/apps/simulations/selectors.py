"""Read-only lookups: the problem catalogue and the run presets."""

import numpy as np

from common.exceptions import InvalidParameter

from .fluxes import FluxScheme, FluxSpec, burgers, clipped_burgers, clipped_sigma, zero
from .noise import NoiseMode, NoiseSpec
from .stepper import ProblemSpec

STUDY_LAMBDAS = (0.1, 0.3, 0.5, 0.65, 0.8)
LAMBDA_TAGS = {"01": 0.1, "03": 0.3, "05": 0.5, "065": 0.65, "08": 0.8}
CYLINDRICAL_COEFFICIENTS = (1.0, 0.5, 0.25)
DESK_PATHS = 200
FULL_PATHS = 5000


def bump(x):
    """u0(x) = 2 exp(1 / (x^2 - 1)) on (-1, 1), 0 elsewhere"""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = 2.0 * np.exp(1.0 / (x[inside] ** 2 - 1.0))
    return out


def degenerate_diffusion(u):
    """A(u) = (u - 1/2)^+"""
    return np.maximum(np.asarray(u, dtype=np.float64) - 0.5, 0.0)


def logistic_sigma(u):
    """sigma(u) = u (1 - u), without the cutoff"""
    return np.asarray(u, dtype=np.float64) * (1.0 - np.asarray(u, dtype=np.float64))


def _flux(f, scheme, f_lipschitz=1.0):
    return FluxSpec(
        f=f, f_lipschitz=f_lipschitz, scheme=scheme, critical_points=(0.0,)
    )


def _logistic(lam, scheme):
    return dict(
        flux=_flux(clipped_burgers, scheme),
        a_fn=degenerate_diffusion,
        a_lipschitz=1.0,
        noise=NoiseSpec(mode=NoiseMode.SCALAR, sigma=clipped_sigma),
        lambda_=lam,
    )


def _logistic_unclipped(lam, scheme):
    return dict(
        flux=_flux(burgers, scheme),
        a_fn=degenerate_diffusion,
        a_lipschitz=1.0,
        noise=NoiseSpec(mode=NoiseMode.SCALAR, sigma=logistic_sigma, lipschitz=3.0),
        lambda_=lam,
    )


def _logistic_cylindrical(lam, scheme):
    return dict(
        flux=_flux(clipped_burgers, scheme),
        a_fn=degenerate_diffusion,
        a_lipschitz=1.0,
        noise=NoiseSpec(
            mode=NoiseMode.FINITE_CYLINDRICAL,
            coefficients=CYLINDRICAL_COEFFICIENTS,
            profile=clipped_sigma,
        ),
        lambda_=lam,
    )


def _frozen(lam, scheme):
    return dict(
        flux=_flux(zero, scheme, f_lipschitz=0.0),
        a_fn=zero,
        a_lipschitz=0.0,
        noise=NoiseSpec.off(),
        lambda_=lam,
    )


def _burgers(lam, scheme):
    return dict(
        flux=_flux(clipped_burgers, scheme),
        a_fn=zero,
        a_lipschitz=0.0,
        noise=NoiseSpec.off(),
        lambda_=lam,
    )


PROBLEMS = {
    "logistic": _logistic,
    "logistic-unclipped": _logistic_unclipped,
    "logistic-cylindrical": _logistic_cylindrical,
    "frozen": _frozen,
    "burgers": _burgers,
}


def get_problem(
    key: str = "logistic",
    lambda_: float = 0.5,
    flux: FluxScheme | str = FluxScheme.GODUNOV,
    sigma_on: bool = True,
) -> ProblemSpec:
    """Problem ``key`` at order ``lambda_``; ``sigma_on=False`` drops the noise"""
    try:
        build = PROBLEMS[key]
    except KeyError:
        raise InvalidParameter(
            f"Unknown problem '{key}', choose from {', '.join(PROBLEMS)}"
        ) from None
    parts = build(lambda_, FluxScheme.parse(flux))
    if not sigma_on:
        parts["noise"] = NoiseSpec.off()
    return ProblemSpec(u0=bump, u0_breakpoints=(-1.0, 1.0), name=key, **parts)


def _presets():
    presets = {
        "desk": {"paths": DESK_PATHS, "lambda": STUDY_LAMBDAS},
        "paper": {"paths": FULL_PATHS, "lambda": STUDY_LAMBDAS},
    }
    for tag, lam in LAMBDA_TAGS.items():
        presets[f"desk-lambda{tag}"] = {"paths": DESK_PATHS, "lambda": (lam,)}
        presets[f"paper-lambda{tag}"] = {"paths": FULL_PATHS, "lambda": (lam,)}
    return presets


PRESETS = _presets()


def get_preset(name: str) -> dict:
    """Configuration values of preset ``name`` (a fresh copy)"""
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise InvalidParameter(
            f"Unknown preset '{name}', choose from {', '.join(PRESETS)}"
        ) from None
