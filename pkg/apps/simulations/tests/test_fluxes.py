import numpy as np
import pytest

from apps.simulations.fluxes import (
    FluxScheme,
    FluxSpec,
    burgers,
    clipped_burgers,
    clipped_sigma,
    numerical_flux,
)
from common.exceptions import InvalidParameter

SCHEMES = list(FluxScheme)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def clipped_spec(scheme, **kwargs):
    return FluxSpec(
        f=clipped_burgers,
        f_lipschitz=1.0,
        scheme=scheme,
        critical_points=(0.0,),
        **kwargs,
    )


class TestPhysicalFluxes:
    def test_clipped_burgers(self):
        """u^2/2 inside [-1, 1], constant 1/2 outside"""
        assert clipped_burgers(0.5) == 0.125
        assert clipped_burgers(3.0) == 0.5
        assert clipped_burgers(-3.0) == 0.5

    def test_clipped_sigma(self):
        """u+(1-u)+ vanishes outside [0, 1], peaks at 1/2"""
        assert clipped_sigma(0.5) == 0.25
        assert clipped_sigma(-1.0) == 0.0
        assert clipped_sigma(2.0) == 0.0
        u = np.linspace(-1, 2, 3001)
        assert u[np.argmax(clipped_sigma(u))] == pytest.approx(0.5)


class TestNumericalFlux:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_consistency(self, scheme, rng):
        """F(u, u) = f(u)"""
        spec = clipped_spec(scheme)
        u = rng.uniform(-2, 2, 1000)
        np.testing.assert_allclose(
            numerical_flux(spec, u, u), clipped_burgers(u), rtol=0, atol=1e-15
        )

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_monotone(self, scheme, rng):
        """Nondecreasing in a, nonincreasing in b"""
        spec = clipped_spec(scheme)
        a = rng.uniform(-2, 2, 10_000)
        b = rng.uniform(-2, 2, 10_000)
        eps = rng.uniform(1e-6, 0.5, 10_000)
        base = spec(a, b)
        assert np.all(spec(a + eps, b) >= base - 1e-14)
        assert np.all(spec(a, b + eps) <= base + 1e-14)

    def test_godunov_burgers(self):
        """Max over [b, a] for a > b, min over [a, b] otherwise"""
        spec = FluxSpec(f=burgers, f_lipschitz=1.0, critical_points=(0.0,))
        assert spec(1.0, -1.0) == 0.5
        assert spec(0.0, 1.0) == 0.0
        assert spec(-1.0, 1.0) == 0.0
        assert spec(1.0, 0.0) == 0.5

    def test_godunov_brute_force(self, rng):
        """Matches min/max over a dense sample of the interval"""
        spec = clipped_spec(FluxScheme.GODUNOV)
        for a, b in rng.uniform(-2, 2, (50, 2)):
            s = np.linspace(min(a, b), max(a, b), 20001)
            values = clipped_burgers(s)
            expected = values.min() if a <= b else values.max()
            assert spec(a, b) == pytest.approx(expected, abs=1e-6)

    def test_engquist_osher_burgers(self):
        """Closed form f(max(a,0)) + f(min(b,0)) for Burgers"""
        spec = FluxSpec(
            f=burgers,
            f_lipschitz=1.0,
            scheme=FluxScheme.ENGQUIST_OSHER,
            critical_points=(0.0,),
        )
        for a, b in [(1.0, -1.0), (-0.5, 0.7), (0.3, 0.9), (-0.8, -0.2)]:
            expected = burgers(max(a, 0.0)) + burgers(min(b, 0.0))
            assert spec(a, b) == pytest.approx(expected, abs=1e-15)

    def test_lax_friedrichs(self):
        """Central average minus theta/2 times the jump"""
        spec = clipped_spec(FluxScheme.LAX_FRIEDRICHS, lf_theta=2.0)
        expected = 0.5 * (0.125 + 0.0) - 1.0 * (0.0 - 0.5)
        assert spec(0.5, 0.0) == pytest.approx(expected)
        assert spec.numerical_lipschitz == 2.0

    def test_scalar_input_returns_float(self):
        """Scalars in, float out"""
        assert isinstance(clipped_spec(FluxScheme.GODUNOV)(0.2, 0.4), float)

    def test_rejects_non_finite(self):
        """States must be finite"""
        with pytest.raises(InvalidParameter):
            clipped_spec(FluxScheme.GODUNOV)(np.nan, 0.0)


class TestFluxSpec:
    def test_theta_defaults_to_lipschitz(self):
        """lf_theta defaults to L_f"""
        assert clipped_spec(FluxScheme.LAX_FRIEDRICHS).lf_theta == 1.0

    def test_theta_below_lipschitz(self):
        """A theta below L_f would break monotonicity"""
        with pytest.raises(InvalidParameter):
            clipped_spec(FluxScheme.LAX_FRIEDRICHS, lf_theta=0.5)

    def test_parse_aliases(self):
        """Short command-line names map onto the schemes"""
        assert FluxScheme.parse("eo") == FluxScheme.ENGQUIST_OSHER
        assert FluxScheme.parse("llf") == FluxScheme.LAX_FRIEDRICHS
        assert FluxScheme.parse("Godunov") == FluxScheme.GODUNOV
        with pytest.raises(InvalidParameter):
            FluxScheme.parse("roe")

    def test_critical_points_sorted(self):
        """Critical points are stored in ascending order"""
        spec = FluxSpec(f=burgers, f_lipschitz=1.0, critical_points=(1.0, -1.0))
        assert spec.critical_points == (-1.0, 1.0)
