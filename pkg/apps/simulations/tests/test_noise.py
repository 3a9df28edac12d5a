import math

import numpy as np
import pytest

from apps.simulations.fluxes import clipped_sigma
from apps.simulations.mesh import Grid1D, LatticeFunction
from apps.simulations.noise import (
    DEFAULT_DT_FINE,
    BrownianPath,
    NoiseMode,
    NoiseSpec,
    coarse_increment,
    coarse_increments,
    generate_path,
    noise_term,
    quantize,
)
from apps.simulations.selectors import logistic_sigma
from common.exceptions import InvalidParameter


@pytest.fixture
def path():
    return generate_path(seed=42, path_id=3, n_fine_steps=4096)


@pytest.fixture
def grid():
    return Grid1D(dx=0.1, k_cells=5)


def logistic(u):
    return u * (1.0 - u)


class TestGeneratePath:
    def test_deterministic(self, path):
        """Same (seed, path_id) gives the same increments"""
        again = generate_path(seed=42, path_id=3, n_fine_steps=4096)
        assert np.array_equal(path.increments, again.increments)

    def test_paths_differ(self, path):
        """Different path ids or seeds give different increments"""
        other = generate_path(seed=42, path_id=4, n_fine_steps=4096)
        reseeded = generate_path(seed=43, path_id=3, n_fine_steps=4096)
        assert not np.array_equal(path.increments, other.increments)
        assert not np.array_equal(path.increments, reseeded.increments)

    def test_prefix_stable(self):
        """A shorter path is a prefix of a longer one"""
        short = generate_path(seed=1, path_id=0, n_fine_steps=100)
        long = generate_path(seed=1, path_id=0, n_fine_steps=1000)
        assert np.array_equal(short.increments, long.increments[:100])

    def test_moments(self):
        """Sample mean and variance of N(0, dt) increments"""
        n = 100_000
        increments = generate_path(9, 0, n).increments[:, 0]
        assert abs(increments.mean()) <= 5 * math.sqrt(DEFAULT_DT_FINE / n)
        # var of the sample variance is 2 dt^2 / n
        spread = 5 * DEFAULT_DT_FINE * math.sqrt(2.0 / n)
        assert abs(increments.var() - DEFAULT_DT_FINE) <= spread

    def test_modes_uncorrelated(self):
        """Distinct modes are independent"""
        increments = generate_path(5, 0, 10_000, n_modes=2).increments
        correlation = np.corrcoef(increments[:, 0], increments[:, 1])[0, 1]
        assert abs(correlation) <= 5 / math.sqrt(10_000)

    def test_mode_streams_independent_of_mode_count(self):
        """Each mode draws the same numbers however many modes are requested"""
        scalar = generate_path(5, 2, 64).increments
        two = generate_path(5, 2, 64, n_modes=2).increments
        three = generate_path(5, 2, 32, n_modes=3).increments
        assert np.array_equal(two[:, 0], scalar[:, 0])
        assert np.array_equal(three[:, :2], two[:32])
        assert not np.array_equal(three[:, 1], three[:, 2])

    def test_quantized(self, path):
        """Increments are multiples of 2^-40"""
        assert np.array_equal(quantize(path.increments), path.increments)
        scaled = np.ldexp(path.increments, 40)
        assert np.all(scaled == np.rint(scaled))

    def test_shape(self, path):
        """One row per fine step, one column per mode"""
        assert path.increments.shape == (4096, 1)
        assert path.horizon == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"seed": -1, "path_id": 0, "n_fine_steps": 10},
            {"seed": 2**64, "path_id": 0, "n_fine_steps": 10},
            {"seed": 0, "path_id": 0, "n_fine_steps": 0},
            {"seed": 0, "path_id": 0, "n_fine_steps": 10, "n_modes": 0},
        ],
    )
    def test_rejects_bad_arguments(self, kwargs):
        """Seeds are unsigned 64-bit, counts positive"""
        with pytest.raises(InvalidParameter):
            generate_path(**kwargs)


class TestCoarseIncrements:
    def test_fine_level(self, path):
        """At the fine step the increment is the fine draw itself"""
        assert coarse_increment(path, DEFAULT_DT_FINE, 17) == path.increments[17, 0]

    def test_aggregation_bit_exact(self, path):
        """Level 2^-9 increment is the sum of 8 fine ones"""
        expected = path.increments[8 * 5 : 8 * 6, 0].sum()
        assert coarse_increment(path, 2.0**-9, 5) == expected

    def test_terminal_value_independent_of_level(self, path):
        """Every level telescopes to the same W(T)"""
        terminal = path.terminal_value()
        for level in (2.0**-12, 2.0**-9, 2.0**-7, 2.0**-5):
            assert np.array_equal(coarse_increments(path, level).sum(axis=0), terminal)

    def test_levels_nest(self, path):
        """Level 2^-5 increments are exact sums of level 2^-7 ones"""
        mid = coarse_increments(path, 2.0**-7)
        coarse = coarse_increments(path, 2.0**-5)
        assert np.array_equal(mid.reshape(-1, 4, 1).sum(axis=1), coarse)

    def test_misaligned_level(self, path):
        """Level steps must be multiples of the fine step"""
        with pytest.raises(InvalidParameter):
            coarse_increment(path, 1.5 * DEFAULT_DT_FINE, 0)

    def test_window_outside_path(self, path):
        """Window past the horizon is rejected"""
        with pytest.raises(InvalidParameter):
            coarse_increment(path, 2.0**-5, 32)

    def test_coarse_variance(self):
        """Coarse increments have variance level_dt"""
        level = 2.0**-5
        draws = np.concatenate(
            [
                coarse_increments(generate_path(11, p, 4096), level)[:, 0]
                for p in range(200)
            ]
        )
        n = len(draws)
        assert abs(draws.var() - level) <= 5 * level * math.sqrt(2.0 / n)


class TestNoiseTerm:
    def test_off(self, grid, path):
        """No noise gives a zero lattice function"""
        u = LatticeFunction.constant(grid, 0.5)
        assert np.all(noise_term(NoiseSpec.off(), u, path, 2.0**-5, 0).values == 0.0)

    def test_scalar(self, grid, path):
        """sigma(0.5) dW = 0.25 dW in every cell"""
        u = LatticeFunction.constant(grid, 0.5)
        spec = NoiseSpec(mode=NoiseMode.SCALAR, sigma=clipped_sigma)
        dw = coarse_increment(path, 2.0**-5, 3)
        term = noise_term(spec, u, path, 2.0**-5, 3)
        assert np.all(term.values == 0.25 * dw)

    def test_cylindrical(self, grid):
        """Three modes a_k u(1-u) dW_k"""
        path = generate_path(seed=2, path_id=0, n_fine_steps=64, n_modes=3)
        spec = NoiseSpec(
            mode=NoiseMode.FINITE_CYLINDRICAL,
            coefficients=(1.0, 0.5, 0.25),
            profile=logistic,
        )
        values = np.linspace(0.0, 1.0, grid.n_cells)
        u = LatticeFunction(grid, values)
        level = 2.0**-9
        dw = [coarse_increment(path, level, 1, mode) for mode in range(3)]
        expected = (
            1.0 * logistic(values) * dw[0]
            + 0.5 * logistic(values) * dw[1]
            + 0.25 * logistic(values) * dw[2]
        )
        term = noise_term(spec, u, path, level, 1)
        np.testing.assert_allclose(term.values, expected, rtol=1e-14, atol=1e-18)
        assert spec.n_modes == 3

    def test_path_without_enough_modes(self, grid, path):
        """A scalar path cannot drive three modes"""
        spec = NoiseSpec(
            mode=NoiseMode.FINITE_CYLINDRICAL,
            coefficients=(1.0, 0.5, 0.25),
            profile=logistic,
        )
        with pytest.raises(InvalidParameter):
            noise_term(spec, LatticeFunction.constant(grid, 0.5), path, 2.0**-5, 0)


class TestNoiseSpec:
    def test_scalar_needs_sigma(self):
        """Scalar mode without sigma is rejected"""
        with pytest.raises(InvalidParameter):
            NoiseSpec(mode=NoiseMode.SCALAR)

    def test_cylindrical_needs_coefficients(self):
        """Cylindrical mode needs a profile and coefficients"""
        with pytest.raises(InvalidParameter):
            NoiseSpec(mode=NoiseMode.FINITE_CYLINDRICAL, profile=logistic)

    def test_clipped_sigma_assumptions(self):
        """Clipped sigma is 1-Lipschitz and vanishes beyond 1"""
        NoiseSpec(mode=NoiseMode.SCALAR, sigma=clipped_sigma).check_assumptions()

    def test_unclipped_sigma_fails_cutoff(self):
        """u(1-u) does not vanish for |u| > 1"""
        spec = NoiseSpec(mode=NoiseMode.SCALAR, sigma=logistic_sigma, lipschitz=3.0)
        with pytest.raises(InvalidParameter):
            spec.check_assumptions()

    def test_lipschitz_violation(self):
        """A steeper sigma than declared is caught"""
        spec = NoiseSpec(
            mode=NoiseMode.SCALAR, sigma=lambda u: 3.0 * clipped_sigma(u)
        )
        with pytest.raises(InvalidParameter):
            spec.check_assumptions()

    def test_off(self):
        """Off has no modes and is inactive"""
        spec = NoiseSpec.off()
        assert not spec.is_active
        assert spec.modes == ()


class TestBrownianPath:
    def test_one_dimensional_input(self):
        """1-D increments become a single mode"""
        path = BrownianPath(dt_fine=0.5, increments=[0.25, -0.5], seed=0, path_id=0)
        assert path.n_modes == 1
        assert path.n_fine_steps == 2
        assert path.terminal_value()[0] == -0.25
        assert path.level_ratio(1.0) == 2
