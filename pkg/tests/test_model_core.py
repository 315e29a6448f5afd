import math

import numpy as np
import pytest
from scipy import integrate

from hotspot_sim.model_core import (
    CityGrid,
    ContractViolation,
    Events,
    GeneratorModel,
    MixtureBackground,
    SeppParams,
    SpatialDomain,
    background_intensity,
    cell_integral,
    conditional_intensity,
    grid_cell_integrals,
    mixture_intensity,
    offspring_mean,
    triggering,
)


def params(mu=10.0, theta=0.5, omega=0.2, sx=0.1, sy=0.1):
    return SeppParams(mu, theta, omega, sx, sy)


def random_history(rng, n, extent=5.0, t_max=50.0, source="events"):
    return Events(
        rng.uniform(-extent, extent, n),
        rng.uniform(-extent, extent, n),
        np.sort(rng.uniform(0.0, t_max, n)),
        source,
    )


class TestBackgroundIntensity:
    def test_center_value(self):
        # mu10/(2 pi 225) at the origin
        assert background_intensity(params(mu=10.0), 0.0, 0.0) == pytest.approx(
            10.0 / (2.0 * math.pi * 225.0), rel=1e-12
        )

    def test_one_sd_out(self):
        val = background_intensity(params(mu=1.0), 15.0, 0.0)
        assert val == pytest.approx(math.exp(-0.5) / (2 * math.pi * 225.0),
                                    rel=1e-12)

    def test_total_mass(self):
        # integrate over a huge square: should recover mu_bar
        p = params(mu=3.0)
        big = 200.0
        val, _ = integrate.dblquad(
            lambda y, x: background_intensity(p, x, y),
            -big, big, -big, big, epsabs=1e-10,
        )
        assert val == pytest.approx(3.0, abs=1e-6)

    def test_strictly_positive(self):
        assert background_intensity(params(), 100.0, -200.0) > 0.0


class TestTriggering:
    def test_at_origin_limit(self):
        assert triggering(params(theta=0.5, omega=0.2), 1e-12, 0.0, 0.0) == \
            pytest.approx(0.1, rel=1e-9)

    def test_exponential_decay(self):
        assert triggering(params(theta=0.5, omega=0.2), 5.0, 0.0, 0.0) == \
            pytest.approx(0.1 * math.exp(-1.0), rel=1e-12)

    def test_noncausal_rejected(self):
        with pytest.raises(ContractViolation):
            triggering(params(), -1.0, 0.0, 0.0)
        with pytest.raises(ContractViolation):
            triggering(params(), 0.0, 0.0, 0.0)

    def test_monotone_decay_each_axis(self):
        p = params(sx=0.3, sy=0.2)
        rng = np.random.default_rng(5)
        for _ in range(200):
            dt, dx, dy = rng.uniform(0.05, 3.0, 3)
            step = rng.uniform(0.01, 1.0)
            base = triggering(p, dt, dx, dy)
            assert triggering(p, dt + step, dx, dy) < base
            assert triggering(p, dt, dx + step, dy) < base
            assert triggering(p, dt, dx, dy + step) < base


class TestOffspringMean:
    def test_values(self):
        assert offspring_mean(params(theta=0.3, sx=0.1, sy=0.1)) == \
            pytest.approx(0.018850, abs=5e-7)
        assert offspring_mean(params(theta=0.5, sx=0.05, sy=0.05)) == \
            pytest.approx(7.854e-3, abs=5e-7)

    def test_criticality_boundary(self):
        p = SeppParams(1.0, 1.0 / (2.0 * math.pi), 0.2, 1.0, 1.0)
        assert offspring_mean(p) == pytest.approx(1.0, rel=1e-12)

    def test_matches_quadrature(self):
        # time x space integral of the triggering kernel
        p = params(theta=0.4, omega=0.3, sx=0.2, sy=0.15)
        t_part = integrate.quad(
            lambda s: p.theta * p.omega * math.exp(-p.omega * s), 0, np.inf
        )[0]
        x_part = integrate.quad(
            lambda u: math.exp(-u * u / (2 * p.sigma_x ** 2)),
            -np.inf, np.inf,
        )[0]
        y_part = integrate.quad(
            lambda u: math.exp(-u * u / (2 * p.sigma_y ** 2)),
            -np.inf, np.inf,
        )[0]
        assert offspring_mean(p) == pytest.approx(t_part * x_part * y_part,
                                                  rel=1e-9)

    def test_supercritical_warns_not_raises(self):
        with pytest.warns(RuntimeWarning):
            SeppParams(1.0, 1.0, 0.2, 1.0, 1.0)


class TestConditionalIntensity:
    def test_empty_history_is_background(self):
        p = params()
        h = Events.empty()
        assert conditional_intensity(p, h, 1.0, 2.0, 5.0) == pytest.approx(
            float(background_intensity(p, 1.0, 2.0)), rel=1e-12
        )

    def test_hand_evaluated_single_event(self):
        # mu(0,0) + theta*omega*exp(-omega*1) with mu=10, theta=0.5, omega=0.2
        p = params(mu=10.0, theta=0.5, omega=0.2)
        h = Events(np.array([0.0]), np.array([0.0]), np.array([1.0]))
        expected = 10.0 / (2 * math.pi * 225.0) + 0.1 * math.exp(-0.2)
        got = conditional_intensity(p, h, 0.0, 0.0, 2.0)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(8.894e-2, abs=1e-5)

    def test_simultaneous_event_contributes_nothing(self):
        p = params()
        h = Events(np.array([0.0]), np.array([0.0]), np.array([2.0]))
        assert conditional_intensity(p, h, 0.0, 0.0, 2.0) == pytest.approx(
            float(background_intensity(p, 0.0, 0.0)), rel=1e-12
        )

    def test_unsorted_history_rejected(self):
        with pytest.raises(ContractViolation):
            Events(np.zeros(2), np.zeros(2), np.array([2.0, 1.0]))

    def test_dominates_background(self):
        rng = np.random.default_rng(11)
        p = params()
        h = random_history(rng, 30)
        for _ in range(20):
            x, y = rng.uniform(-5, 5, 2)
            t = rng.uniform(0, 60)
            assert conditional_intensity(p, h, x, y, t) >= float(
                background_intensity(p, x, y)
            )

    def test_superposition_of_histories(self):
        rng = np.random.default_rng(12)
        p = params(sx=0.4, sy=0.4)
        a = random_history(rng, 15)
        b = random_history(rng, 10)
        merged = Events.from_tuples(
            list(zip(a.x, a.y, a.t)) + list(zip(b.x, b.y, b.t))
        )
        x, y, t = 0.5, -0.25, 55.0
        mu = float(background_intensity(p, x, y))
        lam_a = conditional_intensity(p, a, x, y, t)
        lam_b = conditional_intensity(p, b, x, y, t)
        lam_ab = conditional_intensity(p, merged, x, y, t)
        assert lam_ab - mu == pytest.approx((lam_a - mu) + (lam_b - mu),
                                            rel=1e-10)

    def test_mixture_background(self):
        mix = MixtureBackground(
            centers=np.array([[0.0, 0.0], [2.0, 1.0]]),
            weights=np.array([0.25, 0.75]),
            bandwidth=1.5,
            total_rate=20.0,
        )
        gen = GeneratorModel(mix, m=0.2, omega=0.3, sigma_x=0.1, sigma_y=0.1)
        want = 20.0 * (
            0.25 * math.exp(-(1.0 + 1.0) / (2 * 1.5 ** 2))
            + 0.75 * math.exp(-(1.0 + 0.0) / (2 * 1.5 ** 2))
        ) / (2 * math.pi * 1.5 ** 2)
        got = conditional_intensity(gen, Events.empty(), 1.0, 1.0, 3.0)
        assert got == pytest.approx(want, rel=1e-12)
        assert mixture_intensity(mix, 1.0, 1.0) == pytest.approx(want,
                                                                 rel=1e-12)


class TestCellIntegral:
    def test_whole_plane_recovers_total_rate(self):
        p = params(mu=3.0)
        grid = CityGrid(SpatialDomain(-100, 100, -100, 100, 200.0, 10.0))
        cell = grid.cell(0, 0)
        assert cell_integral(p, Events.empty(), cell, 1.0) == pytest.approx(
            3.0, abs=1e-6
        )

    def test_symmetric_cells_match(self):
        p = params(mu=7.0)
        grid = CityGrid(SpatialDomain(-4, 4, -4, 4, 1.0, 10.0))
        a = cell_integral(p, Events.empty(), grid.cell(0, 1), 2.0)
        b = cell_integral(p, Events.empty(), grid.cell(7, 6), 2.0)
        assert a == pytest.approx(b, rel=1e-12)

    def test_grid_sum_matches_quadrature(self):
        # adaptive-quadrature oracle over the whole domain
        rng = np.random.default_rng(21)
        p = params(theta=0.4, omega=0.25, sx=0.35, sy=0.3)
        h = random_history(rng, 25, extent=2.0)
        dom = SpatialDomain(-3, 3, -3, 3, 1.0, 60.0)
        grid = CityGrid(dom)
        t = 51.0
        total = float(np.sum(grid_cell_integrals(p, h, grid, t)))
        quad, _ = integrate.dblquad(
            lambda y, x: conditional_intensity(p, h, x, y, t),
            dom.x_min, dom.x_max, dom.y_min, dom.y_max,
            epsabs=1e-10, epsrel=1e-10,
        )
        assert total == pytest.approx(quad, rel=1e-6)

    def test_analytic_vs_quadrature_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            p = SeppParams(
                rng.uniform(1, 20), rng.uniform(0.05, 1.2),
                rng.uniform(0.05, 1.0), rng.uniform(0.05, 0.6),
                rng.uniform(0.05, 0.6),
            )
            h = random_history(rng, rng.integers(0, 12), extent=2.0,
                               t_max=20.0)
            grid = CityGrid(SpatialDomain(-3, 3, -3, 3, 1.0, 30.0))
            cell = grid.cell(int(rng.integers(0, 6)), int(rng.integers(0, 6)))
            t = rng.uniform(20.0, 30.0)
            analytic = cell_integral(p, h, cell, t)
            quad, _ = integrate.dblquad(
                lambda y, x: conditional_intensity(p, h, x, y, t),
                cell.x_lo, cell.x_hi, cell.y_lo, cell.y_hi,
                epsabs=1e-12, epsrel=1e-10,
            )
            assert analytic == pytest.approx(quad, rel=1e-6)

    def test_result_nonnegative(self):
        rng = np.random.default_rng(3)
        p = params()
        h = random_history(rng, 10)
        grid = CityGrid(SpatialDomain(-3, 3, -3, 3, 1.0, 60.0))
        vals = grid_cell_integrals(p, h, grid, 55.0)
        assert np.all(vals >= 0.0)


class TestDomainValidation:
    def test_not_centered_rejected(self):
        with pytest.raises(ValueError):
            SpatialDomain(0.0, 10.0, -5.0, 5.0)

    def test_non_multiple_extent_rejected(self):
        with pytest.raises(ValueError):
            SpatialDomain(-5.25, 5.25, -5.0, 5.0, cell_size=1.0)

    def test_nonpositive_params_rejected(self):
        with pytest.raises(ValueError):
            SeppParams(0.0, 0.5, 0.2, 0.1, 0.1)
        with pytest.raises(ValueError):
            SeppParams(1.0, 0.5, -0.2, 0.1, 0.1)
