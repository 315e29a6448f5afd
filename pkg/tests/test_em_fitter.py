import math

import numpy as np
import pytest

from hotspot_sim.em_fitter import (
    BranchingProbabilities,
    default_init,
    e_step,
    expected_loglik,
    fit,
    m_step,
)
from hotspot_sim.model_core import (
    Events,
    MixtureBackground,
    SeppParams,
    SpatialDomain,
    background_intensity,
    domain_background_fraction,
    offspring_mean,
    triggering,
)
from hotspot_sim.simulator import sample_candidates
from hotspot_sim.model_core import GeneratorModel

DOMAIN = SpatialDomain(-10.0, 10.0, -10.0, 10.0, 1.0, 1000.0)


def single_gauss_generator(mu_bar, m, omega, sx, sy, sd=15.0):
    """Generator equivalent to the fitted family (one wide Gaussian)."""
    mix = MixtureBackground(
        centers=np.array([[0.0, 0.0]]), weights=np.array([1.0]),
        bandwidth=sd, total_rate=mu_bar,
    )
    return GeneratorModel(mix, m, omega, sx, sy)


def simulate_from(params: SeppParams, domain, horizon, seed):
    m = offspring_mean(params)
    gen = single_gauss_generator(params.mu_bar, m, params.omega,
                                 params.sigma_x, params.sigma_y,
                                 params.background_sd)
    rng = np.random.default_rng(seed)
    events, _ = sample_candidates(gen, domain, rng, horizon=horizon)
    return Events(events.x, events.y, events.t)


class TestEStep:
    def test_single_event_is_background(self):
        p = SeppParams(5.0, 0.5, 0.2, 0.1, 0.1)
        ev = Events(np.array([1.0]), np.array([0.5]), np.array([3.0]))
        b = e_step(p, ev)
        assert b.p0[0] == 1.0
        assert b.indptr[-1] == 0

    def test_two_colocated_events_hand_ratio(self):
        # choose parameters so g = 0.04 and mu = 0.01 at the pair:
        # g(dt=1) = theta*omega*exp(-omega) with omega = 1, and the origin
        # background density is mu_bar/(2 pi 225)
        theta = 0.04 * math.exp(1.0)
        mu_bar = 0.01 * 2 * math.pi * 225.0
        p = SeppParams(mu_bar, theta, 1.0, 0.1, 0.1)
        ev = Events(np.zeros(2), np.zeros(2), np.array([0.0, 1.0]))
        g = triggering(p, 1.0, 0.0, 0.0)
        mu = float(background_intensity(p, 0.0, 0.0))
        assert g == pytest.approx(0.04, rel=1e-12)
        assert mu == pytest.approx(0.01, rel=1e-12)
        b = e_step(p, ev)
        _, probs = b.row(1)
        assert probs[0] == pytest.approx(0.8, rel=1e-12)
        assert b.p0[1] == pytest.approx(0.2, rel=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(8)
        p = SeppParams(8.0, 0.4, 0.3, 0.2, 0.2)
        n = 60
        ev = Events(rng.uniform(-5, 5, n), rng.uniform(-5, 5, n),
                    np.sort(rng.uniform(0, 30, n)))
        b = e_step(p, ev)
        np.testing.assert_allclose(b.row_sums(), 1.0, atol=1e-9)

    def test_causality(self):
        rng = np.random.default_rng(9)
        p = SeppParams(8.0, 0.4, 0.3, 0.2, 0.2)
        n = 40
        t = np.sort(rng.uniform(0, 10, n))
        t[10] = t[9]  # exact tie
        ev = Events(rng.uniform(-5, 5, n), rng.uniform(-5, 5, n), t)
        b = e_step(p, ev)
        for i in range(n):
            parents, probs = b.row(i)
            assert np.all(ev.t[parents] < ev.t[i])

    def test_windowed_matches_exact_when_window_huge(self):
        rng = np.random.default_rng(10)
        p = SeppParams(8.0, 0.4, 0.3, 0.2, 0.2)
        n = 50
        ev = Events(rng.uniform(-5, 5, n), rng.uniform(-5, 5, n),
                    np.sort(rng.uniform(0, 30, n)))
        exact = e_step(p, ev)
        windowed = e_step(p, ev, time_window=1e6, spatial_window=1e6)
        np.testing.assert_allclose(windowed.p0, exact.p0, rtol=1e-12)
        np.testing.assert_allclose(windowed.probs, exact.probs, rtol=1e-12)


class TestMStep:
    def test_all_background_degenerate(self):
        # every event assigned to the background stream
        n = 12
        rng = np.random.default_rng(3)
        ev = Events(rng.uniform(-3, 3, n), rng.uniform(-3, 3, n),
                    np.sort(rng.uniform(0, 100, n)))
        prev = SeppParams(1.0, 0.5, 0.2, 0.1, 0.1)
        b = BranchingProbabilities(
            indptr=np.zeros(n + 1, dtype=np.int64),
            parents=np.empty(0, dtype=np.int64),
            probs=np.empty(0),
            p0=np.ones(n),
        )
        new = m_step(b, ev, DOMAIN, 100.0, prev)
        G = domain_background_fraction(prev, DOMAIN)
        assert new.mu_bar == pytest.approx(n / (100.0 * G), rel=1e-12)
        assert new.theta == prev.theta
        assert new.omega == prev.omega
        assert new.sigma_x == prev.sigma_x

    def test_omega_is_inverse_weighted_mean_dt(self):
        # two-event rows with known dt and weights: exponential MLE
        t = np.array([0.0, 1.0, 4.0])
        ev = Events(np.zeros(3), np.zeros(3), t)
        prev = SeppParams(1.0, 0.5, 0.2, 0.1, 0.1)
        b = BranchingProbabilities(
            indptr=np.array([0, 0, 1, 2], dtype=np.int64),
            parents=np.array([0, 1], dtype=np.int64),
            probs=np.array([0.5, 0.25]),
            p0=np.array([1.0, 0.5, 0.75]),
        )
        new = m_step(b, ev, DOMAIN, 10.0, prev)
        # weighted dts: 1.0 w 0.5 and 3.0 w 0.25
        expected_omega = (0.5 + 0.25) / (0.5 * 1.0 + 0.25 * 3.0)
        assert new.omega == pytest.approx(expected_omega, rel=1e-12)

    def test_sigma_is_weighted_rms_displacement(self):
        x = np.array([0.0, 0.4, -0.4])
        ev = Events(x, np.zeros(3), np.array([0.0, 1.0, 2.0]))
        prev = SeppParams(1.0, 0.5, 0.2, 0.1, 0.1)
        b = BranchingProbabilities(
            indptr=np.array([0, 0, 1, 2], dtype=np.int64),
            parents=np.array([0, 0], dtype=np.int64),
            probs=np.array([0.5, 0.5]),
            p0=np.array([1.0, 0.5, 0.5]),
        )
        new = m_step(b, ev, DOMAIN, 10.0, prev)
        assert new.sigma_x == pytest.approx(0.4, rel=1e-12)
        # theta consistent with offspring mass over n events
        assert new.theta == pytest.approx(
            1.0 / (2 * math.pi * new.sigma_x * new.sigma_y * 3), rel=1e-12
        )


class TestExpectedLoglik:
    def test_matches_direct_transcription_on_toy(self):
        rng = np.random.default_rng(17)
        p = SeppParams(6.0, 0.5, 0.4, 0.25, 0.2)
        n = 5
        ev = Events(rng.uniform(-2, 2, n), rng.uniform(-2, 2, n),
                    np.sort(rng.uniform(0, 8, n)))
        b = e_step(p, ev)
        got = expected_loglik(p, b, ev, DOMAIN, 10.0)
        # independent transcription: explicit double loop
        direct = 0.0
        for i in range(n):
            direct += b.p0[i] * math.log(
                float(background_intensity(p, ev.x[i], ev.y[i]))
            )
            parents, probs = b.row(i)
            for j, pij in zip(parents, probs):
                direct += pij * math.log(float(triggering(
                    p, ev.t[i] - ev.t[j], ev.x[i] - ev.x[j],
                    ev.y[i] - ev.y[j],
                )))
        G = domain_background_fraction(p, DOMAIN)
        direct -= p.mu_bar * 10.0 * G
        direct -= n * offspring_mean(p)
        assert got == pytest.approx(direct, abs=1e-9)

    def test_zero_events_is_minus_compensator(self):
        p = SeppParams(6.0, 0.5, 0.4, 0.25, 0.2)
        ev = Events.empty()
        b = BranchingProbabilities(
            np.zeros(1, dtype=np.int64), np.empty(0, dtype=np.int64),
            np.empty(0), np.empty(0),
        )
        got = expected_loglik(p, b, ev, DOMAIN, 10.0)
        G = domain_background_fraction(p, DOMAIN)
        assert got == pytest.approx(-p.mu_bar * 10.0 * G, rel=1e-12)


@pytest.fixture(scope="module")
def recovery_data():
    truth = SeppParams(60.0, 3.868349311261345, 0.25, 0.12, 0.12)
    assert offspring_mean(truth) == pytest.approx(0.35, abs=1e-9)
    horizon = 220.0
    dom = SpatialDomain(-10.0, 10.0, -10.0, 10.0, 1.0, horizon)
    ev = simulate_from(truth, dom, horizon, seed=202)
    return truth, dom, horizon, ev


class TestFit:
    def test_parameter_recovery(self, recovery_data):
        truth, dom, horizon, ev = recovery_data
        assert 3500 < len(ev) < 8000
        report = fit(ev, dom, horizon, tol=1e-4, max_iter=200)
        p = report.params
        assert p.mu_bar == pytest.approx(truth.mu_bar, rel=0.10)
        assert p.theta == pytest.approx(truth.theta, rel=0.15)
        assert p.omega == pytest.approx(truth.omega, rel=0.15)
        assert p.sigma_x == pytest.approx(truth.sigma_x, rel=0.15)
        assert p.sigma_y == pytest.approx(truth.sigma_y, rel=0.15)

    def test_trace_non_decreasing(self, recovery_data):
        truth, dom, horizon, ev = recovery_data
        report = fit(ev, dom, horizon, tol=1e-3, max_iter=40)
        diffs = np.diff(report.loglik_trace)
        slack = -1e-8 * (1.0 + np.abs(report.loglik_trace[:-1]))
        assert np.all(diffs >= slack)

    def test_init_at_truth_is_near_fixed_point(self, recovery_data):
        # the first update moves by at most the truth-to-MLE sampling gap,
        # and convergence is far faster than from the default cold start
        truth, dom, horizon, ev = recovery_data
        report = fit(ev, dom, horizon, init=truth, tol=1e-4, max_iter=200)
        assert report.converged
        first = report.params_trace[0]
        first_move = np.max(np.abs(first.as_array() - truth.as_array())
                            / truth.as_array())
        assert first_move < 0.02
        assert report.iterations <= 20
        cold = fit(ev, dom, horizon, tol=1e-4, max_iter=200)
        assert report.iterations < cold.iterations

    def test_pure_poisson_data_fits_tiny_m(self):
        rng = np.random.default_rng(55)
        dom = SpatialDomain(-10.0, 10.0, -10.0, 10.0, 1.0, 150.0)
        gen = single_gauss_generator(60.0, 0.0, 0.25, 0.12, 0.12)
        cand, _ = sample_candidates(gen, dom, rng)
        ev = Events(cand.x, cand.y, cand.t)
        report = fit(ev, dom, 150.0, tol=1e-4, max_iter=200)
        assert offspring_mean(report.params) < 0.05

    def test_empty_events_rejected(self):
        with pytest.raises(ValueError):
            fit(Events.empty(), DOMAIN, 10.0)

    def test_fit_equals_composed_e_and_m_steps(self):
        rng = np.random.default_rng(77)
        n = 80
        ev = Events(rng.uniform(-4, 4, n), rng.uniform(-4, 4, n),
                    np.sort(rng.uniform(0, 40, n)))
        init = SeppParams(2.0, 0.6, 0.15, 0.25, 0.25)
        report = fit(ev, DOMAIN, 40.0, init=init, tol=0.0, max_iter=3)
        params = init
        for _ in range(3):
            b = e_step(params, ev)
            params = m_step(b, ev, DOMAIN, 40.0, params)
        np.testing.assert_allclose(report.params.as_array(),
                                   params.as_array(), rtol=1e-10)

    def test_report_frame_columns(self, recovery_data):
        truth, dom, horizon, ev = recovery_data
        report = fit(ev, dom, horizon, init=truth, tol=1e-4, max_iter=5)
        frame = report.to_frame()
        assert list(frame.columns) == [
            "iteration", "loglik", "mu_bar", "theta", "omega",
            "sigma_x", "sigma_y",
        ]
        assert len(frame) == report.iterations
