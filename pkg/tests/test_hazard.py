import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from interference_lab.errors import InsufficientEvents
from interference_lab.hazard import (
    ArrivalConfig,
    MixtureConfig,
    interarrival_alpha,
    pareto_gaps,
    population_retention,
    population_retention_closed_form,
    retention_analytic,
    retention_empirical,
    simulate_arrivals,
    stretched_scale,
)
from interference_lab.stats import fit_power, fit_stretched, loglog_slope


@given(st.floats(0.1, 20), st.floats(0.0, 0.95), st.floats(1e-4, 0.1))
def test_retention_is_stretched_exponential(lam, alpha, mu):
    cfg = ArrivalConfig(lam, alpha, 100.0)
    t = np.linspace(0.5, 100, 30)
    c = stretched_scale(mu, cfg)
    np.testing.assert_allclose(retention_analytic(t, mu, cfg), np.exp(-c * t ** (1 - alpha)), rtol=1e-12)


def test_cumulative_is_finite_and_inverse_consistent():
    cfg = ArrivalConfig(10.0, 0.5, 30.0)
    t = np.linspace(1e-6, 30, 100)
    lam = cfg.cumulative(t)
    assert np.all(np.isfinite(lam))
    np.testing.assert_allclose(cfg.inverse(lam), t, rtol=1e-10)


def test_simulated_counts_match_intensity():
    cfg = ArrivalConfig(5.0, 0.5, 100.0)
    rng = np.random.default_rng(0)
    counts = [len(simulate_arrivals(cfg, rng)) for _ in range(400)]
    assert np.mean(counts) == pytest.approx(cfg.cumulative(100.0), rel=0.02)


def test_per_item_curve_is_not_a_power_law():
    cfg = ArrivalConfig(10.0, 0.5, 30.0)
    t = np.linspace(1, 30, 30)
    for mu in (0.003, 0.01, 0.03):
        r = retention_analytic(t, mu, cfg)
        fp, fs = fit_power(t, r), fit_stretched(t, r)
        sse_p = np.sum((r - fp.params["a"] * t ** -fp.params["b"]) ** 2)
        sse_s = np.sum((r - np.exp(-fs.params["c"] * t ** fs.params["exponent"])) ** 2)
        assert sse_s < sse_p


def test_empirical_within_binomial_envelope():
    cfg = ArrivalConfig(10.0, 0.5, 100.0)
    grid = np.geomspace(1, 100, 12)
    emp = retention_empirical(0.01, cfg, 10_000, grid, np.random.default_rng(1))
    ana = retention_analytic(grid, 0.01, cfg)
    sd = np.sqrt(ana * (1 - ana) / 10_000)
    assert np.all(np.abs(emp.retention - ana) <= 3 * sd + 1e-12)
    assert emp.retention[0] <= 1.0


def test_retention_vanishes_at_large_time():
    cfg = ArrivalConfig(10.0, 0.5, 1e6)
    emp = retention_empirical(0.01, cfg, 1000, [1e6], np.random.default_rng(2))
    assert emp.retention[0] < 1e-3
    assert retention_analytic(1e6, 0.01, cfg) < 1e-3


def test_population_quadrature_matches_closed_form():
    for beta, alpha in ((1.0, 0.5), (0.5, 0.3), (2.5, 0.8)):
        mix = MixtureConfig(beta, alpha, 0.7)
        t = np.geomspace(0.1, 1e5, 15)
        np.testing.assert_allclose(population_retention(mix, t).retention, population_retention_closed_form(mix, t), rtol=1e-7)


def test_population_slope_approaches_exponent():
    # the asymptotic regime needs c * t**(1-alpha) >> 1 over the whole window
    for beta, alpha, scale in ((1.0, 0.5, 1.0), (0.6, 0.2, 1.0), (2.0, 0.7, 3.0)):
        mix = MixtureConfig(beta, alpha, scale)
        t = np.geomspace(1e3, 1e5, 21)
        slope = loglog_slope(t, population_retention(mix, t).retention)
        assert slope == pytest.approx(-mix.exponent, rel=0.05)


def test_interarrival_alpha_recovery():
    cfg = ArrivalConfig(1.0, 0.459, 1e4)
    streams = [simulate_arrivals(cfg, np.random.default_rng(s)) for s in range(60)]
    a, r2 = interarrival_alpha(streams)
    assert a == pytest.approx(0.459, abs=0.05)
    assert r2 > 0.9


def test_interarrival_degenerate_gaps():
    streams = [np.arange(0, 200, 1.0)]
    with pytest.raises(InsufficientEvents):
        interarrival_alpha(streams)
    with pytest.raises(InsufficientEvents):
        interarrival_alpha([np.array([1.0, 2.0])])


def test_pareto_gaps_tail():
    g = pareto_gaps(0.8, 200_000, np.random.default_rng(3))
    assert g.min() >= 1.0
    assert np.mean(g > 10) == pytest.approx(10**-0.8, rel=0.05)
