import math

import numpy as np
import pytest
from scipy.stats import norm

from mpple.bands import (Band, BandRequest, band_cif, band_cumhaz, band_domain, multiplier_draws,
                         multiplier_sup, order_statistic_quantile, transformed_band)
from mpple.exceptions import ConfigError, EmptyDomainError


class TestRequest:
    @pytest.mark.parametrize("kwargs", [
        {"alpha": 0.0}, {"alpha": 1.0}, {"B": 99}, {"c1": 0.9, "c2": 0.1},
        {"weight": "bogus"}, {"target": "hazard"}, {"domain_rule": "all"},
        {"target": "cif", "z0": None},
    ])
    def test_invalid(self, kwargs):
        base = {"target": "cumhaz"}
        base.update(kwargs)
        with pytest.raises(ConfigError):
            BandRequest(**base)

    def test_weight_aliases(self):
        assert BandRequest(target="cumhaz", weight="hw").weight == "hall_wellner"
        assert BandRequest(target="cumhaz", weight="ep").weight == "equal_precision"


class TestMultiplier:
    def test_zero_influence(self):
        c, sups = multiplier_sup(np.zeros((50, 4)), np.ones(4), B=200)
        assert c == 0.0 and np.all(sups == 0)

    def test_order_statistic(self):
        values = np.random.default_rng(0).permutation(np.arange(1.0, 1001.0))
        assert order_statistic_quantile(values, 0.05) == 950.0
        assert order_statistic_quantile(values, 0.10) == 900.0

    def test_single_point_normal_quantile(self):
        rng = np.random.default_rng(1)
        infl = rng.normal(scale=2.0, size=(300, 1))
        sigma = math.sqrt(np.mean(infl ** 2))
        c, _ = multiplier_sup(infl, np.ones(1), B=10_000, seed=4)
        assert c == pytest.approx(norm.ppf(0.975) * sigma, rel=0.04)

    def test_chunking_does_not_change_stream(self):
        chunks = np.vstack(list(multiplier_draws(600, 7, seed=3)))
        whole = np.random.default_rng(3).standard_normal((600, 7))
        np.testing.assert_array_equal(chunks, whole)

    def test_reproducible(self):
        infl = np.random.default_rng(2).normal(size=(40, 5))
        a = multiplier_sup(infl, np.ones(5), B=300, seed=9)
        b = multiplier_sup(infl, np.ones(5), B=300, seed=9)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_realizations_have_mean_zero(self):
        infl = np.random.default_rng(5).normal(size=(100, 3))
        draws = np.vstack(list(multiplier_draws(4000, 100, seed=1)))
        w = draws @ infl / 10.0
        sd = np.sqrt(np.mean(infl ** 2, axis=0))
        assert np.all(np.abs(w.mean(axis=0)) < 4 * sd / math.sqrt(4000))


class TestDomain:
    grid = np.arange(1.0, 11.0)

    def test_event_range(self):
        assert band_domain(self.grid, np.ones(10), "event_range") == (1.0, 10.0)

    def test_quantile_clip_nearest(self):
        ratio = np.linspace(0.05, 0.95, 10)
        sigma2 = ratio / (1 - ratio)
        t1, t2 = band_domain(self.grid, sigma2, "quantile_clip", 0.1, 0.9)
        assert (t1, t2) == (2.0, 10.0)

    def test_empty(self):
        with pytest.raises(EmptyDomainError, match="empty band domain"):
            band_domain(self.grid, np.full(10, 0.5), "quantile_clip")
        with pytest.raises(EmptyDomainError):
            band_domain(np.array([]), np.array([]))


class TestCumhazBand:
    def test_structure(self, sim_model):
        for weight in ("equal_precision", "hall_wellner"):
            req = BandRequest(target="cumhaz", cause=1, weight=weight, B=500)
            band = sim_model.cumhaz_band(req)
            assert isinstance(band, Band)
            assert np.all(band.lower > 0)
            assert np.all((band.lower <= band.estimate) & (band.estimate <= band.upper))
            assert band.domain[0] == band.times[0] and band.domain[1] == band.times[-1]
            assert band.contains(band.estimate)

    def test_widths_follow_weights(self, sim_model):
        est = sim_model.cumhaz(1)
        domain = sim_model.band_domain(BandRequest(target="cumhaz"))
        sel = (est.times >= domain[0]) & (est.times <= domain[1])
        sigma = np.sqrt(np.mean(est.infl[:, sel] ** 2, axis=0))
        n = sim_model.n
        for weight, q in (("equal_precision", 1 / sigma), ("hall_wellner", 1 / (1 + sigma ** 2))):
            band = sim_model.cumhaz_band(BandRequest(target="cumhaz", weight=weight, B=400))
            # log(upper / estimate) = c / (sqrt(n) q Lambda) * Lambda
            half = np.log(band.upper / band.estimate)
            np.testing.assert_allclose(half, band.c_alpha / (math.sqrt(n) * q * band.estimate),
                                       rtol=1e-12)

    def test_alpha_monotone(self, sim_model):
        cs = [sim_model.cumhaz_band(BandRequest(target="cumhaz", alpha=a, B=1000)).c_alpha
              for a in (0.01, 0.05, 0.1)]
        assert cs[0] >= cs[1] >= cs[2] > 0

    def test_standalone_helper(self, sim_model):
        est = sim_model.cumhaz(1)
        req = BandRequest(target="cumhaz", B=300)
        a = band_cumhaz(est.times, est.values, est.infl, req)
        b = sim_model.cumhaz_band(req)
        np.testing.assert_array_equal(a.upper, b.upper)

    def test_at_covariate(self, sim_model):
        req = BandRequest(target="cumhaz_at_z0", cause=2, z0=(0.5, 1.0), B=300)
        band = sim_model.band(req)
        assert np.all((band.lower <= band.estimate) & (band.estimate <= band.upper))

    def test_degenerate_influence(self):
        req = BandRequest(target="cumhaz", B=100)
        band = transformed_band(np.arange(1.0, 4.0), np.array([0.1, 0.2, 0.3]),
                                np.zeros((10, 3)), req, (1.0, 3.0), "log")
        assert band.degenerate and band.c_alpha == 0.0
        np.testing.assert_array_equal(band.lower, band.upper)


class TestCifBand:
    @pytest.mark.parametrize("weight", ["ep", "hw"])
    def test_structure(self, sim_model, weight):
        z0 = (0.5, 1.0)
        curves = sim_model.cif(z0)
        band = sim_model.cif_band(BandRequest(target="cif", cause=1, z0=z0, weight=weight, B=500))
        assert np.all((band.lower > 0) & (band.upper < 1))
        assert np.all((band.lower <= band.estimate) & (band.estimate <= band.upper))
        # at least as wide as the pointwise interval at every grid point
        sel = np.isin(curves[0].grid, band.times)
        if weight == "ep":
            assert band.c_alpha >= norm.ppf(0.975)
            assert np.all(band.upper >= curves[0].upper[sel] - 1e-12)
            assert np.all(band.lower <= curves[0].lower[sel] + 1e-12)

    def test_reproducible(self, sim_model):
        req = BandRequest(target="cif", z0=(0.5, 1.0), B=300, seed=11)
        a, b = sim_model.cif_band(req), sim_model.cif_band(req)
        np.testing.assert_array_equal(a.upper, b.upper)

    def test_zero_cif_on_domain(self, sim_model):
        curve = sim_model.cif((0.5, 1.0))[0]
        curve.values = np.zeros_like(curve.values)
        with pytest.raises(EmptyDomainError, match="empty band domain"):
            band_cif(curve, np.zeros((sim_model.n, curve.grid.size)),
                     BandRequest(target="cif", z0=(0.5, 1.0)), (curve.grid[0], curve.grid[-1]))
