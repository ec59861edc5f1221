import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exoticlab.bs_surface import bs_call
from exoticlab.market_models import (
    BatesParams,
    HestonParams,
    LiftedHestonParams,
    MarketState,
    SamplerConfig,
    sample_model,
)
from exoticlab.pricing_mc import (
    ExoticSpec,
    McConfig,
    cf_european_price,
    mc_price,
    mc_price_many,
    payoff,
    simulate_paths,
)
from exoticlab.rng import substream

MARKET = MarketState(spot=100.0, rate=0.02, div_yield=0.0)
FLAT_HESTON = HestonParams(v0=0.04, a=1.0, vl=0.04, xi=0.0, rho=-0.5)


def heston(v0=0.04, a=1.0, vl=0.04, xi=0.3, rho=-0.5):
    return HestonParams(v0=v0, a=a, vl=vl, xi=xi, rho=rho)


class TestSimulate:
    def test_flat_heston_variance_constant(self):
        cfg = McConfig(num_paths=64, steps_per_year=50, seed=1)
        paths = simulate_paths(FLAT_HESTON, MARKET, 1.0, cfg)
        assert np.all(paths.variances == 0.04)

    def test_bates_zero_intensity_matches_heston(self):
        cfg = McConfig(num_paths=128, steps_per_year=50, seed=2)
        h = heston()
        b = BatesParams(heston=h, lam=0.0, mu_j=0.0, sigma_j=0.0)
        rng_h = substream(5, "same")
        rng_b = substream(5, "same")
        ph = simulate_paths(h, MARKET, 1.0, cfg, rng=rng_h)
        pb = simulate_paths(b, MARKET, 1.0, cfg, rng=rng_b)
        np.testing.assert_array_equal(ph.spots, pb.spots)

    def test_lifted_zero_vol_of_vol_deterministic_variance(self):
        h = HestonParams(v0=0.04, a=1.2, vl=0.05, xi=0.0, rho=-0.4)
        model = LiftedHestonParams(heston=h, hurst=0.1)
        cfg = McConfig(num_paths=32, steps_per_year=50, seed=3)
        paths = simulate_paths(model, MARKET, 1.0, cfg)
        expected = model.deterministic_variance(paths.times)
        np.testing.assert_allclose(paths.variances, np.broadcast_to(expected, paths.variances.shape), atol=1e-15)

    def test_grid_has_minimum_steps(self):
        cfg = McConfig(num_paths=8, steps_per_year=12, seed=4)
        paths = simulate_paths(heston(), MARKET, 0.1, cfg)
        assert len(paths.times) - 1 == 50

    def test_paths_finite_under_stress(self):
        stressed = heston(v0=0.25, a=0.1, vl=0.25, xi=0.8, rho=-0.9)
        cfg = McConfig(num_paths=256, steps_per_year=50, seed=5)
        paths = simulate_paths(stressed, MARKET, 2.0, cfg)
        assert np.all(np.isfinite(paths.spots))


class TestPayoff:
    def _paths(self, spots_row):
        spots = np.asarray(spots_row, dtype=float)[None, :]
        times = np.linspace(0.0, 1.0, spots.shape[1])
        from exoticlab.pricing_mc import PathSet

        return PathSet(times=times, spots=spots, variances=np.zeros_like(spots))

    def test_partition_identity(self):
        rng = substream(6, "pay")
        cfg = McConfig(num_paths=512, steps_per_year=50, seed=6)
        paths = simulate_paths(heston(), MARKET, 1.0, cfg, rng=rng)
        ko = ExoticSpec("knock_out_call", strike=100.0, maturity=1.0, barrier=115.0)
        ki = ExoticSpec("knock_in_call", strike=100.0, maturity=1.0, barrier=115.0)
        van = ExoticSpec("european_call", strike=100.0, maturity=1.0)
        np.testing.assert_array_equal(payoff(paths, ko) + payoff(paths, ki), payoff(paths, van))

    def test_constant_path_asian(self):
        paths = self._paths([100.0] * 51)
        spec = ExoticSpec("asian_call", strike=90.0, maturity=1.0)
        assert payoff(paths, spec)[0] == pytest.approx(10.0, abs=1e-12)

    def test_breached_barrier_knocks_out(self):
        paths = self._paths(np.linspace(100.0, 120.0, 51))
        spec = ExoticSpec("knock_out_call", strike=100.0, maturity=1.0, barrier=110.0)
        assert payoff(paths, spec)[0] == 0.0

    def test_lookback_uses_running_maximum(self):
        paths = self._paths([100.0, 130.0, 90.0])
        spec = ExoticSpec("lookback_call", strike=100.0, maturity=1.0)
        assert payoff(paths, spec)[0] == pytest.approx(30.0, abs=1e-12)

    @given(st.integers(0, 10_000), st.floats(min_value=80.0, max_value=119.0))
    @settings(max_examples=30, deadline=None)
    def test_call_payoffs_non_increasing_in_strike(self, seed, k):
        cfg = McConfig(num_paths=16, steps_per_year=50, seed=seed)
        paths = simulate_paths(heston(), MARKET, 0.5, cfg)
        for kind in ("european_call", "asian_call", "lookback_call"):
            lo = payoff(paths, ExoticSpec(kind, strike=k, maturity=0.5))
            hi = payoff(paths, ExoticSpec(kind, strike=k + 1.0, maturity=0.5))
            assert np.all(hi <= lo)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ExoticSpec("knock_out_call", strike=100.0, maturity=1.0)  # no barrier
        with pytest.raises(ValueError):
            ExoticSpec("asian_call", strike=100.0, maturity=1.0, barrier=120.0)
        with pytest.raises(ValueError):
            ExoticSpec("knock_in_call", strike=100.0, maturity=1.0, barrier=90.0)
        with pytest.raises(ValueError):
            ExoticSpec("european_call", strike=100.0, maturity=-1.0)


class TestMcPrice:
    def test_deterministic_variance_matches_black_scholes(self):
        cfg = McConfig(num_paths=50_000, steps_per_year=250, seed=7)
        spec = ExoticSpec("european_call", strike=100.0, maturity=1.0)
        est = mc_price(FLAT_HESTON, MARKET, spec, cfg)
        ref = bs_call(100.0, 100.0, MARKET.rate, 0.0, 1.0, 0.2)
        assert abs(est.price - ref) < 3.0 * est.std_error
        assert est.std_error < 0.2

    def test_parity_on_common_paths(self):
        cfg = McConfig(num_paths=20_000, steps_per_year=100, seed=8)
        specs = [
            ExoticSpec("knock_out_call", strike=95.0, maturity=1.0, barrier=120.0),
            ExoticSpec("knock_in_call", strike=95.0, maturity=1.0, barrier=120.0),
            ExoticSpec("european_call", strike=95.0, maturity=1.0),
        ]
        ko, ki, van = mc_price_many(heston(), MARKET, specs, cfg)
        assert abs(ko.price + ki.price - van.price) < 1e-10 * max(van.price, 1.0)

    def test_deep_itm_short_dated_forward_value(self):
        cfg = McConfig(num_paths=20_000, steps_per_year=250, seed=9)
        spec = ExoticSpec("european_call", strike=1e-6, maturity=0.05)
        est = mc_price(heston(), MARKET, spec, cfg)
        fwd_value = 100.0 * math.exp(-0.0 * 0.05) - 1e-6 * math.exp(-MARKET.rate * 0.05)
        assert abs(est.price - fwd_value) < 3.0 * max(est.std_error, 1e-10) + 1e-6

    def test_bit_identical_reruns(self):
        cfg = McConfig(num_paths=4_000, steps_per_year=50, seed=10)
        spec = ExoticSpec("asian_call", strike=100.0, maturity=0.75)
        a = mc_price(heston(), MARKET, spec, cfg)
        b = mc_price(heston(), MARKET, spec, cfg)
        assert a == b

    def test_antithetic_mirrors_draws_and_prices_sanely(self):
        cfg = McConfig(num_paths=20_000, steps_per_year=100, seed=11, antithetic=True)
        paths = simulate_paths(FLAT_HESTON, MARKET, 1.0, cfg)
        half = cfg.num_paths // 2
        log_ret = np.log(paths.spots[:, -1] / 100.0)
        drift = (MARKET.rate - 0.5 * 0.04) * 1.0
        np.testing.assert_allclose(
            log_ret[:half] - drift, -(log_ret[half:] - drift), atol=1e-10
        )
        spec = ExoticSpec("european_call", strike=100.0, maturity=1.0)
        est = mc_price(FLAT_HESTON, MARKET, spec, cfg)
        ref = bs_call(100.0, 100.0, MARKET.rate, 0.0, 1.0, 0.2)
        assert abs(est.price - ref) < 3.0 * est.std_error

    def test_convergence_rate(self):
        # quadrupling the paths should roughly halve the reported error
        spec = ExoticSpec("european_call", strike=100.0, maturity=0.5)
        ratios = []
        for rep in range(20):
            small = mc_price(heston(), MARKET, spec, McConfig(num_paths=2_000, steps_per_year=50, seed=100 + rep))
            big = mc_price(heston(), MARKET, spec, McConfig(num_paths=8_000, steps_per_year=50, seed=200 + rep))
            ratios.append(small.std_error / big.std_error)
        assert 1.7 < float(np.mean(ratios)) < 2.3

    def test_separate_streams_without_common_paths(self):
        cfg = McConfig(num_paths=2_000, steps_per_year=50, seed=12, common_paths=False)
        specs = [ExoticSpec("european_call", strike=100.0, maturity=1.0)] * 2
        a, b = mc_price_many(heston(), MARKET, specs, cfg)
        assert a.price != b.price  # independent draws


class TestCfPrice:
    def test_tiny_vol_of_vol_is_black_scholes(self):
        model = heston(xi=1e-8)
        price = cf_european_price(model, MARKET, 100.0, 1.0)
        assert abs(price - bs_call(100.0, 100.0, MARKET.rate, 0.0, 1.0, 0.2)) < 1e-6

    def test_bates_zero_intensity_equals_heston(self):
        h = heston()
        b = BatesParams(heston=h, lam=0.0, mu_j=0.0, sigma_j=0.0)
        for k in (70.0, 100.0, 130.0):
            assert abs(cf_european_price(b, MARKET, k, 0.5) - cf_european_price(h, MARKET, k, 0.5)) < 1e-10

    def test_no_arbitrage_bounds_random_panel(self):
        cfg = SamplerConfig()
        rng = substream(13, "cfpanel")
        for _ in range(40):
            draw = sample_model(cfg, "heston", rng)
            k = float(rng.uniform(70, 130))
            t = float(rng.uniform(0.05, 2.0))
            p = cf_european_price(draw.params, draw.market, k, t)
            lo = max(100.0 * math.exp(-0.0 * t) - k * math.exp(-draw.market.rate * t), 0.0)
            assert lo <= p <= 100.0

    def test_gl_quadrature_agrees_with_adaptive_quad(self):
        from scipy.integrate import quad

        from exoticlab.pricing_mc import _log_cf

        model = heston(v0=0.09, a=2.0, vl=0.06, xi=0.5, rho=-0.7)
        T, K = 0.5, 110.0
        fwd = 100.0 * math.exp(MARKET.rate * T)
        k_rel = math.log(K / fwd)

        def int_p2(u):
            val = np.exp(_log_cf(np.array([u]), model, T))[0] / (1j * u)
            return (np.exp(-1j * u * k_rel) * val).real

        def int_p1(u):
            val = np.exp(_log_cf(np.array([u - 1j]), model, T))[0] / (1j * u)
            return (np.exp(-1j * u * k_rel) * val).real

        i2 = quad(int_p2, 1e-10, 400.0, limit=400)[0]
        i1 = quad(int_p1, 1e-10, 400.0, limit=400)[0]
        p1 = 0.5 + i1 / math.pi
        p2 = 0.5 + i2 / math.pi
        ref = 100.0 * p1 - K * math.exp(-MARKET.rate * T) * p2
        assert cf_european_price(model, MARKET, K, T) == pytest.approx(ref, abs=1e-8)

    def test_cf_matches_mc_on_random_panel(self):
        cfg_mc = McConfig(num_paths=20_000, steps_per_year=100)
        sampler = SamplerConfig()
        rng = substream(14, "cfmc")
        for i in range(25):
            draw = sample_model(sampler, "bates" if i % 2 else "heston", rng)
            k = float(rng.uniform(80, 120))
            t = float(rng.uniform(0.1, 2.0))
            spec = ExoticSpec("european_call", strike=k, maturity=t)
            cfg = McConfig(num_paths=cfg_mc.num_paths, steps_per_year=cfg_mc.steps_per_year, seed=1000 + i)
            est = mc_price(draw.params, draw.market, spec, cfg)
            cf = cf_european_price(draw.params, draw.market, k, t)
            assert abs(est.price - cf) < 3.0 * est.std_error + 0.02

    def test_bates_deterministic_limit_jump_series_vs_mc(self):
        h = HestonParams(v0=0.04, a=1.0, vl=0.04, xi=1e-9, rho=0.0)
        b = BatesParams(heston=h, lam=2.0, mu_j=-0.03, sigma_j=0.04)
        cf = cf_european_price(b, MARKET, 100.0, 1.0)
        sim = BatesParams(heston=HestonParams(v0=0.04, a=1.0, vl=0.04, xi=0.0, rho=0.0),
                          lam=2.0, mu_j=-0.03, sigma_j=0.04)
        cfg = McConfig(num_paths=100_000, steps_per_year=100, seed=15)
        est = mc_price(sim, MARKET, ExoticSpec("european_call", strike=100.0, maturity=1.0), cfg)
        assert abs(est.price - cf) < 3.0 * est.std_error

    def test_lifted_rejected(self):
        model = LiftedHestonParams(heston=heston(), hurst=0.1)
        with pytest.raises(TypeError):
            cf_european_price(model, MARKET, 100.0, 1.0)
