import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from exoticlab.bs_surface import (
    MASK_FULL,
    MASK_SNP19,
    MATURITIES,
    MONEYNESS,
    ArbitrageViolationError,
    OptionQuote,
    SurfaceGrid,
    SurfaceInvalidError,
    bs_call,
    fit_surface,
    implied_vol,
    interpolate,
    interpolation_weights,
    model_surface,
    read_quotes_csv,
    read_surface_csv,
    write_surface_csv,
)
from exoticlab.market_models import (
    BatesParams,
    HestonParams,
    LiftedHestonParams,
    MarketState,
    SamplerConfig,
    sample_model,
)
from exoticlab.pricing_mc import McConfig, cf_european_price
from exoticlab.rng import substream

DATA = Path(__file__).parent / "data"
MARKET = MarketState(spot=100.0, rate=0.02)


def surface_from(vols, mask=MASK_FULL):
    return SurfaceGrid(vols=np.asarray(vols, dtype=float), mask=mask)


class TestBsCall:
    def test_zero_vol_atm_forward(self):
        assert bs_call(100.0, 100.0, 0.0, 0.0, 1.0, 0.0) == 0.0

    def test_tiny_strike_approaches_asset(self):
        assert bs_call(100.0, 1e-10, 0.03, 0.0, 1.0, 0.2) == pytest.approx(100.0, abs=1e-6)

    def test_against_lognormal_quadrature(self):
        # frozen from integrating the payoff against the lognormal density
        # (scipy.integrate.quad, abs err ~7e-8): 7.96556745635902
        assert bs_call(100.0, 100.0, 0.0, 0.0, 1.0, 0.2) == pytest.approx(7.96556745635902, abs=2e-7)

    def test_zero_vol_returns_discounted_intrinsic(self):
        got = bs_call(100.0, 80.0, 0.05, 0.01, 2.0, 0.0)
        want = 100.0 * math.exp(-0.02) - 80.0 * math.exp(-0.1)
        assert got == pytest.approx(want, abs=1e-12)

    def test_array_broadcast(self):
        out = bs_call(100.0, np.array([90.0, 100.0, 110.0]), 0.0, 0.0, 1.0, 0.2)
        assert out.shape == (3,)
        assert np.all(np.diff(out) < 0)


class TestImpliedVol:
    def test_round_trip(self):
        price = bs_call(100.0, 105.0, 0.02, 0.01, 0.5, 0.2)
        assert implied_vol(price, 100.0, 105.0, 0.02, 0.01, 0.5) == pytest.approx(0.2, abs=1e-8)

    def test_intrinsic_boundary_rejected(self):
        intrinsic = 100.0 - 80.0 * math.exp(-0.02)
        with pytest.raises(ArbitrageViolationError):
            implied_vol(intrinsic, 100.0, 80.0, 0.02, 0.0, 1.0)
        with pytest.raises(ArbitrageViolationError):
            implied_vol(100.0, 100.0, 0.02, 0.0, 1.0, 0.02)

    def test_heston_cf_price_self_consistent(self):
        model = HestonParams(v0=0.06, a=1.5, vl=0.05, xi=0.4, rho=-0.6)
        price = cf_european_price(model, MARKET, 100.0, 1.0)
        sigma = implied_vol(price, 100.0, 100.0, MARKET.rate, 0.0, 1.0)
        assert 0.0 < sigma < 2.0
        assert abs(bs_call(100.0, 100.0, MARKET.rate, 0.0, 1.0, sigma) - price) < 1e-10

    @given(
        st.floats(min_value=0.05, max_value=1.0),
        st.floats(min_value=0.7, max_value=1.3),
        st.floats(min_value=1.0 / 12.0, max_value=2.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_round_trip_property(self, sigma, m, t):
        from exoticlab.bs_surface import bs_vega

        price = bs_call(100.0, m * 100.0, 0.02, 0.0, t, sigma)
        lower = max(100.0 - m * 100.0 * math.exp(-0.02 * t), 0.0)
        # float64 price rounding limits recoverable vol accuracy to roughly
        # eps * price / vega, so demand enough vega for a 1e-6 resolution
        assume(price - lower > 1e-12)
        assume(bs_vega(100.0, m * 100.0, 0.02, 0.0, t, sigma) > 1e-6)
        assert implied_vol(price, 100.0, m * 100.0, 0.02, 0.0, t) == pytest.approx(sigma, abs=1e-6)


class TestModelSurface:
    def test_near_deterministic_heston_is_flat(self):
        model = HestonParams(v0=0.04, a=1.0, vl=0.04, xi=1e-8, rho=-0.5)
        surf = model_surface(model, MARKET, MASK_FULL)
        np.testing.assert_allclose(surf.vols, 0.2, atol=1e-4)

    def test_bates_without_jumps_reduces_to_heston(self):
        h = HestonParams(v0=0.06, a=1.2, vl=0.05, xi=0.35, rho=-0.5)
        b = BatesParams(heston=h, lam=0.0, mu_j=0.0, sigma_j=0.0)
        sh = model_surface(h, MARKET, MASK_FULL)
        sb = model_surface(b, MARKET, MASK_FULL)
        np.testing.assert_allclose(sb.vols, sh.vols, atol=1e-8)

    def test_jump_convexity_golden_panel(self):
        panel = json.loads((DATA / "smile_convexity_golden.json").read_text())
        for entry in panel:
            market = MarketState(**entry["market"])
            heston = HestonParams(**entry["heston"])
            bates = BatesParams(heston=heston, **entry["jumps"])
            sb = model_surface(bates, market, MASK_FULL)
            sh = model_surface(heston, market, MASK_FULL)
            conv_b = sb.vols[0, 0] - 2 * sb.vols[0, 2] + sb.vols[0, 4]
            conv_h = sh.vols[0, 0] - 2 * sh.vols[0, 2] + sh.vols[0, 4]
            assert conv_b >= conv_h
            assert conv_b == pytest.approx(entry["convexity_bates"], abs=1e-8)
            assert conv_h == pytest.approx(entry["convexity_heston"], abs=1e-8)

    def test_snp19_mask_active_point_layout(self):
        assert MASK_SNP19.sum() == 19
        assert not MASK_SNP19[0, 0] and not MASK_SNP19[0, 1]
        assert not MASK_SNP19[0, 3] and not MASK_SNP19[0, 4]
        assert not MASK_SNP19[1, 0] and not MASK_SNP19[1, 4]
        assert MASK_SNP19[0, 2] and MASK_SNP19[1, 1]

    def test_inactive_nodes_filled_from_row_neighbors(self):
        model = HestonParams(v0=0.06, a=1.2, vl=0.05, xi=0.35, rho=-0.5)
        surf = model_surface(model, MARKET, MASK_SNP19)
        assert surf.vols[0, 0] == surf.vols[0, 2]  # 1m row keeps only ATM
        assert surf.vols[1, 0] == surf.vols[1, 1]

    def test_lifted_surface_via_common_path_mc(self):
        h = HestonParams(v0=0.09, a=1.0, vl=0.09, xi=0.3, rho=-0.5)
        model = LiftedHestonParams(heston=h, hurst=0.1)
        cfg = McConfig(num_paths=20_000, steps_per_year=50, seed=21, antithetic=True)
        surf = model_surface(model, MARKET, MASK_SNP19, mc_cfg=cfg)
        active = surf.active_vols()
        assert active.shape == (19,)
        assert np.all((active > 0.05) & (active < 1.0))

    def test_mc_and_cf_surfaces_agree_for_heston(self):
        # stochastic-error tolerance plus a small discretization allowance
        from exoticlab.bs_surface import bs_vega

        rng = substream(22, "mccf")
        sampler = SamplerConfig(v0=(0.04, 0.2), vl=(0.04, 0.2), xi=(0.1, 0.5))
        for rep in range(2):
            draw = sample_model(sampler, "heston", rng)
            cf_surf = model_surface(draw.params, draw.market, MASK_SNP19)
            cfg = McConfig(num_paths=100_000, steps_per_year=150, seed=300 + rep, antithetic=True)
            mc_surf = model_surface(draw.params, draw.market, MASK_SNP19, mc_cfg=cfg, method="mc")
            for i, T in enumerate(MATURITIES):
                for j, m in enumerate(MONEYNESS):
                    if not MASK_SNP19[i, j]:
                        continue
                    vega = bs_vega(100.0, m * 100.0, draw.market.rate, 0.0, T, cf_surf.vols[i, j])
                    # payoff std bounded by spot vol scale; 3 sigma + euler bias
                    se_vol = 100.0 * math.sqrt(cf_surf.vols[i, j] ** 2 * T) / math.sqrt(50_000) / max(vega, 1.0)
                    tol = 3.0 * se_vol + 0.003
                    assert abs(mc_surf.vols[i, j] - cf_surf.vols[i, j]) < tol

    def test_invalid_surface_raises(self):
        # vol so low no Monte Carlo path crosses the 0.85 strike by 3m: the
        # put value is exactly zero, pinning the call at intrinsic
        h = HestonParams(v0=0.0025, a=0.5, vl=0.0025, xi=0.05, rho=-0.3)
        model = LiftedHestonParams(heston=h, hurst=0.1)
        cfg = McConfig(num_paths=2_000, steps_per_year=50, seed=31)
        with pytest.raises(SurfaceInvalidError):
            model_surface(model, MARKET, MASK_SNP19, mc_cfg=cfg)


class TestInterpolate:
    def test_exact_at_nodes(self):
        rng = substream(23, "interp")
        vols = 0.2 + 0.1 * rng.random((5, 5))
        surf = surface_from(vols)
        for i, T in enumerate(MATURITIES):
            for j, m in enumerate(MONEYNESS):
                assert interpolate(surf, m * 100.0, T, 100.0) == pytest.approx(vols[i, j], abs=1e-14)

    def test_cell_midpoint_average(self):
        vols = np.full((5, 5), 0.2)
        vols[2, 2], vols[2, 3], vols[3, 2], vols[3, 3] = 0.18, 0.22, 0.26, 0.30
        surf = surface_from(vols)
        t_mid = 0.5 * (MATURITIES[2] + MATURITIES[3])
        m_mid = 0.5 * (MONEYNESS[2] + MONEYNESS[3])
        assert interpolate(surf, m_mid * 100.0, t_mid, 100.0) == pytest.approx(0.24, abs=1e-14)

    def test_flat_surface_everywhere(self):
        surf = surface_from(np.full((5, 5), 0.3))
        for k, t in [(70.0, 0.05), (135.0, 2.5), (101.3, 0.7), (60.0, 1.0)]:
            assert interpolate(surf, k, t, 100.0) == pytest.approx(0.3, abs=1e-14)

    def test_clamps_outside_hull(self):
        rng = substream(24, "clamp")
        vols = 0.2 + 0.1 * rng.random((5, 5))
        surf = surface_from(vols)
        assert interpolate(surf, 50.0, 0.01, 100.0) == pytest.approx(vols[0, 0], abs=1e-14)
        assert interpolate(surf, 160.0, 3.0, 100.0) == pytest.approx(vols[4, 4], abs=1e-14)

    @given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.floats(0.0, 1.0),
           st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
    @settings(max_examples=50, deadline=None)
    def test_linearity_in_node_vector(self, seed, mu, tu, alpha, beta):
        rng = substream(seed, "lin")
        a = 0.2 + 0.1 * rng.random((5, 5))
        b = 0.2 + 0.1 * rng.random((5, 5))
        k = (0.7 + 0.6 * mu) * 100.0
        t = 1.0 / 12.0 + (2.0 - 1.0 / 12.0) * tu
        combo = alpha * a + beta * b
        want = alpha * interpolate(surface_from(a), k, t, 100.0) + beta * interpolate(
            surface_from(b), k, t, 100.0
        )
        got = sum(w * combo[i, j] for i, j, w in interpolation_weights(k, t, 100.0))
        assert got == pytest.approx(want, abs=1e-12)


class TestFitSurface:
    def _node_quotes(self, vols, mask):
        quotes = []
        for i, T in enumerate(MATURITIES):
            for j, m in enumerate(MONEYNESS):
                if mask[i, j]:
                    quotes.append(OptionQuote(maturity=T, strike=m * 100.0, spot=100.0,
                                              implied_vol=vols[i, j]))
        return quotes

    def test_quotes_at_nodes_recovered_exactly(self):
        rng = substream(25, "fit")
        vols = 0.2 + 0.1 * rng.random((5, 5))
        fit = fit_surface(self._node_quotes(vols, MASK_SNP19), MASK_SNP19)
        np.testing.assert_allclose(fit.surface.vols[MASK_SNP19], vols[MASK_SNP19], atol=1e-10)
        assert not fit.underdetermined[MASK_SNP19].any()

    def test_round_trip_through_interpolation(self):
        rng = substream(26, "fit2")
        vols = 0.2 + 0.1 * rng.random((5, 5))
        truth = surface_from(vols)
        quotes = []
        for i in range(4):
            for j in range(4):
                for _ in range(5):
                    t = rng.uniform(MATURITIES[i], MATURITIES[i + 1])
                    m = rng.uniform(MONEYNESS[j], MONEYNESS[j + 1])
                    quotes.append(OptionQuote(maturity=t, strike=m * 100.0, spot=100.0,
                                              implied_vol=interpolate(truth, m * 100.0, t, 100.0)))
        fit = fit_surface(quotes, MASK_FULL)
        np.testing.assert_allclose(fit.surface.vols, vols, atol=1e-8)

    def test_single_quote_cell(self):
        quote = OptionQuote(maturity=0.7, strike=105.0, spot=100.0, implied_vol=0.25)
        fit = fit_surface([quote], MASK_FULL)
        got = interpolate(fit.surface, 105.0, 0.7, 100.0)
        assert got == pytest.approx(0.25, abs=1e-10)
        incident = np.zeros((5, 5), dtype=bool)
        incident[2:4, 2:4] = True  # (6m,1y) x (1.0,1.15) cell corners
        assert fit.underdetermined[~incident].all()

    def test_empty_quotes_error(self):
        with pytest.raises(ValueError):
            fit_surface([], MASK_FULL)

    def test_residual_optimality(self):
        rng = substream(27, "fit3")
        vols = 0.2 + 0.1 * rng.random((5, 5))
        truth = surface_from(vols)
        quotes = []
        for _ in range(120):
            t = rng.uniform(MATURITIES[0], MATURITIES[-1])
            m = rng.uniform(MONEYNESS[0], MONEYNESS[-1])
            noise = rng.normal(0.0, 0.01)
            quotes.append(OptionQuote(maturity=t, strike=m * 100.0, spot=100.0,
                                      implied_vol=interpolate(truth, m * 100.0, t, 100.0) + noise))

        def residual(node_vols):
            s = surface_from(node_vols)
            return sum(
                (interpolate(s, q.strike, q.maturity, q.spot) - q.implied_vol) ** 2
                for q in quotes
            )

        fit = fit_surface(quotes, MASK_FULL)
        best = residual(fit.surface.vols)
        for _ in range(25):
            perturbed = fit.surface.vols + rng.normal(0.0, 0.01, (5, 5))
            assert residual(perturbed) >= best - 1e-12

    def test_quote_validation(self):
        with pytest.raises(ValueError):
            OptionQuote(maturity=1.0, strike=50.0, spot=100.0, implied_vol=0.2)
        with pytest.raises(ValueError):
            OptionQuote(maturity=3.0, strike=100.0, spot=100.0, implied_vol=0.2)


class TestCsv:
    def test_surface_round_trip(self):
        rng = substream(28, "csv")
        vols = 0.2 + 0.1 * rng.random((5, 5))
        surf = surface_from(vols, MASK_SNP19)
        again = read_surface_csv(write_surface_csv(surf))
        np.testing.assert_allclose(again.vols, surf.vols, atol=1e-10)
        np.testing.assert_array_equal(again.mask, surf.mask)

    def test_quotes_header_required(self):
        with pytest.raises(ValueError):
            read_quotes_csv("a,b\n1,2\n")

    def test_quotes_parse(self):
        text = (
            "date,T_years,strike,spot,implied_vol\n"
            "2016-01-04,0.5,95.0,100.0,0.22\n"
            "2016-01-04,1.0,105.0,100.0,0.19\n"
            "2016-01-05,0.25,100.0,100.0,0.25\n"
        )
        days = read_quotes_csv(text)
        assert set(days) == {"2016-01-04", "2016-01-05"}
        assert len(days["2016-01-04"]) == 2
