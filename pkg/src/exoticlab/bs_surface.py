"""Black-Scholes pricing, implied vols, and the standard surface grid.

The surface is a 5 x 5 lattice over maturities {1m, 3m, 6m, 1y, 2y} and
moneyness {0.7, 0.85, 1.0, 1.15, 1.3} (strike / spot). Either all 25 points
are active, or the 19-point index variant that drops the extreme short-dated
wings. Inactive nodes still carry values (filled from their nearest active
row neighbor) so that bilinear interpolation stays total on the lattice.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .market_models import MarketState, ModelParams
from .rng import substream

MATURITIES = (1.0 / 12.0, 0.25, 0.5, 1.0, 2.0)
MONEYNESS = (0.7, 0.85, 1.0, 1.15, 1.3)

MASK_FULL = np.ones((5, 5), dtype=bool)
MASK_FULL.setflags(write=False)

# index variant: no 1m wings, no 3m extreme wings
MASK_SNP19 = np.ones((5, 5), dtype=bool)
MASK_SNP19[0, [0, 1, 3, 4]] = False
MASK_SNP19[1, [0, 4]] = False
MASK_SNP19.setflags(write=False)

VOL_LO, VOL_HI = 1e-6, 5.0
_PRICE_TOL = 1e-10
_MAX_ITER = 200


class ArbitrageViolationError(ValueError):
    """Price outside the no-arbitrage band for a European call."""


class SurfaceInvalidError(RuntimeError):
    """A surface node price could not be inverted to an implied vol."""


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bs_call(S, K, r, q, T, sigma):
    """Black-Scholes-Merton European call; sigma = 0 gives discounted intrinsic."""
    if np.ndim(S) == 0 and np.ndim(K) == 0 and np.ndim(sigma) == 0:
        return _bs_call_scalar(float(S), float(K), r, q, T, float(sigma))
    S, K, sigma = np.broadcast_arrays(
        np.asarray(S, float), np.asarray(K, float), np.asarray(sigma, float)
    )
    out = np.empty(S.shape)
    flat = out.reshape(-1)
    for i, (s_, k_, sig_) in enumerate(zip(S.reshape(-1), K.reshape(-1), sigma.reshape(-1))):
        flat[i] = _bs_call_scalar(s_, k_, r, q, T, sig_)
    return out


def _bs_call_scalar(S: float, K: float, r: float, q: float, T: float, sigma: float) -> float:
    if S <= 0 or K <= 0:
        raise ValueError("spot and strike must be positive")
    if T <= 0:
        raise ValueError("maturity must be positive")
    if sigma < 0:
        raise ValueError("volatility must be non-negative")
    df_q = math.exp(-q * T)
    df_r = math.exp(-r * T)
    if sigma == 0.0:
        return max(S * df_q - K * df_r, 0.0)
    sig_rt = sigma * math.sqrt(T)
    d1 = (math.log(S / K) + (r - q + 0.5 * sigma * sigma) * T) / sig_rt
    d2 = d1 - sig_rt
    return S * df_q * _norm_cdf(d1) - K * df_r * _norm_cdf(d2)


def bs_vega(S: float, K: float, r: float, q: float, T: float, sigma: float) -> float:
    if sigma <= 0:
        return 0.0
    sig_rt = sigma * math.sqrt(T)
    d1 = (math.log(S / K) + (r - q + 0.5 * sigma * sigma) * T) / sig_rt
    return S * math.exp(-q * T) * math.sqrt(T) * math.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)


def implied_vol(price: float, S: float, K: float, r: float, q: float, T: float) -> float:
    """Invert the call price to a Black-Scholes vol.

    Safeguarded Newton on [VOL_LO, VOL_HI]: every step stays inside the
    current bracket, falling back to bisection otherwise. Stops once the
    price is matched to 1e-10 and the vol iterate has stabilized (the second
    condition matters for tiny-vega wings, where many vols match the price
    within tolerance).
    """
    lower = max(S * math.exp(-q * T) - K * math.exp(-r * T), 0.0)
    upper = S * math.exp(-q * T)
    if not lower < price < upper:
        raise ArbitrageViolationError(
            f"call price {price} outside the arbitrage band ({lower}, {upper})"
        )
    lo, hi = VOL_LO, VOL_HI
    f_lo = _bs_call_scalar(S, K, r, q, T, lo) - price
    f_hi = _bs_call_scalar(S, K, r, q, T, hi) - price
    if f_lo > 0:
        # price below the sigma = VOL_LO value: indistinguishable from the floor
        if f_lo < _PRICE_TOL:
            return lo
        raise ArbitrageViolationError("price below the minimum-volatility value")
    if f_hi < 0:
        raise ArbitrageViolationError("price above the maximum-volatility value")
    sigma = min(max(math.sqrt(2.0 * math.pi / T) * price / S, 0.05), 1.0)
    prev = math.inf
    for _ in range(_MAX_ITER):
        f = _bs_call_scalar(S, K, r, q, T, sigma) - price
        if abs(f) < _PRICE_TOL and abs(sigma - prev) < 1e-9:
            return sigma
        if f > 0:
            hi = sigma
        else:
            lo = sigma
        vega = bs_vega(S, K, r, q, T, sigma)
        step = sigma - f / vega if vega > 1e-14 else 0.5 * (lo + hi)
        prev = sigma
        sigma = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-12:
            return sigma
    from .pricing_mc import NumericError

    raise NumericError("implied volatility iteration did not converge")


@dataclass(frozen=True)
class SurfaceGrid:
    """Implied vols on the standard lattice with an active-point mask."""

    vols: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        vols = np.asarray(self.vols, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if vols.shape != (5, 5) or mask.shape != (5, 5):
            raise ValueError("vols and mask must be 5x5")
        active = vols[mask]
        if not np.all((active > 0.0) & (active < 2.0) & np.isfinite(active)):
            raise ValueError("active vols must lie in (0, 2)")
        vols = vols.copy()
        mask = mask.copy()
        vols.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "vols", vols)
        object.__setattr__(self, "mask", mask)

    @property
    def n_active(self) -> int:
        return int(self.mask.sum())

    def active_vols(self) -> np.ndarray:
        """Active node vols, maturity-major row order."""
        return self.vols[self.mask]


def fill_inactive(vols: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Copy each inactive node from its nearest active neighbor in the row."""
    out = np.array(vols, dtype=float)
    for i in range(5):
        row_active = np.flatnonzero(mask[i])
        if row_active.size == 0:
            raise ValueError(f"maturity row {i} has no active nodes")
        for j in range(5):
            if not mask[i, j]:
                out[i, j] = out[i, row_active[np.argmin(np.abs(row_active - j))]]
    return out


def model_surface(
    model: ModelParams,
    market: MarketState,
    mask: np.ndarray = MASK_FULL,
    mc_cfg=None,
    method: str = "auto",
) -> SurfaceGrid:
    """Implied-vol surface of a model on the standard grid.

    Heston/Bates nodes are priced by Fourier inversion; the multi-factor
    model has no usable characteristic function here and is priced by common
    paths per maturity, with in-the-money nodes routed through the put price
    (put-call parity) so Monte Carlo noise cannot push them below intrinsic.
    """
    from . import pricing_mc as pm
    from .market_models import LiftedHestonParams

    if method not in ("auto", "cf", "mc"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "mc" if isinstance(model, LiftedHestonParams) else "cf"
    if method == "cf" and isinstance(model, LiftedHestonParams):
        raise ValueError("cf pricing is not available for the multi-factor model")
    if method == "mc" and mc_cfg is None:
        raise ValueError("mc surface construction needs an McConfig")

    spot, r, q = market.spot, market.rate, market.div_yield
    vols = np.full((5, 5), np.nan)
    for i, T in enumerate(MATURITIES):
        cols = np.flatnonzero(mask[i])
        if cols.size == 0:
            continue
        strikes = np.array([MONEYNESS[j] * spot for j in cols])
        if method == "cf":
            prices = pm.cf_european_prices(model, market, strikes, T)
        else:
            rng = substream(mc_cfg.seed, "surface", i)
            paths = pm.simulate_paths(model, market, T, mc_cfg, rng=rng)
            prices = _mc_european_prices(paths, strikes, market, T)
        for j, k, price in zip(cols, strikes, prices):
            try:
                vols[i, j] = implied_vol(float(price), spot, float(k), r, q, T)
            except (ArbitrageViolationError, pm.NumericError) as exc:
                raise SurfaceInvalidError(
                    f"node (T={T}, m={MONEYNESS[j]}) not invertible: {exc}"
                ) from exc
    return SurfaceGrid(vols=fill_inactive(vols, mask), mask=mask)


def _mc_european_prices(paths, strikes, market: MarketState, T: float) -> np.ndarray:
    """Common-path European prices; ITM strikes use the put and parity."""
    terminal = paths.spots[:, -1]
    if paths.antithetic:
        half = terminal.shape[0] // 2

        def mean_payoff(pay):
            return float(np.mean(0.5 * (pay[:half] + pay[half:])))

    else:

        def mean_payoff(pay):
            return float(np.mean(pay))

    spot, r, q = market.spot, market.rate, market.div_yield
    df_r, df_q = math.exp(-r * T), math.exp(-q * T)
    out = np.empty(len(strikes))
    for idx, k in enumerate(strikes):
        if k < spot:
            put = df_r * mean_payoff(np.maximum(k - terminal, 0.0))
            out[idx] = put + spot * df_q - k * df_r
        else:
            out[idx] = df_r * mean_payoff(np.maximum(terminal - k, 0.0))
    return out


def _bracket(values: tuple[float, ...], x: float) -> tuple[int, int, float]:
    """Clamped bracketing indices and the interpolation fraction."""
    if x <= values[0]:
        return 0, 0, 0.0
    if x >= values[-1]:
        n = len(values) - 1
        return n, n, 0.0
    hi = int(np.searchsorted(np.asarray(values), x, side="right"))
    lo = hi - 1
    if values[lo] == x:
        return lo, lo, 0.0
    frac = (x - values[lo]) / (values[hi] - values[lo])
    return lo, hi, frac


def interpolation_weights(K: float, T: float, S: float) -> list[tuple[int, int, float]]:
    """Bilinear weights of a (strike, maturity) query over grid nodes.

    Coordinates outside the lattice hull clamp to the boundary. The result
    is a list of (row, col, weight) with at most four entries.
    """
    m = K / S
    i_lo, i_hi, ft = _bracket(MATURITIES, T)
    j_lo, j_hi, fm = _bracket(MONEYNESS, m)
    weights: dict[tuple[int, int], float] = {}
    for i, wi in ((i_lo, 1.0 - ft), (i_hi, ft)):
        for j, wj in ((j_lo, 1.0 - fm), (j_hi, fm)):
            w = wi * wj
            if w != 0.0:
                weights[(i, j)] = weights.get((i, j), 0.0) + w
    return [(i, j, w) for (i, j), w in sorted(weights.items())]


def interpolate(surface: SurfaceGrid, K: float, T: float, S: float) -> float:
    """Bilinear implied vol at (K, T); exact at nodes, clamped outside the hull."""
    return float(
        sum(w * surface.vols[i, j] for i, j, w in interpolation_weights(K, T, S))
    )


@dataclass(frozen=True)
class OptionQuote:
    maturity: float
    strike: float
    spot: float
    implied_vol: float

    def __post_init__(self):
        m = self.strike / self.spot
        if not (MONEYNESS[0] - 1e-12 <= m <= MONEYNESS[-1] + 1e-12):
            raise ValueError(f"moneyness {m} outside [{MONEYNESS[0]}, {MONEYNESS[-1]}]")
        if not (MATURITIES[0] - 1e-12 <= self.maturity <= MATURITIES[-1] + 1e-12):
            raise ValueError("maturity outside the grid range")
        if not self.implied_vol > 0:
            raise ValueError("implied vol must be positive")


@dataclass(frozen=True)
class FitResult:
    surface: SurfaceGrid
    underdetermined: np.ndarray  # 5x5 bool: nodes filled from a neighbor


def fit_surface(quotes: list[OptionQuote], mask: np.ndarray = MASK_SNP19) -> FitResult:
    """Least-squares node vols reproducing the quotes under interpolation.

    Each quote's interpolated vol is a fixed linear combination of at most
    four node vols, so the best-fit problem is an exact linear least-squares
    solve. Nodes no quote touches (and any directions a rank-deficient
    system leaves free) are flagged and filled from the nearest determined
    node.
    """
    if not quotes:
        raise ValueError("quote set is empty")
    n_nodes = 25
    a = np.zeros((len(quotes), n_nodes))
    y = np.empty(len(quotes))
    for row, quote in enumerate(quotes):
        for i, j, w in interpolation_weights(quote.strike, quote.maturity, quote.spot):
            a[row, 5 * i + j] += w
        y[row] = quote.implied_vol

    touched = np.flatnonzero(np.abs(a).sum(axis=0) > 0.0)
    a_t = a[:, touched]
    sol, _, rank, _ = np.linalg.lstsq(a_t, y, rcond=None)

    # a node is fully determined when it gets quote weight and no null-space
    # direction of the design involves it; under-determined touched nodes keep
    # their minimum-norm values but are flagged
    determined = np.zeros(n_nodes, dtype=bool)
    determined[touched] = True
    if rank < touched.size:
        _, s, vt = np.linalg.svd(a_t, full_matrices=True)
        tol = max(a_t.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
        null_rows = vt[rank:]
        free = np.abs(null_rows).max(axis=0) > max(tol, 1e-10)
        determined[touched[free]] = False

    values = np.full(n_nodes, np.nan)
    values[touched] = sol
    grid_i, grid_j = np.divmod(np.arange(n_nodes), 5)
    for node in range(n_nodes):
        if node in touched:
            continue
        src = np.flatnonzero(determined) if determined.any() else touched
        d2 = (grid_i[src] - grid_i[node]) ** 2 + (grid_j[src] - grid_j[node]) ** 2
        values[node] = values[src[np.argmin(d2)]]

    vols = values.reshape(5, 5)
    underdet = (~determined).reshape(5, 5)
    return FitResult(surface=SurfaceGrid(vols=vols, mask=mask), underdetermined=underdet)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

QUOTE_COLUMNS = ("date", "T_years", "strike", "spot", "implied_vol")
SURFACE_COLUMNS = ("maturity", "moneyness", "vol", "active")


def read_quotes_csv(text: str) -> dict[str, list[OptionQuote]]:
    """Parse a quotes CSV (header required) into per-date quote lists."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != QUOTE_COLUMNS:
        raise ValueError(f"quote CSV must have header {','.join(QUOTE_COLUMNS)}")
    by_date: dict[str, list[OptionQuote]] = {}
    for row in reader:
        quote = OptionQuote(
            maturity=float(row["T_years"]),
            strike=float(row["strike"]),
            spot=float(row["spot"]),
            implied_vol=float(row["implied_vol"]),
        )
        by_date.setdefault(row["date"], []).append(quote)
    if not by_date:
        raise ValueError("quote CSV contains no rows")
    return by_date


def write_surface_csv(surface: SurfaceGrid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SURFACE_COLUMNS)
    for i, T in enumerate(MATURITIES):
        for j, m in enumerate(MONEYNESS):
            writer.writerow([f"{T:.12g}", f"{m:.12g}", f"{surface.vols[i, j]:.12g}",
                             int(surface.mask[i, j])])
    return buf.getvalue()


def read_surface_csv(text: str) -> SurfaceGrid:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != SURFACE_COLUMNS:
        raise ValueError(f"surface CSV must have header {','.join(SURFACE_COLUMNS)}")
    vols = np.full((5, 5), np.nan)
    mask = np.zeros((5, 5), dtype=bool)
    mats = np.asarray(MATURITIES)
    mons = np.asarray(MONEYNESS)
    for row in reader:
        i = int(np.argmin(np.abs(mats - float(row["maturity"]))))
        j = int(np.argmin(np.abs(mons - float(row["moneyness"]))))
        vols[i, j] = float(row["vol"])
        mask[i, j] = bool(int(row["active"]))
    if np.isnan(vols).any():
        raise ValueError("surface CSV does not cover the full 5x5 grid")
    return SurfaceGrid(vols=vols, mask=mask)
