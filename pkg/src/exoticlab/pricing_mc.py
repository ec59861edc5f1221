"""Path simulation and option pricing.

Monte Carlo covers all three dynamics with full-truncation Euler for the
square-root variance (the multi-factor model uses an exact mean-reversion
factor per state variable, which keeps the fastest factor stable at normal
step counts). European calls under Heston/Bates are also priced
semi-analytically by Fourier inversion of the characteristic function,
which is what the surface construction and calibration lean on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .market_models import (
    BARRIER_KINDS,
    EXOTIC_KINDS,
    BatesParams,
    HestonParams,
    LiftedHestonParams,
    MarketState,
    ModelParams,
    bates_mean_jump,
)
from .rng import substream


class NumericError(RuntimeError):
    """A numerical routine failed to produce a usable result."""


@dataclass(frozen=True)
class ExoticSpec:
    """Payoff kind plus strike/maturity and, for barrier kinds, the barrier."""

    kind: str
    strike: float
    maturity: float
    barrier: float | None = None

    def __post_init__(self):
        if self.kind not in EXOTIC_KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if not self.strike > 0:
            raise ValueError("strike must be positive")
        if not self.maturity > 0:
            raise ValueError("maturity must be positive")
        if self.kind in BARRIER_KINDS:
            if self.barrier is None:
                raise ValueError(f"{self.kind} requires a barrier")
            if self.barrier <= self.strike:
                raise ValueError("barrier must exceed the strike")
        elif self.barrier is not None:
            raise ValueError(f"{self.kind} takes no barrier")

    def validate_against_spot(self, spot: float) -> None:
        if self.kind in BARRIER_KINDS and self.barrier is not None and self.barrier <= spot:
            raise ValueError("barrier must exceed the initial asset price")


@dataclass(frozen=True)
class McConfig:
    num_paths: int = 50_000
    steps_per_year: int = 250
    seed: int = 0
    antithetic: bool = False
    common_paths: bool = True

    def __post_init__(self):
        if self.num_paths < 2:
            raise ValueError("num_paths must be >= 2")
        if self.steps_per_year < 12:
            raise ValueError("steps_per_year must be >= 12")
        if self.antithetic and self.num_paths % 2:
            raise ValueError("antithetic pricing needs an even num_paths")


@dataclass(frozen=True)
class PriceEstimate:
    price: float
    std_error: float


@dataclass(frozen=True)
class PathSet:
    """Simulated asset and variance paths on a uniform grid over [0, T]."""

    times: np.ndarray          # (steps + 1,)
    spots: np.ndarray          # (num_paths, steps + 1)
    variances: np.ndarray      # (num_paths, steps + 1)
    antithetic: bool = False

    @property
    def maturity(self) -> float:
        return float(self.times[-1])


MIN_TOTAL_STEPS = 50


def _num_steps(T: float, steps_per_year: int) -> int:
    return max(int(math.ceil(T * steps_per_year)), MIN_TOTAL_STEPS)


def _gaussian_pair(rng: np.random.Generator, n: int, antithetic: bool):
    """Two shock vectors of length n; with antithetic on, halves are mirrored."""
    if antithetic:
        half = rng.standard_normal((2, n // 2))
        return np.concatenate([half[0], -half[0]]), np.concatenate([half[1], -half[1]])
    z = rng.standard_normal((2, n))
    return z[0], z[1]


def simulate_paths(
    model: ModelParams,
    market: MarketState,
    T: float,
    cfg: McConfig,
    rng: np.random.Generator | None = None,
) -> PathSet:
    """Simulate num_paths asset paths to maturity T.

    Heston/Bates: full-truncation Euler, V+ = max(V, 0) in both the variance
    drift and every diffusion term. Bates adds Poisson-count jumps per step,
    with the asset drift compensated by -lam * mean_jump. The multi-factor
    model evolves each factor with its exact e^{-x_i dt} reversion and
    reconstructs the variance curve from the factor states.
    """
    if T <= 0:
        raise ValueError("maturity must be positive")
    if rng is None:
        rng = substream(cfg.seed, "paths")
    steps = _num_steps(T, cfg.steps_per_year)
    dt = T / steps
    sqdt = math.sqrt(dt)
    n = cfg.num_paths
    times = np.linspace(0.0, T, steps + 1)

    if isinstance(model, LiftedHestonParams):
        return _simulate_lifted(model, market, times, dt, sqdt, n, cfg, rng)

    if isinstance(model, BatesParams):
        heston, lam, mu_j, sigma_j = model.heston, model.lam, model.mu_j, model.sigma_j
        comp = lam * bates_mean_jump(mu_j, sigma_j)
        # jumps draw from a spawned child stream so the Brownian draws stay
        # aligned with a jump-free model on the same seed (common random
        # numbers across model families)
        jump_rng = rng.spawn(1)[0] if lam > 0.0 else None
    elif isinstance(model, HestonParams):
        heston, lam, mu_j, sigma_j = model, 0.0, 0.0, 0.0
        comp = 0.0
        jump_rng = None
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    a, vl, xi, rho = heston.a, heston.vl, heston.xi, heston.rho
    rho_c = math.sqrt(1.0 - rho * rho)
    drift = (market.rate - market.div_yield - comp) * dt

    log_s = np.full(n, math.log(market.spot))
    v = np.full(n, heston.v0)
    spots = np.empty((n, steps + 1))
    variances = np.empty((n, steps + 1))
    spots[:, 0] = market.spot
    variances[:, 0] = heston.v0

    half = n // 2
    for k in range(steps):
        zv, zp = _gaussian_pair(rng, n, cfg.antithetic)
        zs = rho * zv + rho_c * zp
        v_pos = np.maximum(v, 0.0)
        vol = np.sqrt(v_pos)
        log_s += drift - 0.5 * v_pos * dt + vol * sqdt * zs
        if jump_rng is not None:
            if cfg.antithetic:
                counts = np.tile(jump_rng.poisson(lam * dt, half), 2)
                zj_half = jump_rng.standard_normal(half)
                zj = np.concatenate([zj_half, -zj_half])
            else:
                counts = jump_rng.poisson(lam * dt, n)
                zj = jump_rng.standard_normal(n)
            jumped = counts > 0
            if np.any(jumped):
                log_s[jumped] += (
                    mu_j * counts[jumped]
                    + sigma_j * np.sqrt(counts[jumped]) * zj[jumped]
                )
        v = v + a * (vl - v_pos) * dt + xi * vol * sqdt * zv
        spots[:, k + 1] = np.exp(log_s)
        variances[:, k + 1] = v
    return PathSet(times=times, spots=spots, variances=variances, antithetic=cfg.antithetic)


def _simulate_lifted(
    model: LiftedHestonParams,
    market: MarketState,
    times: np.ndarray,
    dt: float,
    sqdt: float,
    n: int,
    cfg: McConfig,
    rng: np.random.Generator,
) -> PathSet:
    heston = model.heston
    xi, rho = heston.xi, heston.rho
    rho_c = math.sqrt(1.0 - rho * rho)
    c, x = model.weights, model.speeds
    decay = np.exp(-x * dt)                       # (n_factors,)
    det_curve = model.deterministic_variance(times)  # (steps + 1,)
    drift = (market.rate - market.div_yield) * dt
    steps = len(times) - 1

    log_s = np.full(n, math.log(market.spot))
    u = np.zeros((len(c), n))
    spots = np.empty((n, steps + 1))
    variances = np.empty((n, steps + 1))
    spots[:, 0] = market.spot
    v = np.full(n, det_curve[0])
    variances[:, 0] = v

    for k in range(steps):
        zv, zp = _gaussian_pair(rng, n, cfg.antithetic)
        zs = rho * zv + rho_c * zp
        v_pos = np.maximum(v, 0.0)
        vol = np.sqrt(v_pos)
        log_s += drift - 0.5 * v_pos * dt + vol * sqdt * zs
        u = u * decay[:, None] + (xi * sqdt) * vol * zv
        v = det_curve[k + 1] + np.einsum("f,fp->p", c, u)
        spots[:, k + 1] = np.exp(log_s)
        variances[:, k + 1] = v
    return PathSet(times=times, spots=spots, variances=variances, antithetic=cfg.antithetic)


def payoff(paths: PathSet, spec: ExoticSpec) -> np.ndarray:
    """Undiscounted per-path payoff, monitored at every grid point."""
    s = paths.spots
    terminal = s[:, -1]
    vanilla = np.maximum(terminal - spec.strike, 0.0)
    if spec.kind == "european_call":
        return vanilla
    if spec.kind == "knock_out_call":
        return np.where(s.max(axis=1) < spec.barrier, vanilla, 0.0)
    if spec.kind == "knock_in_call":
        return np.where(s.max(axis=1) >= spec.barrier, vanilla, 0.0)
    if spec.kind == "asian_call":
        return np.maximum(s.mean(axis=1) - spec.strike, 0.0)
    if spec.kind == "lookback_call":
        return np.maximum(s.max(axis=1) - spec.strike, 0.0)
    raise ValueError(f"unknown payoff kind {spec.kind!r}")


def _estimate(payoffs: np.ndarray, discount: float, antithetic: bool) -> PriceEstimate:
    if antithetic:
        half = payoffs.shape[0] // 2
        payoffs = 0.5 * (payoffs[:half] + payoffs[half:])
    n = payoffs.shape[0]
    price = discount * float(np.mean(payoffs))
    se = discount * float(np.std(payoffs, ddof=1)) / math.sqrt(n)
    return PriceEstimate(price=price, std_error=se)


def mc_price(
    model: ModelParams,
    market: MarketState,
    spec: ExoticSpec,
    cfg: McConfig,
    paths: PathSet | None = None,
) -> PriceEstimate:
    """Discounted Monte Carlo price with its standard error.

    A pre-simulated PathSet with matching maturity may be passed to price
    several payoffs on common paths.
    """
    if paths is None:
        paths = simulate_paths(model, market, spec.maturity, cfg)
    elif not math.isclose(paths.maturity, spec.maturity, rel_tol=1e-12):
        raise ValueError("path set maturity does not match the spec")
    discount = math.exp(-market.rate * spec.maturity)
    return _estimate(payoff(paths, spec), discount, paths.antithetic)


def mc_price_many(
    model: ModelParams,
    market: MarketState,
    specs: Sequence[ExoticSpec],
    cfg: McConfig,
) -> list[PriceEstimate]:
    """Price a batch of specs, sharing one path set per distinct maturity.

    Sharing keeps knock-out/knock-in/vanilla triples exactly consistent and
    removes cross-strike Monte Carlo noise within a maturity. With
    cfg.common_paths off, every spec gets its own stream.
    """
    out: list[PriceEstimate | None] = [None] * len(specs)
    if not cfg.common_paths:
        for i, spec in enumerate(specs):
            rng = substream(cfg.seed, "paths", i)
            paths = simulate_paths(model, market, spec.maturity, cfg, rng=rng)
            out[i] = mc_price(model, market, spec, cfg, paths=paths)
        return out  # type: ignore[return-value]
    groups: dict[float, list[int]] = {}
    for i, spec in enumerate(specs):
        groups.setdefault(spec.maturity, []).append(i)
    for g, T in enumerate(sorted(groups)):
        rng = substream(cfg.seed, "paths", g)
        paths = simulate_paths(model, market, T, cfg, rng=rng)
        for i in groups[T]:
            out[i] = mc_price(model, market, specs[i], cfg, paths=paths)
    return out  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Semi-analytic European pricing (Heston / Bates characteristic functions)
# ---------------------------------------------------------------------------

_GL_NODES = 512
_XI_DETERMINISTIC = 1e-6

_gl_u, _gl_w = np.polynomial.legendre.leggauss(_GL_NODES)


def _quad_nodes(u_max: float) -> tuple[np.ndarray, np.ndarray]:
    u = 0.5 * u_max * (_gl_u + 1.0)
    w = 0.5 * u_max * _gl_w
    return u, w


def _heston_log_cf(u: np.ndarray, p: HestonParams, T: float) -> np.ndarray:
    """log E[exp(iu ln(S_T/S_0))] with zero drift, little-trap branch."""
    a, vl, xi, rho, v0 = p.a, p.vl, p.xi, p.rho, p.v0
    iu = 1j * u
    b = a - rho * xi * iu
    d = np.sqrt(b * b + xi * xi * (iu + u * u))
    g = (b - d) / (b + d)
    e = np.exp(-d * T)
    log_ratio = np.log((1.0 - g * e) / (1.0 - g))
    c_term = (a * vl / (xi * xi)) * ((b - d) * T - 2.0 * log_ratio)
    d_term = ((b - d) / (xi * xi)) * (1.0 - e) / (1.0 - g * e)
    return c_term + d_term * v0


def _bates_log_cf(u: np.ndarray, p: BatesParams, T: float) -> np.ndarray:
    iu = 1j * u
    base = _heston_log_cf(u, p.heston, T)
    jump_cf = np.exp(iu * p.mu_j - 0.5 * p.sigma_j * p.sigma_j * u * u)
    return base + p.lam * T * (jump_cf - 1.0) - iu * p.lam * p.mean_jump * T


def _log_cf(u: np.ndarray, model: ModelParams, T: float) -> np.ndarray:
    if isinstance(model, BatesParams):
        return _bates_log_cf(u, model, T)
    if isinstance(model, HestonParams):
        return _heston_log_cf(u, model, T)
    raise TypeError("characteristic function available for Heston and Bates only")


def _mean_variance(h: HestonParams, T: float) -> float:
    """Time average of the xi -> 0 variance curve vl + (v0 - vl) e^{-a t}."""
    if h.a * T < 1e-12:
        return h.v0
    return h.vl + (h.v0 - h.vl) * (1.0 - math.exp(-h.a * T)) / (h.a * T)


def _deterministic_limit_price(model, market: MarketState, strike: float, T: float) -> float:
    from .bs_surface import bs_call

    if isinstance(model, HestonParams):
        sigma = math.sqrt(_mean_variance(model, T))
        return bs_call(market.spot, strike, market.rate, market.div_yield, T, sigma)
    # Bates with (nearly) deterministic diffusion variance: lognormal-jump series
    h, lam, mu_j, sigma_j = model.heston, model.lam, model.mu_j, model.sigma_j
    var = _mean_variance(h, T)
    kbar = bates_mean_jump(mu_j, sigma_j)
    lam_p = lam * (1.0 + kbar)
    gamma = mu_j + 0.5 * sigma_j * sigma_j  # ln(1 + kbar)
    total = 0.0
    weight_sum = 0.0
    n = 0
    while weight_sum < 1.0 - 1e-14 and n < 200:
        log_w = -lam_p * T + n * math.log(lam_p * T) - math.lgamma(n + 1) if lam_p > 0 else (0.0 if n == 0 else -math.inf)
        w = math.exp(log_w)
        sigma_n = math.sqrt(var + n * sigma_j * sigma_j / T)
        r_n = market.rate - lam * kbar + n * gamma / T
        total += w * bs_call(market.spot, strike, r_n, market.div_yield, T, sigma_n)
        weight_sum += w
        n += 1
    return total


def cf_european_price(
    model: ModelParams,
    market: MarketState,
    strike: float,
    T: float,
) -> float:
    """European call price by Fourier inversion (Heston or Bates).

    Uses fixed Gauss-Legendre quadrature of the two inversion integrals.
    Very small vol-of-vol values are delegated to the deterministic-variance
    limit (plain Black-Scholes, or a jump series for Bates), where the
    characteristic function suffers catastrophic cancellation.
    """
    return float(cf_european_prices(model, market, np.asarray([strike]), T)[0])


def cf_european_prices(
    model: ModelParams,
    market: MarketState,
    strikes: np.ndarray,
    T: float,
) -> np.ndarray:
    """Vectorized cf_european_price over strikes at one maturity."""
    if isinstance(model, LiftedHestonParams):
        raise TypeError("characteristic function available for Heston and Bates only")
    strikes = np.asarray(strikes, dtype=float)
    if T <= 0 or np.any(strikes <= 0):
        raise ValueError("strike and maturity must be positive")
    h = model.heston if isinstance(model, BatesParams) else model
    if h.xi < _XI_DETERMINISTIC:
        return np.array(
            [_deterministic_limit_price(model, market, k, T) for k in strikes]
        )

    spot, r, q = market.spot, market.rate, market.div_yield
    fwd = spot * math.exp((r - q) * T)
    # widen the integration range when the total variance is small
    var_scale = max(min(h.v0, h.vl) * T, 1e-4)
    u_max = max(200.0, 9.0 / math.sqrt(var_scale))
    u, w = _quad_nodes(u_max)

    log_cf_u = _log_cf(u, model, T)
    # the u = -i value is the martingale normalizer log E[S_T]/F = 0 exactly
    log_cf_ui = _log_cf(u - 1j, model, T)

    iu = 1j * u
    k_rel = np.log(strikes / fwd)  # cf carries no drift, so shift by the forward
    phase = np.exp(-1j * np.outer(k_rel, u))
    integrand_p2 = np.exp(log_cf_u) / iu
    integrand_p1 = np.exp(log_cf_ui) / iu
    # explicit reductions keep results bit-identical across BLAS thread counts
    p2 = 0.5 + (phase * (w * integrand_p2)).sum(axis=1).real / math.pi
    p1 = 0.5 + (phase * (w * integrand_p1)).sum(axis=1).real / math.pi

    prices = spot * math.exp(-q * T) * p1 - strikes * math.exp(-r * T) * p2
    if not np.all(np.isfinite(prices)):
        raise NumericError("characteristic-function quadrature did not converge")
    lower = np.maximum(spot * math.exp(-q * T) - strikes * math.exp(-r * T), 0.0)
    upper = spot * math.exp(-q * T)
    return np.clip(prices, lower, upper)
