"""Model parameter containers, derived quantities, and randomized samplers.

Covers three dynamics for the underlying:

- Heston: square-root stochastic variance,
- Bates: Heston plus lognormal jumps in the asset,
- multi-factor ("lifted") rough-volatility approximation: n mean-reverting
  factors with geometrically spaced speeds, weights chosen in closed form
  from a Hurst exponent H < 0.5.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Union

import numpy as np

if TYPE_CHECKING:
    from .pricing_mc import ExoticSpec

MODEL_KINDS = ("heston", "bates", "lifted")
EXOTIC_KINDS = (
    "knock_out_call",
    "knock_in_call",
    "asian_call",
    "lookback_call",
    "european_call",
)
BARRIER_KINDS = ("knock_out_call", "knock_in_call")

# Per-maturity strike (% of spot) and barrier-multiplier ranges used by the
# knock-in/knock-out consistency study.
BARRIER_TEST_RANGES: dict[float, tuple[tuple[float, float], tuple[float, float]]] = {
    0.25: ((92.5, 107.5), (1.10, 1.15)),
    0.5: ((90.0, 110.0), (1.10, 1.30)),
    1.0: ((85.0, 115.0), (1.20, 1.35)),
    2.0: ((80.0, 120.0), (1.30, 1.50)),
}


@dataclass(frozen=True)
class MarketState:
    """Spot, continuously-compounded risk-free rate, and asset yield."""

    spot: float
    rate: float = 0.0
    div_yield: float = 0.0

    def __post_init__(self):
        if not (self.spot > 0):
            raise ValueError(f"spot must be positive, got {self.spot}")
        if not (math.isfinite(self.rate) and math.isfinite(self.div_yield)):
            raise ValueError("rate and div_yield must be finite")


@dataclass(frozen=True)
class HestonParams:
    """Square-root variance: dV = a (vL - V) dt + xi sqrt(V) dW, corr(dz, dw) = rho."""

    v0: float
    a: float
    vl: float
    xi: float
    rho: float

    def __post_init__(self):
        if self.v0 < 0 or self.vl < 0:
            raise ValueError("variances v0, vl must be non-negative")
        if self.a < 0 or self.xi < 0:
            raise ValueError("a and xi must be non-negative")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")


@dataclass(frozen=True)
class BatesParams:
    """Heston plus compound-Poisson jumps: ln(1+k) ~ Normal(mu_j, sigma_j^2)."""

    heston: HestonParams
    lam: float
    mu_j: float
    sigma_j: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("jump intensity lam must be non-negative")
        if self.sigma_j < 0:
            raise ValueError("jump scale sigma_j must be non-negative")

    @property
    def mean_jump(self) -> float:
        return bates_mean_jump(self.mu_j, self.sigma_j)


def bates_mean_jump(mu_j: float, sigma_j: float) -> float:
    """Mean percentage jump when ln(1+k) ~ Normal(mu_j, sigma_j^2).

    This is the lognormal mean exp(mu + sigma^2/2) - 1; the asset drift is
    compensated by lam times this value so the discounted price stays a
    martingale.
    """
    if sigma_j < 0:
        raise ValueError("sigma_j must be non-negative")
    return math.exp(mu_j + 0.5 * sigma_j * sigma_j) - 1.0


def lifted_weights(hurst: float, n_factors: int = 20, beta: float = 2.5):
    """Closed-form factor weights c_i and reversion speeds x_i.

    With alpha = hurst + 0.5 and i = 1..n:

        c_i = (beta^(1-alpha) - 1) beta^((alpha-1)(1+n/2))
              / (Gamma(alpha) Gamma(2-alpha)) * beta^((1-alpha) i)
        x_i = ((1-alpha)/(2-alpha)) (beta^(2-alpha) - 1)/(beta^(1-alpha) - 1)
              * beta^(i-1-n/2)

    The construction is singular at hurst = 0.5 (the beta^(1-alpha) - 1
    factor vanishes), so hurst is restricted to (0, 0.5).
    """
    if not 0.0 < hurst < 0.5:
        raise ValueError(f"hurst must lie in (0, 0.5), got {hurst}")
    if n_factors < 1:
        raise ValueError("n_factors must be >= 1")
    if beta <= 1.0:
        raise ValueError("beta must exceed 1")
    alpha = hurst + 0.5
    n = n_factors
    i = np.arange(1, n + 1, dtype=float)
    front_c = (beta ** (1.0 - alpha) - 1.0) * beta ** ((alpha - 1.0) * (1.0 + n / 2.0))
    front_c /= math.gamma(alpha) * math.gamma(2.0 - alpha)
    c = front_c * beta ** ((1.0 - alpha) * i)
    front_x = (1.0 - alpha) / (2.0 - alpha)
    front_x *= (beta ** (2.0 - alpha) - 1.0) / (beta ** (1.0 - alpha) - 1.0)
    x = front_x * beta ** (i - 1.0 - n / 2.0)
    return c, x


@dataclass(frozen=True)
class LiftedHestonParams:
    """Multi-factor rough-volatility approximation.

    Reuses the Heston fields (v0, a, vl, xi, rho); weights and speeds are
    always the closed-form values for (hurst, n_factors, beta) and are
    computed at construction.
    """

    heston: HestonParams
    hurst: float
    n_factors: int = 20
    beta: float = 2.5
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    speeds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c, x = lifted_weights(self.hurst, self.n_factors, self.beta)
        c.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "weights", c)
        object.__setattr__(self, "speeds", x)

    def deterministic_variance(self, t) -> np.ndarray:
        """Variance curve when xi = 0: v0 + a*vl * sum_i (c_i/x_i)(1 - e^{-x_i t})."""
        t = np.asarray(t, dtype=float)
        h = self.heston
        decay = 1.0 - np.exp(-np.multiply.outer(t, self.speeds))
        return h.v0 + h.a * h.vl * np.einsum(
            "...f,f->...", decay, self.weights / self.speeds
        )


ModelParams = Union[HestonParams, BatesParams, LiftedHestonParams]


@dataclass(frozen=True)
class ModelDraw:
    """One sampled scenario: the market state plus model parameters."""

    market: MarketState
    params: ModelParams


Range = tuple[float, float]

# JSON keys mirror the conventional symbol names.
_JSON_KEYS = {
    "spot": "spot",
    "div_yield": "yield",
    "r": "r",
    "v0": "v0",
    "a": "a",
    "vl": "vL",
    "xi": "xi",
    "rho": "rho",
    "lam": "lambda",
    "mu_j": "muJ",
    "sigma_j": "sigmaJ",
    "hurst": "hurst",
    "maturity": "T",
    "strike": "K",
    "barrier_mult": "C",
    "snp_style": "snpStyle",
    "snp_vol_cap": "snpVolCap",
    "seed": "seed",
}


@dataclass(frozen=True)
class SamplerConfig:
    """Uniform ranges for every model and option parameter.

    ``snp_style`` switches the initial- and long-run-vol draws to the
    index-style samplers: initial vol = 0.05 + exp(u) with u ~ N(-2.5, 1.0)
    capped at ``snp_vol_cap``, and the long-run (two-year) vol uniform in a
    0.08-wide band centered on 0.12 + 0.46 * (initial vol).
    """

    spot: float = 100.0
    div_yield: float = 0.0
    r: Range = (0.01, 0.05)
    v0: Range = (0.01, 0.25)
    a: Range = (0.1, 3.0)
    vl: Range = (0.01, 0.25)
    xi: Range = (0.1, 0.8)
    rho: Range = (-0.9, 0.0)
    lam: Range = (1.0, 5.0)
    mu_j: Range = (-0.05, 0.05)
    sigma_j: Range = (0.0, 0.05)
    hurst: Range = (0.05, 0.25)
    maturity: Range = (0.05, 2.0)
    strike: Range = (80.0, 120.0)
    barrier_mult: Range = (1.05, 1.30)
    snp_style: bool = False
    snp_vol_cap: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                if len(v) != 2 or not (v[0] <= v[1]):
                    raise ValueError(f"range {f.name}={v} must satisfy low <= high")

    def to_json(self) -> str:
        doc = {}
        for f in fields(self):
            v = getattr(self, f.name)
            doc[_JSON_KEYS[f.name]] = list(v) if isinstance(v, tuple) else v
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SamplerConfig":
        doc = json.loads(text)
        inverse = {v: k for k, v in _JSON_KEYS.items()}
        kwargs = {}
        for key, val in doc.items():
            if key not in inverse:
                raise ValueError(f"unknown sampler config key {key!r}")
            kwargs[inverse[key]] = tuple(val) if isinstance(val, list) else val
        return cls(**kwargs)


def _uniform(rng: np.random.Generator, rg: Range) -> float:
    return float(rng.uniform(rg[0], rg[1]))


def _sample_variances(cfg: SamplerConfig, rng: np.random.Generator) -> tuple[float, float]:
    """(v0, vl) pair, either plain uniform or the index-style draw."""
    if not cfg.snp_style:
        return _uniform(rng, cfg.v0), _uniform(rng, cfg.vl)
    u = rng.normal(-2.5, 1.0)
    vol0 = min(0.05 + math.exp(u), cfg.snp_vol_cap)
    w = 0.12 + 0.46 * vol0
    vol_long = rng.uniform(w - 0.04, w + 0.04)
    return vol0 * vol0, vol_long * vol_long


def sample_model(cfg: SamplerConfig, kind: str, rng: np.random.Generator) -> ModelDraw:
    """Draw one market state and one set of model parameters.

    The risk-free rate is sampled alongside the model parameters (it varies
    by scenario), so the draw bundles a MarketState with the params.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    market = MarketState(spot=cfg.spot, rate=_uniform(rng, cfg.r), div_yield=cfg.div_yield)
    v0, vl = _sample_variances(cfg, rng)
    heston = HestonParams(
        v0=v0,
        a=_uniform(rng, cfg.a),
        vl=vl,
        xi=_uniform(rng, cfg.xi),
        rho=_uniform(rng, cfg.rho),
    )
    if kind == "heston":
        return ModelDraw(market, heston)
    if kind == "bates":
        params = BatesParams(
            heston=heston,
            lam=_uniform(rng, cfg.lam),
            mu_j=_uniform(rng, cfg.mu_j),
            sigma_j=_uniform(rng, cfg.sigma_j),
        )
        return ModelDraw(market, params)
    return ModelDraw(market, LiftedHestonParams(heston=heston, hurst=_uniform(rng, cfg.hurst)))


def sample_exotic(
    cfg: SamplerConfig,
    kind: str,
    rng: np.random.Generator,
    mode: str = "controlled",
) -> "ExoticSpec":
    """Draw option parameters.

    ``controlled`` mode draws maturity and strike uniformly and, for barrier
    kinds, sets B = C * max(spot, K) with C uniform. ``parity`` mode draws
    the maturity from {0.25, 0.5, 1, 2} and uses the per-maturity strike and
    barrier-multiplier ranges of BARRIER_TEST_RANGES.
    """
    from .pricing_mc import ExoticSpec

    if kind not in EXOTIC_KINDS:
        raise ValueError(f"unknown exotic kind {kind!r}")
    if mode == "controlled":
        t = _uniform(rng, cfg.maturity)
        k = _uniform(rng, cfg.strike)
        barrier = None
        if kind in BARRIER_KINDS:
            barrier = _uniform(rng, cfg.barrier_mult) * max(cfg.spot, k)
    elif mode == "parity":
        maturities = sorted(BARRIER_TEST_RANGES)
        t = maturities[rng.integers(len(maturities))]
        (k_lo, k_hi), (b_lo, b_hi) = BARRIER_TEST_RANGES[t]
        k = rng.uniform(k_lo, k_hi) / 100.0 * cfg.spot
        barrier = None
        if kind in BARRIER_KINDS:
            barrier = rng.uniform(b_lo, b_hi) * max(cfg.spot, k)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return ExoticSpec(kind=kind, strike=k, maturity=t, barrier=barrier)
