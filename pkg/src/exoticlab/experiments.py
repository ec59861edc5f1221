"""The four comparison studies.

- controlled: a Bates world priced with a calibrated Heston (the
  calibration route) versus a Heston-trained surrogate reading the true
  surface (the surrogate route); the error gap is regressed on the
  calibration error.
- parity: knock-out plus knock-in must reprice the vanilla; both routes are
  scored on synthetic index-style days.
- model risk: the same exotics priced through surrogates trained under two
  different dynamics; the price differences quantify model risk.
- sensitivity: dispersion of the surrogate's input gradients over a surface
  panel, one standard deviation per grid point.

Desk-scale defaults keep runtimes in minutes; the reference publication
scale is available as PAPER_SCALE constants.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import pricing_mc as pm
from .bs_surface import (
    MASK_FULL,
    MASK_SNP19,
    MATURITIES,
    MONEYNESS,
    SurfaceGrid,
    SurfaceInvalidError,
    bs_call,
    interpolate,
    model_surface,
)
from .dataset import FeatureLayout, features_from_surface, generate_training_set
from .market_models import BARRIER_KINDS, MarketState, SamplerConfig, sample_exotic, sample_model
from .mca_calibration import CalibrationBudget, calibrate
from .neural_net import Mlp, Normalizer, TrainConfig, predict, sensitivity, train
from .rng import substream

PAPER_SCALE = {
    "n_scenarios": 1_000,
    "n_training_rows": 20_000,
    "num_paths": 50_000,
    "parity_training_rows": 400_000,
    "sensitivity_panel": 200,
}


@dataclass(frozen=True)
class ExperimentRecord:
    """One scenario of the controlled experiment; prices in percent of spot."""

    scenario: int
    true_params: object  # the world-model draw behind the scenario
    spec: pm.ExoticSpec
    rate: float
    calibration_error: float
    true_price: float
    true_price_se: float
    mca_price: float
    vfa_price: float

    @property
    def mca_error(self) -> float:
        return abs(self.mca_price - self.true_price)

    @property
    def vfa_error(self) -> float:
        return abs(self.vfa_price - self.true_price)

    @property
    def y(self) -> float:
        return self.mca_error - self.vfa_error


@dataclass(frozen=True)
class OlsFit:
    intercept: float
    slope: float
    t_intercept: float
    t_slope: float
    n: int

    def as_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "slope": self.slope,
            "t_intercept": self.t_intercept,
            "t_slope": self.t_slope,
            "n": self.n,
        }


def ols(y: np.ndarray, x: np.ndarray) -> OlsFit:
    """Ordinary least squares of y on [1, x]; t = coefficient / std error.

    A zero-residual (exact) fit reports infinite t-statistics.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(y)
    if n < 3 or len(x) != n:
        raise ValueError("need n >= 3 matched observations")
    if np.ptp(x) == 0.0:
        raise ValueError("regressor is constant")
    design = np.column_stack([np.ones(n), x])
    xtx_inv = np.linalg.inv(design.T @ design)
    beta = xtx_inv @ (design.T @ y)
    resid = y - design @ beta
    s2 = float(resid @ resid) / (n - 2)
    # an exact fit leaves only float roundoff in the residuals
    exact = math.sqrt(max(s2, 0.0)) < 1e-10 * max(1.0, float(np.abs(y).max()))
    if exact or not math.isfinite(s2):
        se = np.zeros(2)
    else:
        se = np.sqrt(s2 * np.diag(xtx_inv))
    with np.errstate(divide="ignore"):
        t = np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.inf * np.sign(beta))
    return OlsFit(intercept=float(beta[0]), slope=float(beta[1]),
                  t_intercept=float(t[0]), t_slope=float(t[1]), n=n)


# ---------------------------------------------------------------------------
# Controlled experiment (error-gap regression)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlledConfig:
    exotic_kind: str
    n_scenarios: int = 50
    n_training_rows: int = 4_000
    mc: pm.McConfig = field(default_factory=lambda: pm.McConfig(
        num_paths=10_000, steps_per_year=120, antithetic=True))
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    budget: CalibrationBudget = field(default_factory=CalibrationBudget)
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0

    def __post_init__(self):
        if self.n_scenarios < 10:
            raise ValueError("need at least 10 scenarios")
        if self.n_training_rows < 500:
            raise ValueError("need at least 500 training rows")


@dataclass(frozen=True)
class ControlledResult:
    records: list[ExperimentRecord]
    fit_pct: OlsFit
    fit_index_units: OlsFit
    excluded_surface: int
    excluded_calibration: int
    surrogate_val_mae: float

    def summary(self) -> dict:
        mca = [r.mca_error for r in self.records]
        vfa = [r.vfa_error for r in self.records]
        return {
            "n_used": len(self.records),
            "excluded_surface": self.excluded_surface,
            "excluded_calibration": self.excluded_calibration,
            "ols_pct_of_spot": self.fit_pct.as_dict(),
            "ols_index_units": self.fit_index_units.as_dict(),
            "mean_mca_error": float(np.mean(mca)),
            "mean_vfa_error": float(np.mean(vfa)),
            "surrogate_val_mae": self.surrogate_val_mae,
        }


def controlled_experiment(cfg: ControlledConfig) -> ControlledResult:
    """Run the full scenario study for one exotic kind.

    The world model is Bates; the pricing model is Heston. Scenarios whose
    true surface cannot be built or whose calibration fails to converge are
    excluded and counted.
    """
    spot = cfg.sampler.spot
    layout = FeatureLayout.build(cfg.exotic_kind, MASK_FULL)

    # surrogate trained once on pricing-model (Heston) draws
    training = generate_training_set(
        "heston", cfg.exotic_kind, cfg.n_training_rows, cfg.sampler,
        replace(cfg.mc, seed=cfg.master_seed),
        mask=MASK_FULL, seed=int(substream(cfg.master_seed, "train-set").integers(2**31)),
    )
    fitted = train(training.features, training.targets,
                   replace(cfg.train, seed=cfg.master_seed))

    scenario_rng = substream(cfg.master_seed, "scenarios")
    records: list[ExperimentRecord] = []
    excluded_surface = 0
    excluded_calibration = 0
    for i in range(cfg.n_scenarios):
        draw = sample_model(cfg.sampler, "bates", scenario_rng)
        spec = sample_exotic(cfg.sampler, cfg.exotic_kind, scenario_rng)
        try:
            true_surface = model_surface(draw.params, draw.market, MASK_FULL)
        except SurfaceInvalidError:
            excluded_surface += 1
            continue
        budget = replace(cfg.budget, seed=int(substream(cfg.master_seed, "calib", i).integers(2**31)))
        result = calibrate(true_surface, draw.market, budget)
        if not result.converged:
            excluded_calibration += 1
            continue

        # common random numbers: both models consume identical Brownian
        # draws (jumps sit on a spawned child stream), so the price gap
        # reflects the model difference rather than independent MC noise
        paths_true = pm.simulate_paths(draw.params, draw.market, spec.maturity, cfg.mc,
                                       rng=substream(cfg.master_seed, "mc", i))
        est_true = pm.mc_price(draw.params, draw.market, spec, cfg.mc, paths=paths_true)
        paths_mca = pm.simulate_paths(result.params, draw.market, spec.maturity, cfg.mc,
                                      rng=substream(cfg.master_seed, "mc", i))
        est_mca = pm.mc_price(result.params, draw.market, spec, cfg.mc, paths=paths_mca)
        feats = features_from_surface(layout, true_surface, spec, spot, draw.market.rate)
        vfa_price = float(predict(fitted.net, fitted.normalizer, feats))

        records.append(ExperimentRecord(
            scenario=i,
            true_params=draw.params,
            spec=spec,
            rate=draw.market.rate,
            calibration_error=result.error,
            true_price=est_true.price / spot * 100.0,
            true_price_se=est_true.std_error / spot * 100.0,
            mca_price=est_mca.price / spot * 100.0,
            vfa_price=vfa_price,
        ))

    y = np.array([r.y for r in records])
    x = np.array([r.calibration_error for r in records])
    fit_pct = ols(y, x)
    fit_idx = ols(y * spot / 100.0, x)
    return ControlledResult(
        records=records,
        fit_pct=fit_pct,
        fit_index_units=fit_idx,
        excluded_surface=excluded_surface,
        excluded_calibration=excluded_calibration,
        surrogate_val_mae=fitted.best_val_mae,
    )


def records_to_csv(records: list[ExperimentRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "scenario", "kind", "strike", "maturity", "barrier", "rate",
        "calibration_error", "true_price", "true_price_se",
        "mca_price", "vfa_price", "mca_error", "vfa_error", "y",
    ])
    for r in records:
        writer.writerow([
            r.scenario, r.spec.kind, f"{r.spec.strike:.12g}", f"{r.spec.maturity:.12g}",
            "" if r.spec.barrier is None else f"{r.spec.barrier:.12g}",
            f"{r.rate:.12g}", f"{r.calibration_error:.12g}",
            f"{r.true_price:.12g}", f"{r.true_price_se:.12g}",
            f"{r.mca_price:.12g}", f"{r.vfa_price:.12g}",
            f"{r.mca_error:.12g}", f"{r.vfa_error:.12g}", f"{r.y:.12g}",
        ])
    return buf.getvalue()


def scatter_data(records: list[ExperimentRecord]) -> str:
    """Plot-ready (X, Y) pairs, one per line."""
    lines = ["# calibration_error_X error_gap_Y_pct_of_spot"]
    lines += [f"{r.calibration_error:.12g} {r.y:.12g}" for r in records]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Pseudo-historical days and the parity study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketDay:
    """One day's fitted surface plus its market state."""

    day_id: str
    surface: SurfaceGrid
    market: MarketState


def make_pseudo_days(n_days: int, sampler: SamplerConfig, master_seed: int) -> list[MarketDay]:
    """Synthetic index-style days: Bates draws with index-style sampling."""
    cfg = replace(sampler, snp_style=True)
    rng = substream(master_seed, "pseudo-days")
    days: list[MarketDay] = []
    attempt = 0
    while len(days) < n_days:
        attempt += 1
        if attempt > 20 * n_days:
            raise RuntimeError("pseudo-day generation keeps failing; widen vol ranges")
        draw = sample_model(cfg, "bates", rng)
        try:
            surface = model_surface(draw.params, draw.market, MASK_SNP19)
        except SurfaceInvalidError:
            continue
        days.append(MarketDay(day_id=f"day-{len(days):04d}", surface=surface, market=draw.market))
    return days


DAYS_CSV_COLUMNS = ("date", "maturity", "moneyness", "vol", "active", "spot", "rate")


def days_to_csv(days: list[MarketDay]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DAYS_CSV_COLUMNS)
    for day in days:
        for i, T in enumerate(MATURITIES):
            for j, m in enumerate(MONEYNESS):
                writer.writerow([
                    day.day_id, f"{T:.12g}", f"{m:.12g}",
                    f"{day.surface.vols[i, j]:.12g}", int(day.surface.mask[i, j]),
                    f"{day.market.spot:.12g}", f"{day.market.rate:.12g}",
                ])
    return buf.getvalue()


def days_from_csv(text: str) -> list[MarketDay]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != DAYS_CSV_COLUMNS:
        raise ValueError(f"day panel CSV must have header {','.join(DAYS_CSV_COLUMNS)}")
    mats = np.asarray(MATURITIES)
    mons = np.asarray(MONEYNESS)
    grids: dict[str, dict] = {}
    for row in reader:
        d = grids.setdefault(row["date"], {
            "vols": np.full((5, 5), np.nan), "mask": np.zeros((5, 5), dtype=bool),
            "spot": float(row["spot"]), "rate": float(row["rate"]),
        })
        i = int(np.argmin(np.abs(mats - float(row["maturity"]))))
        j = int(np.argmin(np.abs(mons - float(row["moneyness"]))))
        d["vols"][i, j] = float(row["vol"])
        d["mask"][i, j] = bool(int(row["active"]))
    days = []
    for day_id in sorted(grids):
        d = grids[day_id]
        if np.isnan(d["vols"]).any():
            raise ValueError(f"day {day_id} does not cover the 5x5 grid")
        days.append(MarketDay(
            day_id=day_id,
            surface=SurfaceGrid(vols=d["vols"], mask=d["mask"]),
            market=MarketState(spot=d["spot"], rate=d["rate"]),
        ))
    return days


@dataclass(frozen=True)
class ParityConfig:
    n_training_rows: int = 30_000
    mc: pm.McConfig = field(default_factory=lambda: pm.McConfig(
        num_paths=5_000, steps_per_year=120, antithetic=True))
    pricing_mc: pm.McConfig = field(default_factory=lambda: pm.McConfig(
        num_paths=50_000, steps_per_year=120, antithetic=True))
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(snp_style=True))
    budget: CalibrationBudget = field(default_factory=CalibrationBudget)
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0


@dataclass(frozen=True)
class ParityNets:
    ko_net: Mlp
    ko_normalizer: Normalizer
    ko_val_mae: float
    ki_net: Mlp
    ki_normalizer: Normalizer
    ki_val_mae: float
    layout: FeatureLayout


def train_parity_nets(cfg: ParityConfig) -> ParityNets:
    """Knock-out and knock-in surrogates on index-style Heston draws.

    Both label columns come from the same draws and common paths, so each
    training row satisfies knock-out + knock-in = vanilla exactly.
    """
    from .dataset import generate_barrier_pair_training

    ts_ko, ts_ki = generate_barrier_pair_training(
        cfg.n_training_rows, cfg.sampler, replace(cfg.mc, seed=cfg.master_seed),
        mask=MASK_SNP19, exotic_mode="parity",
        seed=int(substream(cfg.master_seed, "parity-pair").integers(2**31)),
    )
    fit_ko = train(ts_ko.features, ts_ko.targets, replace(cfg.train, seed=cfg.master_seed))
    fit_ki = train(ts_ki.features, ts_ki.targets, replace(cfg.train, seed=cfg.master_seed + 1))
    return ParityNets(
        ko_net=fit_ko.net, ko_normalizer=fit_ko.normalizer,
        ko_val_mae=fit_ko.best_val_mae,
        ki_net=fit_ki.net, ki_normalizer=fit_ki.normalizer,
        ki_val_mae=fit_ki.best_val_mae,
        layout=FeatureLayout.build("knock_out_call", MASK_SNP19),
    )


@dataclass(frozen=True)
class ParityResult:
    maturities: list[float]
    mca_mae: dict[float, float]
    vfa_mae: dict[float, float]
    counts: dict[float, int]
    mca_mae_full: float
    vfa_mae_full: float
    excluded_days: int
    day_records: list[dict]

    def summary(self) -> dict:
        return {
            "buckets": {
                f"{t:g}": {
                    "mca_mae": self.mca_mae[t],
                    "vfa_mae": self.vfa_mae[t],
                    "n": self.counts[t],
                }
                for t in self.maturities
            },
            "full_sample": {
                "mca_mae": self.mca_mae_full,
                "vfa_mae": self.vfa_mae_full,
                "n": sum(self.counts.values()),
            },
            "excluded_days": self.excluded_days,
        }


def parity_experiment(days: list[MarketDay], nets: ParityNets, cfg: ParityConfig) -> ParityResult:
    """Knock-out + knock-in vs vanilla consistency, day by day.

    The vanilla is repriced from the day's surface by interpolation; the
    calibration route Monte-Carlos both barrier options on common paths
    under the day's fitted Heston; the surrogate route reads both networks.
    Gaps are percent of spot; days whose calibration fails are excluded.
    """
    records: list[dict] = []
    excluded = 0
    for idx, day in enumerate(days):
        spot, rate = day.market.spot, day.market.rate
        rng = substream(cfg.master_seed, "parity-day", idx)
        ko = sample_exotic(cfg.sampler, "knock_out_call", rng, mode="parity")
        ki = pm.ExoticSpec("knock_in_call", strike=ko.strike, maturity=ko.maturity,
                           barrier=ko.barrier)
        sigma = interpolate(day.surface, ko.strike, ko.maturity, spot)
        vanilla = bs_call(spot, ko.strike, rate, day.market.div_yield, ko.maturity, sigma)

        budget = replace(cfg.budget, seed=int(substream(cfg.master_seed, "parity-calib", idx).integers(2**31)))
        fit = calibrate(day.surface, day.market, budget)
        if not fit.converged:
            excluded += 1
            continue
        mc_cfg = replace(cfg.pricing_mc, seed=int(substream(cfg.master_seed, "parity-mc", idx).integers(2**31)))
        est_ko, est_ki = pm.mc_price_many(fit.params, day.market, [ko, ki], mc_cfg)

        f_ko = features_from_surface(nets.layout, day.surface, ko, spot, rate)
        f_ki = features_from_surface(nets.layout, day.surface, ki, spot, rate)
        vfa_ko = float(predict(nets.ko_net, nets.ko_normalizer, f_ko))
        vfa_ki = float(predict(nets.ki_net, nets.ki_normalizer, f_ki))

        vanilla_pct = vanilla / spot * 100.0
        records.append({
            "day": day.day_id,
            "maturity": ko.maturity,
            "strike": ko.strike,
            "barrier": ko.barrier,
            "calibration_error": fit.error,
            "vanilla_pct": vanilla_pct,
            "mca_gap": (est_ko.price + est_ki.price) / spot * 100.0 - vanilla_pct,
            "vfa_gap": vfa_ko + vfa_ki - vanilla_pct,
        })

    maturities = sorted({r["maturity"] for r in records})
    mca_mae, vfa_mae, counts = {}, {}, {}
    for t in maturities:
        bucket = [r for r in records if r["maturity"] == t]
        mca_mae[t] = float(np.mean([abs(r["mca_gap"]) for r in bucket]))
        vfa_mae[t] = float(np.mean([abs(r["vfa_gap"]) for r in bucket]))
        counts[t] = len(bucket)
    return ParityResult(
        maturities=maturities,
        mca_mae=mca_mae,
        vfa_mae=vfa_mae,
        counts=counts,
        mca_mae_full=float(np.mean([abs(r["mca_gap"]) for r in records])),
        vfa_mae_full=float(np.mean([abs(r["vfa_gap"]) for r in records])),
        excluded_days=excluded,
        day_records=records,
    )


# ---------------------------------------------------------------------------
# Model-risk comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelRiskConfig:
    exotic_kind: str
    n_training_rows: int = 2_000
    panel_per_day: int = 5
    mc: pm.McConfig = field(default_factory=lambda: pm.McConfig(
        num_paths=10_000, steps_per_year=100, antithetic=True))
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(snp_style=True))
    budget: CalibrationBudget = field(default_factory=CalibrationBudget)
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0


@dataclass(frozen=True)
class ModelRiskResult:
    exotic_kind: str
    mean_price_lifted: float
    mean_price_bates: float
    mean_diff: float
    std_diff: float
    diff_on_x_slope_t: float
    n_options: int

    def summary(self) -> dict:
        return {
            "exotic": self.exotic_kind,
            "mean_rough_price": self.mean_price_lifted,
            "mean_bates_price": self.mean_price_bates,
            "mean_price_diff": self.mean_diff,
            "std_price_diff": self.std_diff,
            "abs_diff_on_calibration_error_t": self.diff_on_x_slope_t,
            "n_options": self.n_options,
        }


def model_risk_experiment(days: list[MarketDay], cfg: ModelRiskConfig) -> ModelRiskResult:
    """Price the same panel through surrogates of two model families.

    Surrogates are trained under Bates and under the rough-volatility
    approximation; both then price the day panels off the days' surfaces.
    The |difference| is also regressed on the day's Heston calibration
    error.
    """
    layout = FeatureLayout.build(cfg.exotic_kind, MASK_SNP19)
    nets = {}
    for model_kind in ("bates", "lifted"):
        ts = generate_training_set(
            model_kind, cfg.exotic_kind, cfg.n_training_rows, cfg.sampler,
            replace(cfg.mc, seed=cfg.master_seed),
            mask=MASK_SNP19, exotic_mode="controlled",
            seed=int(substream(cfg.master_seed, f"risk-{model_kind}").integers(2**31)),
        )
        nets[model_kind] = train(ts.features, ts.targets, replace(cfg.train, seed=cfg.master_seed))

    prices_l, prices_b, day_x, diffs = [], [], [], []
    for idx, day in enumerate(days):
        budget = replace(cfg.budget, seed=int(substream(cfg.master_seed, "risk-calib", idx).integers(2**31)))
        fit = calibrate(day.surface, day.market, budget)
        rng = substream(cfg.master_seed, "risk-panel", idx)
        for _ in range(cfg.panel_per_day):
            spec = sample_exotic(cfg.sampler, cfg.exotic_kind, rng)
            feats = features_from_surface(layout, day.surface, spec,
                                          day.market.spot, day.market.rate)
            pl = float(predict(nets["lifted"].net, nets["lifted"].normalizer, feats))
            pb = float(predict(nets["bates"].net, nets["bates"].normalizer, feats))
            prices_l.append(pl)
            prices_b.append(pb)
            diffs.append(pl - pb)
            day_x.append(fit.error)

    diffs = np.asarray(diffs)
    fit_t = ols(np.abs(diffs), np.asarray(day_x)).t_slope if np.ptp(day_x) > 0 else math.nan
    return ModelRiskResult(
        exotic_kind=cfg.exotic_kind,
        mean_price_lifted=float(np.mean(prices_l)),
        mean_price_bates=float(np.mean(prices_b)),
        mean_diff=float(np.mean(diffs)),
        std_diff=float(np.std(diffs, ddof=1)),
        diff_on_x_slope_t=float(fit_t),
        n_options=len(diffs),
    )


# ---------------------------------------------------------------------------
# Sensitivity table
# ---------------------------------------------------------------------------


def sensitivity_table(
    net: Mlp,
    normalizer: Normalizer,
    layout: FeatureLayout,
    feature_panel: np.ndarray,
    mask: np.ndarray,
) -> np.ndarray:
    """5x5 standard deviation of the gradient-dispersion measure.

    Inactive grid points are NaN. A single-row panel yields zeros by the
    one-sample convention.
    """
    s, flagged = sensitivity(net, normalizer, feature_panel, layout.vol_columns)
    if s.shape[0] == 1:
        stds = np.zeros(s.shape[1])
    else:
        stds = np.std(s, axis=0, ddof=0)
    stds = np.where(flagged, np.nan, stds)
    table = np.full((5, 5), np.nan)
    table[np.asarray(mask, dtype=bool)] = stds
    return table


def sample_surface_panel(
    n_surfaces: int,
    exotic_kind: str,
    sampler: SamplerConfig,
    master_seed: int,
    mask: np.ndarray = MASK_FULL,
) -> np.ndarray:
    """Feature panel for the sensitivity study: sampled surfaces + options."""
    layout = FeatureLayout.build(exotic_kind, mask)
    rng = substream(master_seed, "sens-panel")
    rows = []
    attempts = 0
    while len(rows) < n_surfaces:
        attempts += 1
        if attempts > 20 * n_surfaces:
            raise RuntimeError("surface panel sampling keeps failing")
        draw = sample_model(sampler, "heston", rng)
        spec = sample_exotic(sampler, exotic_kind, rng)
        try:
            surface = model_surface(draw.params, draw.market, mask)
        except SurfaceInvalidError:
            continue
        rows.append(features_from_surface(layout, surface, spec,
                                          draw.market.spot, draw.market.rate))
    return np.asarray(rows)


def sensitivity_table_to_csv(table: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strike_over_spot"] + [f"T={t:g}" for t in MATURITIES])
    for j, m in enumerate(MONEYNESS):
        row = [f"K={m:g}S"]
        for i in range(5):
            v = table[i, j]
            row.append("" if math.isnan(v) else f"{v:.4f}")
        writer.writerow(row)
    return buf.getvalue()
