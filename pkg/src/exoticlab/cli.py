"""Command-line interface.

Every command takes an optional JSON config file plus flags; flags win over
config values, which win over built-in defaults. All randomness flows from
one mandatory master seed per invocation, so a repeated command with the
same config produces byte-identical primary outputs (timestamps go to
run.log only).

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or config error.
"""

from __future__ import annotations

import datetime
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .bs_surface import MASK_FULL, MASK_SNP19, fit_surface, read_quotes_csv
from .dataset import (
    FeatureLayout,
    generate_training_set,
    training_set_from_csv,
    training_set_to_csv,
)
from .experiments import (
    PAPER_SCALE,
    ControlledConfig,
    MarketDay,
    ModelRiskConfig,
    ParityConfig,
    controlled_experiment,
    days_from_csv,
    days_to_csv,
    make_pseudo_days,
    model_risk_experiment,
    parity_experiment,
    records_to_csv,
    sample_surface_panel,
    scatter_data,
    sensitivity_table,
    sensitivity_table_to_csv,
    train_parity_nets,
)
from .market_models import EXOTIC_KINDS, MODEL_KINDS, MarketState, SamplerConfig
from .mca_calibration import CalibrationBudget
from .neural_net import TrainConfig, load_network, save_network, train
from .pricing_mc import McConfig, NumericError

_MASKS = {"full": MASK_FULL, "snp19": MASK_SNP19}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(doc, dict):
        raise click.UsageError("config file must hold a JSON object")
    return doc


def _resolve(flag, config: dict, key: str, default):
    """Flag value if given, else config value, else the built-in default."""
    if flag is not None:
        return flag
    return config.get(key, default)


def _require_seed(flag, config: dict) -> int:
    seed = _resolve(flag, config, "seed", None)
    if seed is None:
        raise click.UsageError("a master --seed is required")
    return int(seed)


def _write(path: Path, text: str, log: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.append(f"{datetime.datetime.now().isoformat()} wrote {path}")


def _finish(out_dir: Path, log: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.log").write_text("\n".join(log) + "\n")


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
@click.option("--threads", type=int, default=1, show_default=True,
              help="worker thread cap; all reductions stay deterministic")
def main(threads):
    """Exotic option valuation: calibration route vs. surrogate route.

    Reference publication-scale constants (desk-scale defaults are used
    unless overridden): 1,000 scenarios, 20,000 training rows, 50,000 Monte
    Carlo paths, 400,000-row barrier training sets, 200-surface sensitivity
    panels.
    """
    if threads < 1:
        raise click.UsageError("--threads must be >= 1")


@main.command()
@click.option("--model", type=click.Choice(MODEL_KINDS), required=True)
@click.option("--exotic", type=click.Choice(EXOTIC_KINDS), required=True)
@click.option("--n", "n_rows", type=int, default=None, help="rows to generate [1000]")
@click.option("--seed", type=int, default=None)
@click.option("--mask", type=click.Choice(sorted(_MASKS)), default=None, help="[full]")
@click.option("--mode", type=click.Choice(["controlled", "parity"]), default=None)
@click.option("--paths", type=int, default=None, help="Monte Carlo paths [10000]")
@click.option("--steps-per-year", type=int, default=None, help="[120]")
@click.option("--snp-style/--no-snp-style", default=None, help="index-style vol draws")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file")
@click.option("--out", "out_dir", type=str, default="out")
def datagen(model, exotic, n_rows, seed, mask, mode, paths, steps_per_year,
            snp_style, config_path, out_dir):
    """Generate a training set CSV plus its provenance sidecar."""
    config = _load_config(config_path)
    seed = _require_seed(seed, config)
    n_rows = int(_resolve(n_rows, config, "n", 1000))
    mask_name = _resolve(mask, config, "mask", "full")
    mode = _resolve(mode, config, "mode", "controlled")
    if mask_name not in _MASKS:
        raise click.UsageError(f"unknown mask {mask_name!r}")
    if mode not in ("controlled", "parity"):
        raise click.UsageError(f"unknown sampling mode {mode!r}")
    snp = bool(_resolve(snp_style, config, "snpStyle", False))
    try:
        sampler = SamplerConfig.from_json(json.dumps(config.get("sampler", {})))
        sampler = replace(sampler, snp_style=snp, seed=seed)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(f"bad sampler config: {exc}")
    mc = McConfig(
        num_paths=int(_resolve(paths, config, "paths", 10_000)),
        steps_per_year=int(_resolve(steps_per_year, config, "stepsPerYear", 120)),
        seed=seed,
        antithetic=bool(config.get("antithetic", True)),
    )
    log = [f"{datetime.datetime.now().isoformat()} datagen {model}/{exotic} n={n_rows} seed={seed}"]
    try:
        ts = generate_training_set(model, exotic, n_rows, sampler, mc,
                                   mask=_MASKS[mask_name], exotic_mode=mode, seed=seed)
    except (RuntimeError, NumericError) as exc:
        _fail(exc)
    out = Path(out_dir)
    stem = f"train_{model}_{exotic}"
    _write(out / f"{stem}.csv", training_set_to_csv(ts), log)
    _write(out / f"{stem}.provenance.json",
           json.dumps(ts.provenance, indent=2, sort_keys=True) + "\n", log)
    _finish(out, log)
    click.echo(f"{n_rows} rows -> {out / (stem + '.csv')}")


@main.command(name="train")
@click.option("--data", "data_path", type=str, required=True, help="training CSV from datagen")
@click.option("--out", "out_path", type=str, required=True, help="weights JSON path")
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None, help="[5000]")
@click.option("--patience", type=int, default=None, help="[50]")
@click.option("--lr", type=float, default=None, help="[1e-3]")
@click.option("--batch-size", type=int, default=None, help="[256]")
@click.option("--config", "config_path", type=str, default=None)
def train_cmd(data_path, out_path, seed, epochs, patience, lr, batch_size, config_path):
    """Train a surrogate network on a datagen CSV; writes weights + history."""
    config = _load_config(config_path)
    seed = _require_seed(seed, config)
    data_file = Path(data_path)
    if not data_file.exists():
        raise click.UsageError(f"dataset not found: {data_path}")
    sidecar = data_file.with_suffix("").with_suffix(".provenance.json")
    provenance = {}
    if sidecar.exists():
        provenance = json.loads(sidecar.read_text())
    try:
        ts = training_set_from_csv(data_file.read_text(), provenance=provenance)
    except ValueError as exc:
        raise click.UsageError(f"bad training CSV: {exc}")
    cfg = TrainConfig(
        learning_rate=float(_resolve(lr, config, "learningRate", 1e-3)),
        batch_size=int(_resolve(batch_size, config, "batchSize", 256)),
        max_epochs=int(_resolve(epochs, config, "maxEpochs", 5000)),
        patience=int(_resolve(patience, config, "patience", 50)),
        seed=seed,
    )
    log = [f"{datetime.datetime.now().isoformat()} train {data_path} seed={seed}"]
    try:
        result = train(ts.features, ts.targets, cfg)
    except (RuntimeError, ValueError) as exc:
        _fail(exc)
    meta = {
        "exotic_kind": provenance.get("exotic_kind", "unknown"),
        "model_kind": provenance.get("model_kind", "unknown"),
        "feature_names": list(ts.layout.names),
        "mask_points": ts.layout.n_vol_points,
        "training_seed": seed,
        "best_val_mae": result.best_val_mae,
        "best_epoch": result.best_epoch,
    }
    out = Path(out_path)
    _write(out, save_network(result.net, result.normalizer, meta) + "\n", log)
    history = "epoch,train_mae,val_mae\n" + "".join(
        f"{h['epoch']},{h['train_mae']:.12g},{h['val_mae']:.12g}\n" for h in result.history
    )
    _write(out.with_suffix(".history.csv"), history, log)
    _finish(out.parent, log)
    click.echo(f"best val MAE {result.best_val_mae:.6g} (epoch {result.best_epoch}) -> {out}")


@main.group()
def experiment():
    """Run one of the four studies (controlled | parity | modelrisk | sensitivity)."""



def _budget_from(config: dict, seed: int) -> CalibrationBudget:
    return CalibrationBudget(
        n_starts=int(config.get("calibStarts", 8)),
        max_evals_per_start=int(config.get("calibEvals", 400)),
        seed=seed,
    )

def _parse_days(spec_str: str, sampler: SamplerConfig, seed: int) -> list[MarketDay]:
    if spec_str.startswith("pseudo:"):
        try:
            n_days = int(spec_str.split(":", 1)[1])
        except ValueError:
            raise click.UsageError(f"bad day spec {spec_str!r}; use pseudo:<count>")
        return make_pseudo_days(n_days, sampler, seed)
    path = Path(spec_str)
    if not path.exists():
        raise click.UsageError(f"day panel not found: {spec_str}")
    try:
        return days_from_csv(path.read_text())
    except ValueError as exc:
        raise click.UsageError(f"bad day panel: {exc}")


@experiment.command()
@click.option("--exotic", type=click.Choice(EXOTIC_KINDS), required=True)
@click.option("--scale", type=click.Choice(["desk", "paper"]), default="desk",
              help="paper scale: n=1000, N=20000, 50k paths")
@click.option("--n-scenarios", type=int, default=None)
@click.option("--training-rows", type=int, default=None)
@click.option("--paths", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=str, default=None)
@click.option("--out", "out_dir", type=str, default="out")
def controlled(exotic, scale, n_scenarios, training_rows, paths, seed, config_path, out_dir):
    """Error-gap regression: calibrated-model pricing vs the surrogate."""
    config = _load_config(config_path)
    seed = _require_seed(seed, config)
    if scale == "paper":
        base_n, base_rows, base_paths = (PAPER_SCALE["n_scenarios"],
                                         PAPER_SCALE["n_training_rows"],
                                         PAPER_SCALE["num_paths"])
    else:
        base_n, base_rows, base_paths = 50, 4_000, 10_000
    cfg = ControlledConfig(
        exotic_kind=exotic,
        n_scenarios=int(_resolve(n_scenarios, config, "nScenarios", base_n)),
        n_training_rows=int(_resolve(training_rows, config, "trainingRows", base_rows)),
        mc=McConfig(num_paths=int(_resolve(paths, config, "paths", base_paths)),
                    steps_per_year=int(config.get("stepsPerYear", 120)), seed=seed,
                    antithetic=bool(config.get("antithetic", True))),
        sampler=SamplerConfig(seed=seed),
        budget=_budget_from(config, seed),
        train=TrainConfig(seed=seed),
        master_seed=seed,
    )
    log = [f"{datetime.datetime.now().isoformat()} controlled {exotic} seed={seed}"]
    try:
        result = controlled_experiment(cfg)
    except (RuntimeError, NumericError, ValueError) as exc:
        _fail(exc)
    out = Path(out_dir)
    stem = f"controlled_{exotic}"
    _write(out / f"{stem}_records.csv", records_to_csv(result.records), log)
    _write(out / f"{stem}_summary.json",
           json.dumps(result.summary(), indent=2, sort_keys=True) + "\n", log)
    _write(out / f"{stem}_scatter.dat", scatter_data(result.records), log)
    _finish(out, log)
    fit = result.fit_pct
    click.echo(f"Y = {fit.intercept:.4f} + {fit.slope:.4f} X  (t = {fit.t_intercept:.2f}, {fit.t_slope:.2f}), n = {fit.n}")


@experiment.command()
@click.option("--days", "days_spec", type=str, required=True,
              help="pseudo:<n> for synthetic days, or a day-panel CSV path")
@click.option("--training-rows", type=int, default=None, help="[30000] shared by both barrier nets")
@click.option("--paths", type=int, default=None, help="[5000] per training label")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=str, default=None)
@click.option("--out", "out_dir", type=str, default="out")
def parity(days_spec, training_rows, paths, seed, config_path, out_dir):
    """Knock-out + knock-in vs vanilla consistency on market days."""
    config = _load_config(config_path)
    seed = _require_seed(seed, config)
    cfg = ParityConfig(
        n_training_rows=int(_resolve(training_rows, config, "trainingRows", 30_000)),
        mc=McConfig(num_paths=int(_resolve(paths, config, "paths", 5_000)),
                    steps_per_year=int(config.get("stepsPerYear", 120)),
                    seed=seed, antithetic=True),
        pricing_mc=McConfig(num_paths=int(config.get("pricingPaths", 50_000)),
                            steps_per_year=int(config.get("stepsPerYear", 120)),
                            seed=seed, antithetic=True),
        sampler=SamplerConfig(snp_style=True, seed=seed),
        budget=_budget_from(config, seed),
        train=TrainConfig(seed=seed),
        master_seed=seed,
    )
    log = [f"{datetime.datetime.now().isoformat()} parity {days_spec} seed={seed}"]
    try:
        days = _parse_days(days_spec, SamplerConfig(seed=seed), seed)
        nets = train_parity_nets(cfg)
        result = parity_experiment(days, nets, cfg)
    except (RuntimeError, NumericError, ValueError) as exc:
        _fail(exc)
    out = Path(out_dir)
    _write(out / "parity_summary.json",
           json.dumps(result.summary(), indent=2, sort_keys=True) + "\n", log)
    day_rows = ["day,maturity,strike,barrier,calibration_error,vanilla_pct,mca_gap,vfa_gap"]
    day_rows += [
        f"{r['day']},{r['maturity']:.12g},{r['strike']:.12g},{r['barrier']:.12g},"
        f"{r['calibration_error']:.12g},{r['vanilla_pct']:.12g},"
        f"{r['mca_gap']:.12g},{r['vfa_gap']:.12g}"
        for r in result.day_records
    ]
    _write(out / "parity_records.csv", "\n".join(day_rows) + "\n", log)
    if days_spec.startswith("pseudo:"):
        _write(out / "parity_pseudo_days.csv", days_to_csv(days), log)
    _finish(out, log)
    click.echo(f"full-sample MAE: calibration {result.mca_mae_full:.4f} vs surrogate {result.vfa_mae_full:.4f} (% of spot)")


@experiment.command()
@click.option("--exotic", type=click.Choice(EXOTIC_KINDS), required=True)
@click.option("--days", "days_spec", type=str, required=True)
@click.option("--training-rows", type=int, default=None, help="[2000] per model family")
@click.option("--panel-per-day", type=int, default=None, help="[5]")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=str, default=None)
@click.option("--out", "out_dir", type=str, default="out")
def modelrisk(exotic, days_spec, training_rows, panel_per_day, seed, config_path, out_dir):
    """Price differences between two model families' surrogates."""
    config = _load_config(config_path)
    seed = _require_seed(seed, config)
    cfg = ModelRiskConfig(
        exotic_kind=exotic,
        n_training_rows=int(_resolve(training_rows, config, "trainingRows", 2_000)),
        panel_per_day=int(_resolve(panel_per_day, config, "panelPerDay", 5)),
        sampler=SamplerConfig(snp_style=True, seed=seed),
        budget=_budget_from(config, seed),
        train=TrainConfig(seed=seed),
        master_seed=seed,
    )
    log = [f"{datetime.datetime.now().isoformat()} modelrisk {exotic} seed={seed}"]
    try:
        days = _parse_days(days_spec, SamplerConfig(seed=seed), seed)
        result = model_risk_experiment(days, cfg)
    except (RuntimeError, NumericError, ValueError) as exc:
        _fail(exc)
    out = Path(out_dir)
    _write(out / f"modelrisk_{exotic}_summary.json",
           json.dumps(result.summary(), indent=2, sort_keys=True) + "\n", log)
    _finish(out, log)
    click.echo(f"mean diff {result.mean_diff:.4f}, sd {result.std_diff:.4f} (% of spot)")


@experiment.command()
@click.option("--weights", "weights_path", type=str, required=True,
              help="trained network JSON from the train command")
@click.option("--panel", type=int, default=None, help="surfaces to sample [200]")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=str, default=None)
@click.option("--out", "out_dir", type=str, default="out")
def sensitivity(weights_path, panel, seed, config_path, out_dir):
    """Gradient-dispersion table over a sampled surface panel."""
    config = _load_config(config_path)
    seed = _require_seed(seed, config)
    n_panel = int(_resolve(panel, config, "panel", PAPER_SCALE["sensitivity_panel"]))
    path = Path(weights_path)
    if not path.exists():
        raise click.UsageError(f"weights not found: {weights_path}")
    net, normalizer, meta = load_network(path.read_text())
    exotic = meta.get("exotic_kind")
    if exotic not in EXOTIC_KINDS:
        raise click.UsageError("weights metadata lacks a valid exotic kind")
    mask = MASK_FULL if meta.get("mask_points", 25) == 25 else MASK_SNP19
    layout = FeatureLayout.build(exotic, mask)
    log = [f"{datetime.datetime.now().isoformat()} sensitivity {exotic} seed={seed}"]
    try:
        features = sample_surface_panel(n_panel, exotic, SamplerConfig(seed=seed), seed, mask=mask)
        table = sensitivity_table(net, normalizer, layout, features, mask)
    except (RuntimeError, NumericError, ValueError) as exc:
        _fail(exc)
    out = Path(out_dir)
    _write(out / f"sensitivity_{exotic}.csv", sensitivity_table_to_csv(table), log)
    cells = {
        f"T={t:g}|m={m:g}": (None if np.isnan(table[i, j]) else round(float(table[i, j]), 6))
        for i, t in enumerate([1 / 12, 0.25, 0.5, 1.0, 2.0])
        for j, m in enumerate([0.7, 0.85, 1.0, 1.15, 1.3])
    }
    _write(out / f"sensitivity_{exotic}.json",
           json.dumps(cells, indent=2, sort_keys=True) + "\n", log)
    _finish(out, log)
    click.echo(f"sensitivity table -> {out / f'sensitivity_{exotic}.csv'}")


@main.command(name="fit-surface")
@click.option("--quotes", "quotes_path", type=str, required=True, help="quotes CSV")
@click.option("--mask", type=click.Choice(sorted(_MASKS)), default="snp19")
@click.option("--rate", type=float, default=0.02, help="risk-free rate for the day panel")
@click.option("--out", "out_path", type=str, required=True, help="day-panel CSV path")
def fit_surface_cmd(quotes_path, mask, rate, out_path):
    """Fit node vols to option quotes, one surface per quote date."""
    path = Path(quotes_path)
    if not path.exists():
        raise click.UsageError(f"quotes file not found: {quotes_path}")
    try:
        by_date = read_quotes_csv(path.read_text())
    except ValueError as exc:
        raise click.UsageError(str(exc))
    log = [f"{datetime.datetime.now().isoformat()} fit-surface {quotes_path}"]
    days = []
    try:
        for date in sorted(by_date):
            quotes = by_date[date]
            fit = fit_surface(quotes, _MASKS[mask])
            days.append(MarketDay(
                day_id=date,
                surface=fit.surface,
                market=MarketState(spot=quotes[0].spot, rate=rate),
            ))
    except (RuntimeError, NumericError, ValueError) as exc:
        _fail(exc)
    out = Path(out_path)
    _write(out, days_to_csv(days), log)
    _finish(out.parent, log)
    click.echo(f"{len(days)} surface(s) -> {out}")


if __name__ == "__main__":
    main()
